#pragma once

// Shared fixtures for the test suites: small hand-built environments, random
// models, random formulas, and a path-enumeration oracle for CTLK.

#include <functional>
#include <memory>
#include <random>
#include <string>
#include <vector>

#include "episynth/approx.hpp"
#include "episynth/dsl.hpp"
#include "episynth/mck.hpp"

namespace episynth::fixtures {

struct Model {
  std::shared_ptr<const Environment> env;
  std::vector<ProtocolTemplate> templates;
};

/// Builds a model from source text; the spec parts are available through
/// `expand(parse_model(text))` when needed.
Model model_from_text(const std::string& text);

/// Single agent, states s=0,1,2; a: 0->1, b: 0->2, 1 and 2 absorb.
/// Template `x -> a ; !x -> b`.
Model three_state();

/// One agent observing nothing, s in 0..1, `a` toggles s; template `x -> a`.
Model one_action();

/// Random environment with 4 or 6 states over vars a (0..1 or 0..2) and b
/// (0..1), agents A and B, 1-2 non-skip actions each, and templates over the
/// template variables x_A, x_B (and sometimes z_A).
Model random_model(std::mt19937_64& rng);

/// Random total or partial substitution of local formulas over the model's
/// template variables. `keep` is the probability that a variable is bound.
Substitution random_theta(std::mt19937_64& rng, const Model& m, double keep);

/// Random formula in the positive fragment.
FormulaPtr random_ctlk_plus(std::mt19937_64& rng, const Environment& env, int depth);
/// Random formula over every operator, including => and <=>.
FormulaPtr random_ctlk(std::mt19937_64& rng, const Environment& env, int depth);

/// Component whose successors at each state are a random nonempty subset of
/// the environment successors.
Component random_component(std::mt19937_64& rng, const Environment& env, const std::string& id);

/// Truth at every point by explicit path enumeration: E-until and E-release
/// search simple paths and lassos, A-forms are their duals, K compares
/// observations across all components. Works on the formula as written.
std::vector<std::vector<bool>> path_oracle(const BundleSystem& sys, const FormulaPtr& f);

}  // namespace episynth::fixtures
