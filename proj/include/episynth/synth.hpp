#pragma once

// Ordered synthesis of sound local proposition specifications, final
// verification of substitutions, and the exhaustive finder for
// knowledge-based program implementations.

#include <map>
#include <memory>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include "episynth/approx.hpp"
#include "episynth/formula.hpp"
#include "episynth/kernel.hpp"
#include "episynth/mck.hpp"

namespace episynth {

struct OrderDecl {
  enum class Rel { Lt, Le, Eq };
  std::string lhs;
  Rel rel = Rel::Lt;
  std::string rhs;
};

/// Equivalence classes of the pre-order generated by `decls`, least first.
/// Throws UsageError with a witness pair when the declarations are cyclic
/// through a strict step or leave two variables unrelated.
std::vector<std::set<std::string>> partition_order(const std::set<std::string>& vars,
                                                   const std::vector<OrderDecl>& decls);

struct EpistemicSpec {
  std::shared_ptr<const Environment> env;
  std::vector<ProtocolTemplate> templates;
  std::map<std::string, FormulaPtr> kappa;  // template variable -> K[i] psi
  std::vector<FormulaPtr> extra;            // checked after synthesis only
  std::vector<std::set<std::string>> order;
};

/// Checks kappa covers the template variables exactly and each kappa is a
/// knowledge formula of the owning agent. Throws UsageError.
void validate_spec(const EpistemicSpec& spec);

/// Representative state with the given observation (other variables at their
/// lower bounds). Only meaningful for formulas local to the agent.
StateId observation_state(const Environment& env, size_t agent, std::uint32_t key);

/// Disjunction of the characteristic conjunctions of the observations marked
/// True; false when there are none.
FormulaPtr table_formula(const Environment& env, size_t agent, const std::vector<Tri>& table);

/// Interval coalescing over one observable variable. Returns nullopt when no
/// single-variable formula agrees with the table. Vacuous entries are
/// unconstrained.
std::optional<FormulaPtr> simplify_table(const Environment& env, size_t agent,
                                         const std::vector<Tri>& table);

struct Extraction {
  std::string variable;
  size_t agent = 0;
  std::vector<Tri> table;  // per observation key of the agent
  FormulaPtr raw;
  FormulaPtr simplified;   // agrees with raw off Vacuous entries; raw when simplification failed
  bool simplifier_used = false;
};

Extraction extract_local_formula(const BundleSystem& sys, size_t agent, const std::string& variable,
                                 const FormulaPtr& kappa, ExecPolicy policy = ExecPolicy::Parallel);

struct StageRecord {
  std::set<std::string> variables;
  std::string scheme;
  size_t components = 0;
  size_t reachable_states = 0;
  std::vector<Extraction> extractions;
  bool equivalence_holds = false;  // stage system |= AG(theta(x) <=> kappa(x)) for all x
  double seconds = 0;
};

struct Verdict {
  std::string role;  // "kappa", "kbp" or "extra"
  std::string variable;
  FormulaPtr formula;
  bool holds = false;
  std::optional<StateId> witness;
};

struct SynthesisReport {
  std::vector<StageRecord> stages;
  Substitution theta;
  std::vector<Verdict> verdicts;
  size_t final_reachable_states = 0;
  bool kappa_verified() const;
  bool all_verified() const;
};

/// Runs the stages in order; each stage extends theta from the scheme's
/// system for the previous substitution. Throws Refusal when a kappa lies
/// outside the positive fragment or the scheme refuses.
SynthesisReport synthesize(const EpistemicSpec& spec, const SchemeId& scheme,
                           const Budget& budget = Budget::from_env(),
                           ExecPolicy policy = ExecPolicy::Parallel);

enum class VerifyMode { Slp, Kbp };

/// Model checks AG(theta(x) => kappa(x) theta) (or <=> for Kbp) for every
/// variable and every extra formula under theta on the concrete system. The
/// witness of a failing AG formula is a reachable state violating its body,
/// otherwise an initial state.
std::vector<Verdict> verify_implementation(const EpistemicSpec& spec, const Substitution& theta,
                                           VerifyMode mode = VerifyMode::Slp,
                                           ExecPolicy policy = ExecPolicy::Parallel);

struct KbpImplementation {
  Substitution theta;                             // observation disjunctions
  std::map<std::string, std::vector<Tri>> tables;  // Vacuous at unreachable observations
  std::map<std::string, FormulaPtr> simplified;
};

struct KbpSearch {
  std::vector<KbpImplementation> implementations;
  std::uint64_t candidates = 0;  // complete tables examined
};

/// Exhaustive search over observation truth tables. Table entries are only
/// branched on when a reachable state needs them, so candidates that differ
/// on unreachable observations are explored once and reported with false
/// there. Throws Refusal past budget.max_kbp_candidates.
KbpSearch kbp_find(const EpistemicSpec& spec, const Budget& budget = Budget::from_env(),
                   ExecPolicy policy = ExecPolicy::Parallel);

}  // namespace episynth
