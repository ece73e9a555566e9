#pragma once

// Approximation systems: the concrete system of a total substitution, the top
// approximation, and exhaustive enumeration of imperfect-recall strategy
// classes with their union systems.

#include <cstdint>
#include <map>
#include <memory>
#include <span>
#include <string>
#include <vector>

#include "episynth/kernel.hpp"
#include "episynth/mck.hpp"

namespace episynth {

enum class Info { Pi, Ii };
enum class Consistency { Sc, Nsc };

struct SchemeId {
  enum class Kind { Concrete, Top, Class };
  Kind kind = Kind::Top;
  Info info = Info::Ii;
  Consistency consistency = Consistency::Nsc;

  /// Accepts top, concrete, {ii,pi}-ir-{sc,nsc}. Perfect-recall classes throw
  /// Refusal; anything else throws UsageError.
  static SchemeId parse(std::string_view text);
  std::string name() const;
  bool operator==(const SchemeId&) const = default;
};

/// Desk-scale limits for the exhaustive procedures.
struct Budget {
  size_t max_states = 64;
  size_t max_observations = 8;
  size_t max_actions = 4;
  std::uint64_t max_candidates = std::uint64_t{1} << 20;
  std::uint64_t max_kbp_candidates = std::uint64_t{1} << 16;

  /// Reads EPISYNTH_BUDGET, a comma list of key=value with keys states, obs,
  /// actions, candidates, kbp. Unset keys keep their defaults.
  static Budget from_env();
  static Budget parse(std::string_view text);
};

/// Reachable transition structure: state -> sorted successors.
using Signature = std::map<StateId, std::vector<StateId>>;
Signature component_signature(const Component& c);

/// I(E, P theta) for a total theta. Throws UsageError on unbound variables.
BundleSystem build_concrete(std::shared_ptr<const Environment> env,
                            std::span<const ProtocolTemplate> templates, const Substitution& theta);

/// The top approximation: every action offered by a clause whose guard is
/// satisfiable under theta at the current state.
BundleSystem build_top(std::shared_ptr<const Environment> env,
                       std::span<const ProtocolTemplate> templates, const Substitution& theta);

/// Choice functions are defined over the states reachable in build_top (pi)
/// or their observations (ii). No strategy of the class leaves these states.
struct StrategyFrame {
  Info info = Info::Ii;
  std::vector<StateId> states;                    // sorted
  std::vector<std::vector<std::uint32_t>> domain;  // per agent: obs keys or state ids, sorted
};

struct IRStrategy {
  std::shared_ptr<const StrategyFrame> frame;
  std::vector<std::vector<ActionMask>> choice;  // per agent, aligned with frame->domain
  std::vector<std::uint64_t> succ;              // per frame state: successor bits over frame states
  std::uint64_t reach = 0;                      // frame states reachable under this strategy

  /// Throws UsageError for states outside the frame.
  ActionMask choice_at(size_t agent, StateId s, const Environment& env) const;
  std::vector<StateId> successors(StateId s) const;
  Signature signature() const;
};

/// Which action sets a choice function may return. Satisfiable restricts each
/// value to subsets of the actions offered by the template under theta; All
/// lets it range over every nonempty action set, with the frame taken as the
/// states reachable under arbitrary joint actions.
enum class Codomain { Satisfiable, All };

/// All strategies of the class, in candidate order. Strategies that differ
/// only at points none of their runs visit count once. Throws Refusal when the budget is exceeded.
std::vector<IRStrategy> enumerate_ir_strategies(std::shared_ptr<const Environment> env,
                                                std::span<const ProtocolTemplate> templates,
                                                const Substitution& theta, Info info,
                                                Consistency consistency, const Budget& budget,
                                                ExecPolicy policy = ExecPolicy::Parallel,
                                                Codomain codomain = Codomain::Satisfiable);

/// Serial recursive enumeration that rebuilds every successor set from the
/// kernel primitives. Returns the signatures in the same order.
std::vector<Signature> enumerate_ir_reference(std::shared_ptr<const Environment> env,
                                              std::span<const ProtocolTemplate> templates,
                                              const Substitution& theta, Info info,
                                              Consistency consistency, const Budget& budget,
                                              Codomain codomain = Codomain::Satisfiable);

/// One component per strategy. Throws UsageError on an empty list.
BundleSystem build_union_system(std::shared_ptr<const Environment> env,
                                std::span<const IRStrategy> strategies);

BundleSystem build_scheme(std::shared_ptr<const Environment> env,
                          std::span<const ProtocolTemplate> templates, const Substitution& theta,
                          const SchemeId& scheme, const Budget& budget = Budget::from_env(),
                          ExecPolicy policy = ExecPolicy::Parallel);

}  // namespace episynth
