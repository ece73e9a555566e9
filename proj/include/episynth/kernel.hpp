#pragma once

// Environments over finite-domain integer variables, observations as
// projections onto per-agent observable variables, protocol templates and
// their enabled-action semantics.

#include <cstdint>
#include <functional>
#include <map>
#include <optional>
#include <set>
#include <span>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

#include "episynth/formula.hpp"

namespace episynth {

using StateId = std::uint32_t;
/// Bit i set means action i of the agent (index 0 is always `skip`).
using ActionMask = std::uint32_t;
/// Mixed-radix index over agents' action lists, first agent most significant.
using JointIndex = std::uint32_t;

inline constexpr std::string_view kSkip = "skip";
inline constexpr size_t kMaxActionsPerAgent = 32;

struct VarDecl {
  std::string name;
  int lo = 0;
  int hi = 0;
  int size() const { return hi - lo + 1; }
};

struct AgentDecl {
  std::string name;
  std::vector<std::string> actions;  // actions[0] == "skip"
  std::vector<std::string> obs_vars;
};

/// A finite environment. The state space is the full product of the variable
/// domains; StateId is the mixed-radix encoding of a valuation in declaration
/// order, first variable most significant. Transitions are stored explicitly
/// per (state, joint action).
///
/// Construction only checks structure (sizes, names, ranges). The semantic
/// assumptions (seriality, skip identity, nonempty initial set) are reported
/// by validate_environment so that callers can decide what to do with them.
class Environment {
 public:
  /// `successors` is indexed by state * num_joint_actions() + joint.
  Environment(std::vector<AgentDecl> agents, std::vector<VarDecl> vars,
              std::vector<StateId> initial, std::vector<std::vector<StateId>> successors);

  size_t num_agents() const { return agents_.size(); }
  size_t num_vars() const { return vars_.size(); }
  size_t num_states() const { return num_states_; }
  size_t num_joint_actions() const { return num_joint_; }

  const std::vector<AgentDecl>& agents() const { return agents_; }
  const std::vector<VarDecl>& vars() const { return vars_; }
  const std::vector<StateId>& initial() const { return initial_; }

  std::optional<size_t> agent_index(std::string_view name) const;
  std::optional<size_t> var_index(std::string_view name) const;
  std::optional<size_t> action_index(size_t agent, std::string_view action) const;
  size_t num_actions(size_t agent) const { return agents_[agent].actions.size(); }
  /// Indices into vars() of the agent's observable variables, declaration order.
  std::span<const size_t> obs_var_indices(size_t agent) const { return obs_idx_[agent]; }

  int value(StateId s, size_t var) const {
    return vars_[var].lo + static_cast<int>((s / strides_[var]) % vars_[var].size());
  }
  std::vector<int> decode(StateId s) const;
  StateId encode(std::span<const int> values) const;

  JointIndex joint_index(std::span<const size_t> per_agent) const;
  std::vector<size_t> decode_joint(JointIndex j) const;
  JointIndex skip_joint() const { return 0; }

  std::span<const StateId> successors(StateId s, JointIndex a) const {
    size_t k = static_cast<size_t>(s) * num_joint_ + a;
    return {succ_.data() + off_[k], succ_.data() + off_[k + 1]};
  }

  /// Dense key of the agent's observation at s, in [0, num_observations(agent)).
  std::uint32_t obs_key(size_t agent, StateId s) const { return obs_keys_[agent][s]; }
  size_t num_observations(size_t agent) const { return num_obs_[agent]; }
  /// Values of the observable variables for an observation key.
  std::vector<int> obs_values(size_t agent, std::uint32_t key) const;

  std::string state_label(StateId s) const;
  std::string joint_label(JointIndex j) const;

 private:
  std::vector<AgentDecl> agents_;
  std::vector<VarDecl> vars_;
  std::vector<StateId> initial_;
  std::vector<std::size_t> strides_;
  std::size_t num_states_ = 1;
  std::size_t num_joint_ = 1;
  std::vector<std::size_t> joint_strides_;
  std::vector<std::uint32_t> off_;
  std::vector<StateId> succ_;
  std::vector<std::vector<size_t>> obs_idx_;
  std::vector<std::vector<std::uint32_t>> obs_keys_;
  std::vector<size_t> num_obs_;
  std::unordered_map<std::string, size_t> var_by_name_;
  std::unordered_map<std::string, size_t> agent_by_name_;
};

/// Returns one line per violated invariant; empty iff the environment is valid.
std::vector<std::string> validate_environment(const Environment& env);

struct Observation {
  size_t agent = 0;
  std::vector<int> values;  // aligned with obs_var_indices(agent)
  bool operator==(const Observation&) const = default;
};

Observation observation(const Environment& env, size_t agent, StateId s);
/// Characteristic conjunction of var = value atoms for an observation key.
FormulaPtr observation_formula(const Environment& env, size_t agent, std::uint32_t key);

/// Lookup for template variables during evaluation; nullopt means unbound.
using TVarLookup = std::function<std::optional<bool>(const std::string&)>;

/// Evaluates a propositional formula at a state. Throws UsageError on modal
/// operators, unknown variables, or unbound template variables.
bool eval_state(const Environment& env, const Formula& f, StateId s, const TVarLookup& tvars = {});

/// True iff every atom mentions only the agent's observable variables.
/// Template variables are ignored. Throws UsageError on undeclared variables
/// or modal operators.
bool locality_check(const Formula& f, size_t agent, const Environment& env);

struct Clause {
  FormulaPtr guard;
  size_t action = 0;
};

struct ProtocolTemplate {
  size_t agent = 0;
  std::vector<Clause> clauses;
};

std::set<std::string> template_vars(const ProtocolTemplate& t);
/// Template variable -> owning agent name, over all templates.
std::map<std::string, std::string> template_owners(const Environment& env,
                                                   std::span<const ProtocolTemplate> templates);

/// Structural checks: distinct clause actions, local guards, disjoint template
/// variables across agents, one template per agent in agent order.
std::vector<std::string> validate_templates(const Environment& env,
                                            std::span<const ProtocolTemplate> templates);

/// TVarLookup that evaluates bound formulas of theta at state s.
TVarLookup substitution_lookup(const Environment& env, const Substitution& theta, StateId s);

/// en(P_i theta, s): the actions whose guard holds, or {skip} if none does.
ActionMask enabled_actions(const Environment& env, const ProtocolTemplate& t,
                           const Substitution& theta, StateId s);
/// Same, with template variables given as truth values.
ActionMask enabled_actions_with(const Environment& env, const ProtocolTemplate& t, StateId s,
                                const TVarLookup& tvars);

/// en(P theta, s) as the Cartesian product of the per-agent sets.
std::vector<JointIndex> joint_enabled(const Environment& env,
                                      std::span<const ProtocolTemplate> templates,
                                      const Substitution& theta, StateId s);
std::vector<JointIndex> joint_product(const Environment& env, std::span<const ActionMask> masks);

/// Whether some truth assignment to the template variables left unbound by
/// theta makes the guard true at s.
bool guard_satisfiable(const Environment& env, const FormulaPtr& guard, StateId s,
                       const Substitution& theta);

/// Actions offered at s under a partial substitution: those of clauses whose
/// guard is satisfiable, plus skip when the implicit clause (all guards
/// false) is satisfiable.
ActionMask satisfiable_actions(const Environment& env, const ProtocolTemplate& t,
                               const Substitution& theta, StateId s);

std::vector<std::string> mask_names(const Environment& env, size_t agent, ActionMask m);

}  // namespace episynth
