#include "episynth/kernel.hpp"

#include <algorithm>
#include <sstream>

#include "episynth/errors.hpp"

namespace episynth {

Environment::Environment(std::vector<AgentDecl> agents, std::vector<VarDecl> vars,
                         std::vector<StateId> initial,
                         std::vector<std::vector<StateId>> successors)
    : agents_(std::move(agents)), vars_(std::move(vars)), initial_(std::move(initial)) {
  if (agents_.empty()) throw UsageError("environment needs at least one agent");
  for (size_t v = 0; v < vars_.size(); ++v) {
    if (vars_[v].hi < vars_[v].lo) throw UsageError("empty domain for variable " + vars_[v].name);
    if (!var_by_name_.emplace(vars_[v].name, v).second)
      throw UsageError("duplicate variable " + vars_[v].name);
  }
  strides_.assign(vars_.size(), 1);
  for (size_t v = vars_.size(); v-- > 0;) {
    strides_[v] = num_states_;
    num_states_ *= static_cast<size_t>(vars_[v].size());
    if (num_states_ > (size_t{1} << 31)) throw UsageError("state space too large");
  }

  joint_strides_.assign(agents_.size(), 1);
  for (size_t i = agents_.size(); i-- > 0;) {
    const auto& a = agents_[i];
    if (!agent_by_name_.emplace(a.name, i).second) throw UsageError("duplicate agent " + a.name);
    if (a.actions.empty() || a.actions[0] != kSkip)
      throw UsageError("agent " + a.name + ": first action must be skip");
    if (a.actions.size() > kMaxActionsPerAgent)
      throw UsageError("agent " + a.name + ": too many actions");
    std::set<std::string> seen(a.actions.begin(), a.actions.end());
    if (seen.size() != a.actions.size()) throw UsageError("agent " + a.name + ": duplicate action");
    joint_strides_[i] = num_joint_;
    num_joint_ *= a.actions.size();
  }

  for (StateId s : initial_)
    if (s >= num_states_) throw UsageError("initial state out of range");
  std::sort(initial_.begin(), initial_.end());
  initial_.erase(std::unique(initial_.begin(), initial_.end()), initial_.end());

  if (successors.size() != num_states_ * num_joint_)
    throw UsageError("transition table has wrong size");
  off_.resize(successors.size() + 1);
  size_t total = 0;
  for (size_t k = 0; k < successors.size(); ++k) {
    auto& list = successors[k];
    std::sort(list.begin(), list.end());
    list.erase(std::unique(list.begin(), list.end()), list.end());
    off_[k] = static_cast<std::uint32_t>(total);
    total += list.size();
  }
  off_.back() = static_cast<std::uint32_t>(total);
  succ_.reserve(total);
  for (auto& list : successors) {
    for (StateId t : list)
      if (t >= num_states_) throw UsageError("successor state out of range");
    succ_.insert(succ_.end(), list.begin(), list.end());
  }

  obs_idx_.resize(agents_.size());
  obs_keys_.resize(agents_.size());
  num_obs_.resize(agents_.size());
  for (size_t i = 0; i < agents_.size(); ++i) {
    for (const auto& name : agents_[i].obs_vars) {
      auto v = var_index(name);
      if (!v) throw UsageError("agent " + agents_[i].name + " observes undeclared variable " + name);
      obs_idx_[i].push_back(*v);
    }
    std::sort(obs_idx_[i].begin(), obs_idx_[i].end());
    obs_idx_[i].erase(std::unique(obs_idx_[i].begin(), obs_idx_[i].end()), obs_idx_[i].end());
    size_t n = 1;
    for (size_t v : obs_idx_[i]) n *= static_cast<size_t>(vars_[v].size());
    num_obs_[i] = n;
    auto& keys = obs_keys_[i];
    keys.resize(num_states_);
    for (StateId s = 0; s < num_states_; ++s) {
      std::uint32_t key = 0;
      for (size_t v : obs_idx_[i])
        key = key * static_cast<std::uint32_t>(vars_[v].size()) +
              static_cast<std::uint32_t>(value(s, v) - vars_[v].lo);
      keys[s] = key;
    }
  }
}

std::optional<size_t> Environment::agent_index(std::string_view name) const {
  auto it = agent_by_name_.find(std::string(name));
  if (it == agent_by_name_.end()) return std::nullopt;
  return it->second;
}

std::optional<size_t> Environment::var_index(std::string_view name) const {
  auto it = var_by_name_.find(std::string(name));
  if (it == var_by_name_.end()) return std::nullopt;
  return it->second;
}

std::optional<size_t> Environment::action_index(size_t agent, std::string_view action) const {
  const auto& acts = agents_.at(agent).actions;
  for (size_t k = 0; k < acts.size(); ++k)
    if (acts[k] == action) return k;
  return std::nullopt;
}

std::vector<int> Environment::decode(StateId s) const {
  std::vector<int> out(vars_.size());
  for (size_t v = 0; v < vars_.size(); ++v) out[v] = value(s, v);
  return out;
}

StateId Environment::encode(std::span<const int> values) const {
  if (values.size() != vars_.size()) throw UsageError("valuation has wrong arity");
  size_t s = 0;
  for (size_t v = 0; v < vars_.size(); ++v) {
    if (values[v] < vars_[v].lo || values[v] > vars_[v].hi)
      throw UsageError("value out of domain for " + vars_[v].name);
    s += static_cast<size_t>(values[v] - vars_[v].lo) * strides_[v];
  }
  return static_cast<StateId>(s);
}

JointIndex Environment::joint_index(std::span<const size_t> per_agent) const {
  if (per_agent.size() != agents_.size()) throw UsageError("joint action has wrong arity");
  size_t j = 0;
  for (size_t i = 0; i < agents_.size(); ++i) {
    if (per_agent[i] >= agents_[i].actions.size()) throw UsageError("action index out of range");
    j += per_agent[i] * joint_strides_[i];
  }
  return static_cast<JointIndex>(j);
}

std::vector<size_t> Environment::decode_joint(JointIndex j) const {
  std::vector<size_t> out(agents_.size());
  for (size_t i = 0; i < agents_.size(); ++i)
    out[i] = (j / joint_strides_[i]) % agents_[i].actions.size();
  return out;
}

std::vector<int> Environment::obs_values(size_t agent, std::uint32_t key) const {
  const auto& idx = obs_idx_[agent];
  std::vector<int> out(idx.size());
  for (size_t k = idx.size(); k-- > 0;) {
    const auto& d = vars_[idx[k]];
    out[k] = d.lo + static_cast<int>(key % static_cast<std::uint32_t>(d.size()));
    key /= static_cast<std::uint32_t>(d.size());
  }
  return out;
}

std::string Environment::state_label(StateId s) const {
  std::string out;
  for (size_t v = 0; v < vars_.size(); ++v) {
    if (v) out += ',';
    out += vars_[v].name + "=" + std::to_string(value(s, v));
  }
  return out;
}

std::string Environment::joint_label(JointIndex j) const {
  auto parts = decode_joint(j);
  std::string out = "(";
  for (size_t i = 0; i < parts.size(); ++i) {
    if (i) out += ',';
    out += agents_[i].actions[parts[i]];
  }
  return out + ")";
}

std::vector<std::string> validate_environment(const Environment& env) {
  std::vector<std::string> diags;
  if (env.initial().empty()) diags.push_back("no initial states");
  for (StateId s = 0; s < env.num_states(); ++s) {
    for (JointIndex a = 0; a < env.num_joint_actions(); ++a) {
      auto succ = env.successors(s, a);
      if (succ.empty()) {
        diags.push_back("seriality violated at " + env.state_label(s) + " under " +
                        env.joint_label(a));
      }
      if (a == env.skip_joint() && !(succ.size() == 1 && succ[0] == s)) {
        diags.push_back("skip-identity violated at " + env.state_label(s));
      }
    }
  }
  return diags;
}

Observation observation(const Environment& env, size_t agent, StateId s) {
  if (agent >= env.num_agents()) throw UsageError("unknown agent");
  if (s >= env.num_states()) throw UsageError("unknown state");
  Observation o;
  o.agent = agent;
  for (size_t v : env.obs_var_indices(agent)) o.values.push_back(env.value(s, v));
  return o;
}

FormulaPtr observation_formula(const Environment& env, size_t agent, std::uint32_t key) {
  auto vals = env.obs_values(agent, key);
  auto idx = env.obs_var_indices(agent);
  FormulaPtr out;
  for (size_t k = 0; k < idx.size(); ++k) {
    auto a = fm::atom(env.vars()[idx[k]].name, Cmp::Eq, vals[k]);
    out = out ? fm::conj(out, a) : a;
  }
  return out ? out : fm::truth();
}

namespace {

bool compare(int lhs, Cmp cmp, int rhs) {
  switch (cmp) {
    case Cmp::Eq: return lhs == rhs;
    case Cmp::Le: return lhs <= rhs;
    case Cmp::Ge: return lhs >= rhs;
  }
  return false;
}

}  // namespace

bool eval_state(const Environment& env, const Formula& f, StateId s, const TVarLookup& tvars) {
  switch (f.op) {
    case Op::True: return true;
    case Op::False: return false;
    case Op::Atom: {
      auto v = env.var_index(f.name);
      if (!v) throw UsageError("unknown variable '" + f.name + "'");
      return compare(env.value(s, *v), f.cmp, f.value);
    }
    case Op::TVar: {
      std::optional<bool> b = tvars ? tvars(f.name) : std::nullopt;
      if (!b) throw UsageError("unbound template variable '" + f.name + "'");
      return *b;
    }
    case Op::Not: return !eval_state(env, *f.lhs, s, tvars);
    case Op::And: return eval_state(env, *f.lhs, s, tvars) && eval_state(env, *f.rhs, s, tvars);
    case Op::Or: return eval_state(env, *f.lhs, s, tvars) || eval_state(env, *f.rhs, s, tvars);
    case Op::Implies:
      return !eval_state(env, *f.lhs, s, tvars) || eval_state(env, *f.rhs, s, tvars);
    case Op::Iff: return eval_state(env, *f.lhs, s, tvars) == eval_state(env, *f.rhs, s, tvars);
    default:
      throw UsageError("modal operator in a state formula: " + to_string(f));
  }
}

bool locality_check(const Formula& f, size_t agent, const Environment& env) {
  if (!is_propositional(f)) throw UsageError("locality is only defined for boolean formulas");
  auto obs = env.obs_var_indices(agent);
  for (const auto& name : atom_vars(f)) {
    auto v = env.var_index(name);
    if (!v) throw UsageError("unknown variable '" + name + "'");
    if (std::find(obs.begin(), obs.end(), *v) == obs.end()) return false;
  }
  return true;
}

std::set<std::string> template_vars(const ProtocolTemplate& t) {
  std::set<std::string> out;
  for (const auto& c : t.clauses) {
    auto vs = template_vars(*c.guard);
    out.insert(vs.begin(), vs.end());
  }
  return out;
}

std::map<std::string, std::string> template_owners(const Environment& env,
                                                   std::span<const ProtocolTemplate> templates) {
  std::map<std::string, std::string> out;
  for (const auto& t : templates)
    for (const auto& x : template_vars(t)) out.emplace(x, env.agents().at(t.agent).name);
  return out;
}

std::vector<std::string> validate_templates(const Environment& env,
                                            std::span<const ProtocolTemplate> templates) {
  std::vector<std::string> diags;
  if (templates.size() != env.num_agents()) diags.push_back("need exactly one template per agent");
  std::map<std::string, size_t> owner;
  for (size_t k = 0; k < templates.size(); ++k) {
    const auto& t = templates[k];
    if (t.agent != k) {
      diags.push_back("templates must be in agent order");
      continue;
    }
    const auto& agent = env.agents()[t.agent].name;
    std::set<size_t> actions;
    for (const auto& c : t.clauses) {
      if (c.action >= env.num_actions(t.agent)) {
        diags.push_back("template " + agent + ": action index out of range");
        continue;
      }
      if (!actions.insert(c.action).second)
        diags.push_back("template " + agent + ": action " + env.agents()[t.agent].actions[c.action] +
                        " appears in more than one clause");
      try {
        if (!locality_check(*c.guard, t.agent, env))
          diags.push_back("template " + agent + ": guard '" + to_string(*c.guard) +
                          "' is not local to " + agent);
      } catch (const UsageError& e) {
        diags.push_back("template " + agent + ": " + e.what());
      }
    }
    for (const auto& x : template_vars(t)) {
      auto [it, fresh] = owner.emplace(x, t.agent);
      if (!fresh && it->second != t.agent)
        diags.push_back("template variable " + x + " is shared by agents " +
                        env.agents()[it->second].name + " and " + agent);
    }
  }
  return diags;
}

TVarLookup substitution_lookup(const Environment& env, const Substitution& theta, StateId s) {
  return [&env, &theta, s](const std::string& x) -> std::optional<bool> {
    auto it = theta.find(x);
    if (it == theta.end()) return std::nullopt;
    return eval_state(env, *it->second, s);
  };
}

ActionMask enabled_actions_with(const Environment& env, const ProtocolTemplate& t, StateId s,
                                const TVarLookup& tvars) {
  ActionMask m = 0;
  for (const auto& c : t.clauses)
    if (eval_state(env, *c.guard, s, tvars)) m |= ActionMask{1} << c.action;
  return m ? m : ActionMask{1};
}

ActionMask enabled_actions(const Environment& env, const ProtocolTemplate& t,
                           const Substitution& theta, StateId s) {
  return enabled_actions_with(env, t, s, substitution_lookup(env, theta, s));
}

std::vector<JointIndex> joint_product(const Environment& env, std::span<const ActionMask> masks) {
  std::vector<JointIndex> out;
  std::vector<size_t> pick(env.num_agents(), 0);
  std::vector<std::vector<size_t>> opts(env.num_agents());
  for (size_t i = 0; i < env.num_agents(); ++i) {
    for (size_t a = 0; a < env.num_actions(i); ++a)
      if (masks[i] >> a & 1u) opts[i].push_back(a);
    if (opts[i].empty()) return out;
  }
  std::vector<size_t> idx(env.num_agents(), 0);
  while (true) {
    for (size_t i = 0; i < pick.size(); ++i) pick[i] = opts[i][idx[i]];
    out.push_back(env.joint_index(pick));
    size_t i = env.num_agents();
    while (i-- > 0) {
      if (++idx[i] < opts[i].size()) break;
      idx[i] = 0;
    }
    if (i == static_cast<size_t>(-1)) break;
  }
  std::sort(out.begin(), out.end());
  return out;
}

std::vector<JointIndex> joint_enabled(const Environment& env,
                                      std::span<const ProtocolTemplate> templates,
                                      const Substitution& theta, StateId s) {
  std::vector<ActionMask> masks(env.num_agents(), ActionMask{1});
  for (const auto& t : templates) masks.at(t.agent) = enabled_actions(env, t, theta, s);
  return joint_product(env, masks);
}

namespace {

// Runs fn once per truth assignment to `free` (bit k of the code is free[k]).
template <typename Fn>
void for_each_assignment(const Environment& env, const std::vector<std::string>& free,
                         const Substitution& theta, StateId s, Fn&& fn) {
  if (free.size() > 20) throw UsageError("too many unbound template variables in one guard set");
  for (std::uint32_t code = 0; code < (1u << free.size()); ++code) {
    TVarLookup look = [&](const std::string& x) -> std::optional<bool> {
      auto it = theta.find(x);
      if (it != theta.end()) return eval_state(env, *it->second, s);
      for (size_t k = 0; k < free.size(); ++k)
        if (free[k] == x) return (code >> k & 1u) != 0;
      return std::nullopt;
    };
    if (fn(look)) return;
  }
}

std::vector<std::string> unbound(const std::set<std::string>& vars, const Substitution& theta) {
  std::vector<std::string> out;
  for (const auto& x : vars)
    if (!theta.count(x)) out.push_back(x);
  return out;
}

}  // namespace

bool guard_satisfiable(const Environment& env, const FormulaPtr& guard, StateId s,
                       const Substitution& theta) {
  bool sat = false;
  for_each_assignment(env, unbound(template_vars(*guard), theta), theta, s,
                      [&](const TVarLookup& look) { return sat = eval_state(env, *guard, s, look); });
  return sat;
}

ActionMask satisfiable_actions(const Environment& env, const ProtocolTemplate& t,
                               const Substitution& theta, StateId s) {
  ActionMask m = 0;
  for_each_assignment(env, unbound(template_vars(t), theta), theta, s, [&](const TVarLookup& look) {
    m |= enabled_actions_with(env, t, s, look);
    return false;
  });
  return m;
}

std::vector<std::string> mask_names(const Environment& env, size_t agent, ActionMask m) {
  std::vector<std::string> out;
  for (size_t a = 0; a < env.num_actions(agent); ++a)
    if (m >> a & 1u) out.push_back(env.agents()[agent].actions[a]);
  return out;
}

}  // namespace episynth
