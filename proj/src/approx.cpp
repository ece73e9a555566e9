#include "episynth/approx.hpp"

#include <algorithm>
#include <bit>
#include <cstdlib>
#include <deque>
#include <set>

#include "episynth/errors.hpp"

namespace episynth {

namespace {

void require_templates(const Environment& env, std::span<const ProtocolTemplate> templates) {
  if (templates.size() != env.num_agents())
    throw UsageError("need exactly one protocol template per agent");
  for (size_t k = 0; k < templates.size(); ++k)
    if (templates[k].agent != k) throw UsageError("templates must be in agent order");
}

std::vector<std::string> all_template_vars(std::span<const ProtocolTemplate> templates) {
  std::set<std::string> out;
  for (const auto& t : templates) {
    auto vs = template_vars(t);
    out.insert(vs.begin(), vs.end());
  }
  return {out.begin(), out.end()};
}

std::vector<StateId> successors_for(const Environment& env, std::span<const ActionMask> masks,
                                    StateId s) {
  std::vector<StateId> out;
  for (JointIndex j : joint_product(env, masks)) {
    auto succ = env.successors(s, j);
    out.insert(out.end(), succ.begin(), succ.end());
  }
  std::sort(out.begin(), out.end());
  out.erase(std::unique(out.begin(), out.end()), out.end());
  return out;
}

ActionMask full_mask(const Environment& env, size_t agent) {
  size_t n = env.num_actions(agent);
  return n >= 32 ? ~ActionMask{0} : ((ActionMask{1} << n) - 1);
}

std::vector<ActionMask> nonempty_submasks(ActionMask m) {
  std::vector<ActionMask> out;
  for (ActionMask sub = m; sub; sub = (sub - 1) & m) out.push_back(sub);
  std::reverse(out.begin(), out.end());
  return out;
}

std::vector<StateId> frame_states(const std::shared_ptr<const Environment>& env,
                                  std::span<const ProtocolTemplate> templates,
                                  const Substitution& theta, Codomain codomain) {
  if (codomain == Codomain::Satisfiable) {
    auto sys = build_top(env, templates, theta);
    auto states = sys.components[0].states();
    std::sort(states.begin(), states.end());
    return states;
  }
  std::vector<ActionMask> all(env->num_agents());
  for (size_t i = 0; i < all.size(); ++i) all[i] = full_mask(*env, i);
  Component c(*env, "all", env->initial(),
              [&](StateId s) { return successors_for(*env, all, s); });
  auto states = c.states();
  std::sort(states.begin(), states.end());
  return states;
}

// Per agent, per frame state: the actions a choice function may offer there.
std::vector<std::vector<ActionMask>> allowed_actions(const Environment& env,
                                                     std::span<const ProtocolTemplate> templates,
                                                     const Substitution& theta,
                                                     const std::vector<StateId>& states,
                                                     Codomain codomain) {
  std::vector<std::vector<ActionMask>> out(env.num_agents());
  for (size_t i = 0; i < env.num_agents(); ++i)
    for (StateId s : states)
      out[i].push_back(codomain == Codomain::All ? full_mask(env, i)
                                                 : satisfiable_actions(env, templates[i], theta, s));
  return out;
}

std::shared_ptr<StrategyFrame> make_frame(const Environment& env, Info info,
                                          std::vector<StateId> states) {
  auto frame = std::make_shared<StrategyFrame>();
  frame->info = info;
  frame->states = std::move(states);
  frame->domain.resize(env.num_agents());
  for (size_t i = 0; i < env.num_agents(); ++i) {
    auto& d = frame->domain[i];
    for (StateId s : frame->states) d.push_back(info == Info::Ii ? env.obs_key(i, s) : s);
    std::sort(d.begin(), d.end());
    d.erase(std::unique(d.begin(), d.end()), d.end());
  }
  return frame;
}

std::uint32_t memory_value(const Environment& env, Info info, size_t agent, StateId s) {
  return info == Info::Ii ? env.obs_key(agent, s) : s;
}

size_t domain_index(const std::vector<std::uint32_t>& domain, std::uint32_t m) {
  return static_cast<size_t>(std::lower_bound(domain.begin(), domain.end(), m) - domain.begin());
}

void check_budget(const Environment& env, const StrategyFrame& frame, const Budget& budget) {
  if (frame.states.size() > budget.max_states || frame.states.size() > 64)
    throw Refusal("strategy enumeration over " + std::to_string(frame.states.size()) +
                  " reachable states exceeds the budget of " + std::to_string(budget.max_states));
  for (size_t i = 0; i < env.num_agents(); ++i) {
    if (env.num_actions(i) > budget.max_actions)
      throw Refusal("agent " + env.agents()[i].name + " has " + std::to_string(env.num_actions(i)) +
                    " actions, budget is " + std::to_string(budget.max_actions));
    if (frame.info == Info::Ii && frame.domain[i].size() > budget.max_observations)
      throw Refusal("agent " + env.agents()[i].name + " has " +
                    std::to_string(frame.domain[i].size()) + " reachable observations, budget is " +
                    std::to_string(budget.max_observations));
  }
}

// Slot = (agent, domain value); options are the nonempty subsets of the
// actions allowed at every frame state carrying that memory value.
struct Slots {
  std::vector<size_t> first;  // per agent: index of its first slot
  std::vector<std::vector<ActionMask>> options;
  std::uint64_t total = 1;
};

Slots make_slots(const Environment& env, const StrategyFrame& frame,
                 const std::vector<std::vector<ActionMask>>& allowed, const Budget& budget) {
  Slots slots;
  for (size_t i = 0; i < env.num_agents(); ++i) {
    slots.first.push_back(slots.options.size());
    std::vector<ActionMask> per_value(frame.domain[i].size(), 0);
    for (size_t r = 0; r < frame.states.size(); ++r)
      per_value[domain_index(frame.domain[i], memory_value(env, frame.info, i, frame.states[r]))] |=
          allowed[i][r];
    for (ActionMask m : per_value) slots.options.push_back(nonempty_submasks(m));
  }
  for (const auto& o : slots.options) {
    if (slots.total > budget.max_candidates / o.size())
      throw Refusal("strategy enumeration needs more than " + std::to_string(budget.max_candidates) +
                    " candidates");
    slots.total *= o.size();
  }
  return slots;
}

}  // namespace

SchemeId SchemeId::parse(std::string_view text) {
  SchemeId id;
  if (text == "top") return id;
  if (text == "concrete") {
    id.kind = Kind::Concrete;
    return id;
  }
  auto dash1 = text.find('-');
  auto dash2 = dash1 == std::string_view::npos ? dash1 : text.find('-', dash1 + 1);
  if (dash2 == std::string_view::npos) throw UsageError("unknown scheme '" + std::string(text) + "'");
  auto a = text.substr(0, dash1);
  auto b = text.substr(dash1 + 1, dash2 - dash1 - 1);
  auto c = text.substr(dash2 + 1);
  if ((a != "ii" && a != "pi") || (b != "ir" && b != "pr") || (c != "sc" && c != "nsc"))
    throw UsageError("unknown scheme '" + std::string(text) + "'");
  if (b == "pr")
    throw Refusal("scheme " + std::string(text) +
                  " uses perfect-recall strategies; their strategy spaces are infinite and the "
                  "tree-automaton emptiness checks they need are not implemented. Use top, "
                  "ii-ir-sc, ii-ir-nsc, pi-ir-sc or pi-ir-nsc");
  id.kind = Kind::Class;
  id.info = a == "ii" ? Info::Ii : Info::Pi;
  id.consistency = c == "sc" ? Consistency::Sc : Consistency::Nsc;
  return id;
}

std::string SchemeId::name() const {
  switch (kind) {
    case Kind::Concrete: return "concrete";
    case Kind::Top: return "top";
    case Kind::Class: break;
  }
  return std::string(info == Info::Ii ? "ii" : "pi") + "-ir-" +
         (consistency == Consistency::Sc ? "sc" : "nsc");
}

Budget Budget::parse(std::string_view text) {
  Budget b;
  size_t pos = 0;
  while (pos < text.size()) {
    auto end = text.find(',', pos);
    if (end == std::string_view::npos) end = text.size();
    auto item = text.substr(pos, end - pos);
    pos = end + 1;
    if (item.empty()) continue;
    auto eq = item.find('=');
    if (eq == std::string_view::npos) throw UsageError("budget entry '" + std::string(item) + "' needs key=value");
    std::string key(item.substr(0, eq));
    std::string val(item.substr(eq + 1));
    char* stop = nullptr;
    unsigned long long v = std::strtoull(val.c_str(), &stop, 10);
    if (val.empty() || *stop != '\0') throw UsageError("budget value '" + val + "' is not a number");
    if (key == "states") b.max_states = v;
    else if (key == "obs") b.max_observations = v;
    else if (key == "actions") b.max_actions = v;
    else if (key == "candidates") b.max_candidates = v;
    else if (key == "kbp") b.max_kbp_candidates = v;
    else throw UsageError("unknown budget key '" + key + "'");
  }
  return b;
}

Budget Budget::from_env() {
  const char* v = std::getenv("EPISYNTH_BUDGET");
  return v ? parse(v) : Budget{};
}

Signature component_signature(const Component& c) {
  Signature out;
  for (StateId s : c.states()) out.emplace(s, c.successor_states(s));
  return out;
}

BundleSystem build_concrete(std::shared_ptr<const Environment> env,
                            std::span<const ProtocolTemplate> templates, const Substitution& theta) {
  require_templates(*env, templates);
  for (const auto& x : all_template_vars(templates))
    if (!theta.count(x)) throw UsageError("substitution leaves template variable '" + x + "' unbound");
  const Environment& e = *env;
  Component c(e, "concrete", e.initial(), [&](StateId s) {
    std::vector<ActionMask> masks(e.num_agents());
    for (size_t i = 0; i < masks.size(); ++i) masks[i] = enabled_actions(e, templates[i], theta, s);
    return successors_for(e, masks, s);
  });
  BundleSystem sys{std::move(env), {}};
  sys.components.push_back(std::move(c));
  return sys;
}

BundleSystem build_top(std::shared_ptr<const Environment> env,
                       std::span<const ProtocolTemplate> templates, const Substitution& theta) {
  require_templates(*env, templates);
  const Environment& e = *env;
  Component c(e, "top", e.initial(), [&](StateId s) {
    std::vector<ActionMask> masks(e.num_agents());
    for (size_t i = 0; i < masks.size(); ++i) masks[i] = satisfiable_actions(e, templates[i], theta, s);
    return successors_for(e, masks, s);
  });
  BundleSystem sys{std::move(env), {}};
  sys.components.push_back(std::move(c));
  return sys;
}

ActionMask IRStrategy::choice_at(size_t agent, StateId s, const Environment& env) const {
  if (!std::binary_search(frame->states.begin(), frame->states.end(), s))
    throw UsageError("state " + env.state_label(s) + " is outside the strategy frame");
  const auto& d = frame->domain.at(agent);
  return choice[agent][domain_index(d, memory_value(env, frame->info, agent, s))];
}

std::vector<StateId> IRStrategy::successors(StateId s) const {
  std::vector<StateId> out;
  auto it = std::lower_bound(frame->states.begin(), frame->states.end(), s);
  if (it == frame->states.end() || *it != s) return out;
  std::uint64_t bits = succ[static_cast<size_t>(it - frame->states.begin())];
  while (bits) {
    int k = std::countr_zero(bits);
    out.push_back(frame->states[static_cast<size_t>(k)]);
    bits &= bits - 1;
  }
  return out;
}

Signature IRStrategy::signature() const {
  Signature out;
  for (size_t r = 0; r < frame->states.size(); ++r)
    if (reach >> r & 1u) out.emplace(frame->states[r], successors(frame->states[r]));
  return out;
}

std::vector<IRStrategy> enumerate_ir_strategies(std::shared_ptr<const Environment> env,
                                                std::span<const ProtocolTemplate> templates,
                                                const Substitution& theta, Info info,
                                                Consistency consistency, const Budget& budget,
                                                ExecPolicy policy, Codomain codomain) {
  require_templates(*env, templates);
  const Environment& e = *env;
  auto frame = make_frame(e, info, frame_states(env, templates, theta, codomain));
  check_budget(e, *frame, budget);
  const auto& states = frame->states;
  const size_t n = states.size();
  const size_t agents = e.num_agents();
  auto allowed = allowed_actions(e, templates, theta, states, codomain);
  Slots slots = make_slots(e, *frame, allowed, budget);

  auto index_of = [&](StateId t) -> int {
    auto it = std::lower_bound(states.begin(), states.end(), t);
    return it != states.end() && *it == t ? static_cast<int>(it - states.begin()) : -1;
  };

  // Slot of (agent, frame state).
  std::vector<std::vector<size_t>> slot_of(agents, std::vector<size_t>(n));
  for (size_t i = 0; i < agents; ++i)
    for (size_t r = 0; r < n; ++r)
      slot_of[i][r] = slots.first[i] + domain_index(frame->domain[i], memory_value(e, info, i, states[r]));

  // Successor bits per (frame state, joint action). Joints that leave the
  // frame are never offered by a candidate.
  const size_t joints = e.num_joint_actions();
  std::vector<std::vector<size_t>> joint_actions(joints);
  for (JointIndex j = 0; j < joints; ++j) joint_actions[j] = e.decode_joint(j);
  std::vector<std::uint64_t> succ_bits(n * joints, 0);
  for (size_t r = 0; r < n; ++r)
    for (JointIndex j = 0; j < joints; ++j)
      for (StateId t : e.successors(states[r], j))
        if (int k = index_of(t); k >= 0) succ_bits[r * joints + j] |= std::uint64_t{1} << k;

  std::uint64_t init_bits = 0;
  for (StateId s : e.initial()) init_bits |= std::uint64_t{1} << index_of(s);

  auto successors_under = [&](size_t r, auto&& mask_of) {
    std::uint64_t bits = 0;
    for (JointIndex j = 0; j < joints; ++j) {
      bool ok = true;
      for (size_t i = 0; i < agents && ok; ++i) ok = (mask_of(i) >> joint_actions[j][i]) & 1u;
      if (ok) bits |= succ_bits[r * joints + j];
    }
    return bits;
  };

  // Successor sets allowed by some truth completion of theta, per frame state.
  std::vector<std::vector<std::uint64_t>> sc_sets(n);
  if (consistency == Consistency::Sc) {
    std::vector<std::string> free;
    for (const auto& x : all_template_vars(templates))
      if (!theta.count(x)) free.push_back(x);
    if (free.size() > 20) throw Refusal("too many unbound template variables for consistency checks");
    for (size_t r = 0; r < n; ++r) {
      for (std::uint32_t code = 0; code < (1u << free.size()); ++code) {
        TVarLookup look = [&](const std::string& x) -> std::optional<bool> {
          auto it = theta.find(x);
          if (it != theta.end()) return eval_state(e, *it->second, states[r]);
          for (size_t k = 0; k < free.size(); ++k)
            if (free[k] == x) return (code >> k & 1u) != 0;
          return std::nullopt;
        };
        std::vector<ActionMask> en(agents);
        for (size_t i = 0; i < agents; ++i) en[i] = enabled_actions_with(e, templates[i], states[r], look);
        sc_sets[r].push_back(successors_under(r, [&](size_t i) { return en[i]; }));
      }
      std::sort(sc_sets[r].begin(), sc_sets[r].end());
      sc_sets[r].erase(std::unique(sc_sets[r].begin(), sc_sets[r].end()), sc_sets[r].end());
    }
  }

  const size_t nslots = slots.options.size();
  auto decode = [&](std::uint64_t idx, std::vector<ActionMask>& masks) {
    for (size_t k = nslots; k-- > 0;) {
      const auto& o = slots.options[k];
      masks[k] = o[idx % o.size()];
      idx /= o.size();
    }
  };

  struct Hit {
    std::uint64_t idx;
    std::vector<std::uint64_t> key;  // reach, then the choices at slots a reachable state uses
  };

  auto evaluate = [&](std::uint64_t idx, std::vector<ActionMask>& masks, std::vector<Hit>& hits) {
    decode(idx, masks);
    std::vector<std::uint64_t> key(nslots + 1, 0);
    std::uint64_t reach = init_bits, todo = init_bits;
    while (todo) {
      size_t r = static_cast<size_t>(std::countr_zero(todo));
      todo &= todo - 1;
      std::uint64_t bits = successors_under(r, [&](size_t i) { return masks[slot_of[i][r]]; });
      if (!bits) return;
      if (consistency == Consistency::Sc &&
          !std::binary_search(sc_sets[r].begin(), sc_sets[r].end(), bits))
        return;
      for (size_t i = 0; i < agents; ++i) key[slot_of[i][r] + 1] = masks[slot_of[i][r]];
      todo |= bits & ~reach;
      reach |= bits;
    }
    key[0] = reach;
    hits.push_back({idx, std::move(key)});
  };

  std::vector<Hit> hits;
  const auto total = static_cast<long long>(slots.total);
  if (policy == ExecPolicy::Serial) {
    std::vector<ActionMask> masks(nslots);
    for (long long idx = 0; idx < total; ++idx) evaluate(static_cast<std::uint64_t>(idx), masks, hits);
  } else {
#pragma omp parallel
    {
      std::vector<Hit> local;
      std::vector<ActionMask> masks(nslots);
#pragma omp for schedule(static) nowait
      for (long long idx = 0; idx < total; ++idx) evaluate(static_cast<std::uint64_t>(idx), masks, local);
#pragma omp critical
      hits.insert(hits.end(), std::make_move_iterator(local.begin()), std::make_move_iterator(local.end()));
    }
    std::sort(hits.begin(), hits.end(), [](const Hit& a, const Hit& b) { return a.idx < b.idx; });
  }

  std::vector<IRStrategy> out;
  std::set<std::vector<std::uint64_t>> seen;
  std::vector<ActionMask> masks(nslots);
  for (auto& h : hits) {
    if (!seen.insert(h.key).second) continue;
    decode(h.idx, masks);
    IRStrategy st;
    st.frame = frame;
    st.reach = h.key[0];
    st.choice.resize(agents);
    for (size_t i = 0; i < agents; ++i) {
      size_t end = i + 1 < agents ? slots.first[i + 1] : nslots;
      st.choice[i].assign(masks.begin() + static_cast<long>(slots.first[i]),
                          masks.begin() + static_cast<long>(end));
    }
    st.succ.resize(n);
    for (size_t r = 0; r < n; ++r)
      st.succ[r] = successors_under(r, [&](size_t i) { return masks[slot_of[i][r]]; });
    out.push_back(std::move(st));
  }
  return out;
}

std::vector<Signature> enumerate_ir_reference(std::shared_ptr<const Environment> env,
                                              std::span<const ProtocolTemplate> templates,
                                              const Substitution& theta, Info info,
                                              Consistency consistency, const Budget& budget,
                                              Codomain codomain) {
  require_templates(*env, templates);
  const Environment& e = *env;
  auto frame = make_frame(e, info, frame_states(env, templates, theta, codomain));
  check_budget(e, *frame, budget);
  auto allowed = allowed_actions(e, templates, theta, frame->states, codomain);
  Slots slots = make_slots(e, *frame, allowed, budget);
  auto free_vars = [&] {
    std::vector<std::string> free;
    for (const auto& x : all_template_vars(templates))
      if (!theta.count(x)) free.push_back(x);
    return free;
  }();

  std::vector<Signature> out;
  std::set<std::pair<Signature, std::map<std::pair<size_t, std::uint32_t>, ActionMask>>> seen;
  std::vector<ActionMask> pick(slots.options.size());

  auto mask_at = [&](size_t agent, StateId s) {
    const auto& d = frame->domain[agent];
    return pick[slots.first[agent] + domain_index(d, memory_value(e, info, agent, s))];
  };

  auto leaf = [&] {
    std::map<StateId, std::vector<StateId>> sigma;
    for (StateId s : frame->states) {
      std::vector<ActionMask> masks(e.num_agents());
      for (size_t i = 0; i < masks.size(); ++i) masks[i] = mask_at(i, s);
      sigma[s] = successors_for(e, masks, s);
    }
    std::set<StateId> reached(e.initial().begin(), e.initial().end());
    std::deque<StateId> queue(e.initial().begin(), e.initial().end());
    while (!queue.empty()) {
      StateId s = queue.front();
      queue.pop_front();
      for (StateId t : sigma[s])
        if (reached.insert(t).second) queue.push_back(t);
    }
    Signature sig;
    for (StateId s : reached) {
      if (sigma[s].empty()) return;
      if (consistency == Consistency::Sc) {
        bool found = false;
        for (std::uint32_t code = 0; code < (1u << free_vars.size()) && !found; ++code) {
          Substitution full = theta;
          for (size_t k = 0; k < free_vars.size(); ++k)
            full[free_vars[k]] = (code >> k & 1u) ? fm::truth() : fm::falsity();
          std::vector<StateId> want;
          for (JointIndex j : joint_enabled(e, templates, full, s))
            for (StateId t : e.successors(s, j)) want.push_back(t);
          std::sort(want.begin(), want.end());
          want.erase(std::unique(want.begin(), want.end()), want.end());
          found = want == sigma[s];
        }
        if (!found) return;
      }
      sig[s] = sigma[s];
    }
    std::map<std::pair<size_t, std::uint32_t>, ActionMask> used;
    for (StateId s : reached)
      for (size_t i = 0; i < e.num_agents(); ++i) used[{i, memory_value(e, info, i, s)}] = mask_at(i, s);
    if (seen.emplace(sig, used).second) out.push_back(std::move(sig));
  };

  auto recurse = [&](auto&& self, size_t k) -> void {
    if (k == slots.options.size()) {
      leaf();
      return;
    }
    for (ActionMask m : slots.options[k]) {
      pick[k] = m;
      self(self, k + 1);
    }
  };
  recurse(recurse, 0);
  return out;
}

BundleSystem build_union_system(std::shared_ptr<const Environment> env,
                                std::span<const IRStrategy> strategies) {
  if (strategies.empty()) throw UsageError("strategy class is empty");
  BundleSystem sys{env, {}};
  sys.components.reserve(strategies.size());
  for (size_t k = 0; k < strategies.size(); ++k) {
    const auto& st = strategies[k];
    sys.components.emplace_back(*env, "sigma" + std::to_string(k), env->initial(),
                                [&](StateId s) { return st.successors(s); });
  }
  return sys;
}

BundleSystem build_scheme(std::shared_ptr<const Environment> env,
                          std::span<const ProtocolTemplate> templates, const Substitution& theta,
                          const SchemeId& scheme, const Budget& budget, ExecPolicy policy) {
  switch (scheme.kind) {
    case SchemeId::Kind::Concrete: return build_concrete(std::move(env), templates, theta);
    case SchemeId::Kind::Top: return build_top(std::move(env), templates, theta);
    case SchemeId::Kind::Class: break;
  }
  auto strategies =
      enumerate_ir_strategies(env, templates, theta, scheme.info, scheme.consistency, budget, policy);
  return build_union_system(std::move(env), strategies);
}

}  // namespace episynth
