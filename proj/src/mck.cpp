#include "episynth/mck.hpp"

#include <algorithm>
#include <atomic>
#include <deque>

#include "episynth/errors.hpp"

namespace episynth {

Component::Component(const Environment& env, std::string id, std::span<const StateId> initial,
                     const SuccessorFn& successors)
    : id_(std::move(id)), local_(env.num_states(), -1) {
  std::deque<StateId> queue;
  auto discover = [&](StateId s) -> uint32_t {
    if (local_[s] < 0) {
      local_[s] = static_cast<std::int32_t>(states_.size());
      states_.push_back(s);
      queue.push_back(s);
    }
    return static_cast<uint32_t>(local_[s]);
  };
  for (StateId s : initial) initial_.push_back(discover(s));
  std::sort(initial_.begin(), initial_.end());
  initial_.erase(std::unique(initial_.begin(), initial_.end()), initial_.end());

  succ_off_.push_back(0);
  while (!queue.empty()) {
    StateId s = queue.front();
    queue.pop_front();
    auto next = successors(s);
    std::sort(next.begin(), next.end());
    next.erase(std::unique(next.begin(), next.end()), next.end());
    if (next.empty()) throw UsageError("component " + id_ + " has no successor at " + env.state_label(s));
    for (StateId t : next) succ_.push_back(discover(t));
    succ_off_.push_back(static_cast<uint32_t>(succ_.size()));
  }

  std::vector<uint32_t> indeg(states_.size() + 1, 0);
  for (uint32_t t : succ_) ++indeg[t + 1];
  for (size_t k = 1; k < indeg.size(); ++k) indeg[k] += indeg[k - 1];
  pred_off_ = indeg;
  pred_.resize(succ_.size());
  std::vector<uint32_t> fill(pred_off_.begin(), pred_off_.end() - 1);
  for (uint32_t u = 0; u < states_.size(); ++u)
    for (uint32_t t : succ(u)) pred_[fill[t]++] = u;
}

std::vector<StateId> Component::successor_states(StateId s) const {
  std::vector<StateId> out;
  auto l = local(s);
  if (l < 0) return out;
  for (uint32_t t : succ(static_cast<uint32_t>(l))) out.push_back(states_[t]);
  std::sort(out.begin(), out.end());
  return out;
}

std::vector<std::string> validate_bundle(const BundleSystem& sys) {
  std::vector<std::string> diags;
  if (sys.components.empty()) diags.push_back("bundle has no components");
  const Environment& env = *sys.env;
  for (const auto& c : sys.components) {
    for (uint32_t u = 0; u < c.size(); ++u) {
      StateId s = c.state(u);
      for (uint32_t tl : c.succ(u)) {
        StateId t = c.state(tl);
        bool justified = false;
        for (JointIndex a = 0; a < env.num_joint_actions() && !justified; ++a) {
          auto succ = env.successors(s, a);
          justified = std::binary_search(succ.begin(), succ.end(), t);
        }
        if (!justified)
          diags.push_back("component " + c.id() + ": edge " + env.state_label(s) + " -> " +
                          env.state_label(t) + " has no environment transition");
      }
    }
  }
  return diags;
}

std::vector<Point> reachable(const BundleSystem& sys) {
  std::vector<Point> out;
  for (size_t c = 0; c < sys.components.size(); ++c)
    for (StateId s : sys.components[c].states()) out.push_back({c, s});
  return out;
}

std::vector<StateId> reachable_states(const BundleSystem& sys) {
  std::vector<StateId> out;
  for (const auto& c : sys.components) out.insert(out.end(), c.states().begin(), c.states().end());
  std::sort(out.begin(), out.end());
  out.erase(std::unique(out.begin(), out.end()), out.end());
  return out;
}

bool Labeling::at(const BundleSystem& sys, size_t c, StateId s) const {
  if (c >= sys.components.size()) throw UsageError("unknown component");
  auto l = sys.components[c].local(s);
  if (l < 0) throw UsageError("state not reachable in component " + sys.components[c].id());
  return bits_[c][static_cast<size_t>(l)] != 0;
}

std::vector<std::uint8_t> Labeling::state_truth(const BundleSystem& sys) const {
  std::vector<std::uint8_t> out(sys.env->num_states(), 2);
  for (size_t c = 0; c < sys.components.size(); ++c) {
    const auto& comp = sys.components[c];
    for (uint32_t u = 0; u < comp.size(); ++u) {
      auto& v = out[comp.state(u)];
      if (v == 2) v = 1;
      if (!bits_[c][u]) v = 0;
    }
  }
  return out;
}

namespace {

using Bits = std::vector<std::vector<std::uint8_t>>;

class Evaluator {
 public:
  Evaluator(const BundleSystem& sys, ExecPolicy policy)
      : sys_(sys), env_(*sys.env), par_(policy == ExecPolicy::Parallel) {}

  Bits eval(const Formula& f) {
    switch (f.op) {
      case Op::True: return constant(1);
      case Op::False: return constant(0);
      case Op::Atom: return atom(f);
      case Op::TVar:
        throw UsageError("template variable '" + f.name + "' must be substituted before checking");
      case Op::Not: {
        Bits b = eval(*f.lhs);
        negate(b);
        return b;
      }
      case Op::And: case Op::Or: {
        Bits a = eval(*f.lhs);
        Bits b = eval(*f.rhs);
        bool is_and = f.op == Op::And;
        for_each_point([&](size_t c, uint32_t u) {
          a[c][u] = is_and ? (a[c][u] & b[c][u]) : (a[c][u] | b[c][u]);
        });
        return a;
      }
      case Op::AX: case Op::EX: return next(eval(*f.lhs), f.op == Op::AX);
      case Op::AU: return until_all(eval(*f.lhs), eval(*f.rhs));
      case Op::EU: return until_some(eval(*f.lhs), eval(*f.rhs));
      case Op::AR: case Op::ER: {
        // A[a R b] = !E[!a U !b], E[a R b] = !A[!a U !b]
        Bits a = eval(*f.lhs);
        Bits b = eval(*f.rhs);
        negate(a);
        negate(b);
        Bits u = f.op == Op::AR ? until_some(std::move(a), std::move(b))
                                : until_all(std::move(a), std::move(b));
        negate(u);
        return u;
      }
      case Op::K: return know(f.name, eval(*f.lhs));
      default:
        throw UsageError("formula must be normalized before checking");
    }
  }

 private:
  template <typename Fn>
  void for_each_point(Fn&& fn) {
    const auto& comps = sys_.components;
    if (!par_) {
      for (size_t c = 0; c < comps.size(); ++c)
        for (uint32_t u = 0; u < comps[c].size(); ++u) fn(c, u);
      return;
    }
    if (comps.size() == 1) {
      const long n = static_cast<long>(comps[0].size());
#pragma omp parallel for schedule(static)
      for (long u = 0; u < n; ++u) fn(size_t{0}, static_cast<uint32_t>(u));
    } else {
      const long m = static_cast<long>(comps.size());
#pragma omp parallel for schedule(dynamic, 8)
      for (long c = 0; c < m; ++c)
        for (uint32_t u = 0; u < comps[c].size(); ++u) fn(static_cast<size_t>(c), u);
    }
  }

  template <typename Fn>
  void for_each_component(Fn&& fn) {
    const long m = static_cast<long>(sys_.components.size());
    if (!par_ || m == 1) {
      for (long c = 0; c < m; ++c) fn(static_cast<size_t>(c));
      return;
    }
#pragma omp parallel for schedule(dynamic, 4)
    for (long c = 0; c < m; ++c) fn(static_cast<size_t>(c));
  }

  Bits constant(std::uint8_t v) {
    Bits b(sys_.components.size());
    for (size_t c = 0; c < b.size(); ++c) b[c].assign(sys_.components[c].size(), v);
    return b;
  }

  void negate(Bits& b) {
    for_each_point([&](size_t c, uint32_t u) { b[c][u] ^= 1u; });
  }

  Bits atom(const Formula& f) {
    auto v = env_.var_index(f.name);
    if (!v) throw UsageError("unknown variable '" + f.name + "'");
    Bits b = constant(0);
    const size_t var = *v;
    for_each_point([&](size_t c, uint32_t u) {
      int x = env_.value(sys_.components[c].state(u), var);
      bool r = f.cmp == Cmp::Eq ? x == f.value : f.cmp == Cmp::Le ? x <= f.value : x >= f.value;
      b[c][u] = r ? 1 : 0;
    });
    return b;
  }

  Bits next(const Bits& a, bool all) {
    Bits b = constant(0);
    for_each_point([&](size_t c, uint32_t u) {
      const auto& comp = sys_.components[c];
      bool r = all;
      for (uint32_t t : comp.succ(u)) {
        if (all && !a[c][t]) {
          r = false;
          break;
        }
        if (!all && a[c][t]) {
          r = true;
          break;
        }
      }
      b[c][u] = r ? 1 : 0;
    });
    return b;
  }

  // Least fixpoint Z = b | (a & EX Z), backwards from b-points.
  Bits until_some(Bits a, Bits b) {
    for_each_component([&](size_t c) {
      const auto& comp = sys_.components[c];
      auto& z = b[c];
      std::vector<uint32_t> work;
      for (uint32_t u = 0; u < comp.size(); ++u)
        if (z[u]) work.push_back(u);
      while (!work.empty()) {
        uint32_t t = work.back();
        work.pop_back();
        for (uint32_t p : comp.pred(t)) {
          if (!z[p] && a[c][p]) {
            z[p] = 1;
            work.push_back(p);
          }
        }
      }
    });
    return b;
  }

  // Least fixpoint Z = b | (a & AX Z), counting successors not yet in Z.
  Bits until_all(Bits a, Bits b) {
    for_each_component([&](size_t c) {
      const auto& comp = sys_.components[c];
      auto& z = b[c];
      std::vector<uint32_t> pending(comp.size());
      std::vector<uint32_t> work;
      for (uint32_t u = 0; u < comp.size(); ++u) {
        pending[u] = static_cast<uint32_t>(comp.succ(u).size());
        if (z[u]) work.push_back(u);
      }
      while (!work.empty()) {
        uint32_t t = work.back();
        work.pop_back();
        for (uint32_t p : comp.pred(t)) {
          if (z[p]) continue;
          if (--pending[p] == 0 && a[c][p]) {
            z[p] = 1;
            work.push_back(p);
          }
        }
      }
    });
    return b;
  }

  Bits know(const std::string& agent_name, const Bits& a) {
    auto agent = env_.agent_index(agent_name);
    if (!agent) throw UsageError("unknown agent '" + agent_name + "'");
    const size_t i = *agent;
    std::vector<std::atomic<std::uint8_t>> all(env_.num_observations(i));
    for (auto& x : all) x.store(1, std::memory_order_relaxed);
    for_each_point([&](size_t c, uint32_t u) {
      if (!a[c][u]) all[env_.obs_key(i, sys_.components[c].state(u))].store(0, std::memory_order_relaxed);
    });
    Bits b = constant(0);
    for_each_point([&](size_t c, uint32_t u) {
      b[c][u] = all[env_.obs_key(i, sys_.components[c].state(u))].load(std::memory_order_relaxed);
    });
    return b;
  }

  const BundleSystem& sys_;
  const Environment& env_;
  bool par_;
};

Bits reference_eval(const BundleSystem& sys, const Formula& f) {
  const Environment& env = *sys.env;
  const auto& comps = sys.components;
  Bits out(comps.size());
  for (size_t c = 0; c < comps.size(); ++c) out[c].assign(comps[c].size(), 0);
  auto any_succ = [&](const Bits& z, size_t c, uint32_t u) {
    for (uint32_t t : comps[c].succ(u))
      if (z[c][t]) return true;
    return false;
  };
  auto all_succ = [&](const Bits& z, size_t c, uint32_t u) {
    for (uint32_t t : comps[c].succ(u))
      if (!z[c][t]) return false;
    return true;
  };
  auto iterate = [&](auto step) {
    bool changed = true;
    while (changed) {
      changed = false;
      for (size_t c = 0; c < comps.size(); ++c)
        for (uint32_t u = 0; u < comps[c].size(); ++u) {
          std::uint8_t v = step(c, u) ? 1 : 0;
          if (v != out[c][u]) {
            out[c][u] = v;
            changed = true;
          }
        }
    }
  };

  switch (f.op) {
    case Op::True:
      for (auto& b : out) std::fill(b.begin(), b.end(), 1);
      return out;
    case Op::False: return out;
    case Op::Atom: {
      auto v = env.var_index(f.name);
      if (!v) throw UsageError("unknown variable '" + f.name + "'");
      for (size_t c = 0; c < comps.size(); ++c)
        for (uint32_t u = 0; u < comps[c].size(); ++u) {
          int x = env.value(comps[c].state(u), *v);
          out[c][u] = (f.cmp == Cmp::Eq ? x == f.value : f.cmp == Cmp::Le ? x <= f.value : x >= f.value);
        }
      return out;
    }
    case Op::TVar:
      throw UsageError("template variable '" + f.name + "' must be substituted before checking");
    case Op::Not: {
      Bits a = reference_eval(sys, *f.lhs);
      for (auto& b : a)
        for (auto& x : b) x = !x;
      return a;
    }
    case Op::And: case Op::Or: {
      Bits a = reference_eval(sys, *f.lhs);
      Bits b = reference_eval(sys, *f.rhs);
      for (size_t c = 0; c < comps.size(); ++c)
        for (uint32_t u = 0; u < comps[c].size(); ++u)
          out[c][u] = f.op == Op::And ? (a[c][u] && b[c][u]) : (a[c][u] || b[c][u]);
      return out;
    }
    case Op::AX: case Op::EX: {
      Bits a = reference_eval(sys, *f.lhs);
      for (size_t c = 0; c < comps.size(); ++c)
        for (uint32_t u = 0; u < comps[c].size(); ++u)
          out[c][u] = f.op == Op::AX ? all_succ(a, c, u) : any_succ(a, c, u);
      return out;
    }
    case Op::EU: case Op::AU: {
      Bits a = reference_eval(sys, *f.lhs);
      Bits b = reference_eval(sys, *f.rhs);
      bool all = f.op == Op::AU;
      iterate([&](size_t c, uint32_t u) {
        return b[c][u] || (a[c][u] && (all ? all_succ(out, c, u) : any_succ(out, c, u)));
      });
      return out;
    }
    case Op::ER: case Op::AR: {
      // Greatest fixpoint, iterated down from true.
      Bits a = reference_eval(sys, *f.lhs);
      Bits b = reference_eval(sys, *f.rhs);
      for (auto& x : out) std::fill(x.begin(), x.end(), 1);
      bool all = f.op == Op::AR;
      iterate([&](size_t c, uint32_t u) {
        return b[c][u] && (a[c][u] || (all ? all_succ(out, c, u) : any_succ(out, c, u)));
      });
      return out;
    }
    case Op::K: {
      auto agent = env.agent_index(f.name);
      if (!agent) throw UsageError("unknown agent '" + f.name + "'");
      Bits a = reference_eval(sys, *f.lhs);
      auto pts = reachable(sys);
      for (size_t c = 0; c < comps.size(); ++c)
        for (uint32_t u = 0; u < comps[c].size(); ++u) {
          Observation mine = observation(env, *agent, comps[c].state(u));
          bool r = true;
          for (const auto& p : pts) {
            if (observation(env, *agent, p.state) == mine &&
                !a[p.component][static_cast<uint32_t>(comps[p.component].local(p.state))]) {
              r = false;
              break;
            }
          }
          out[c][u] = r;
        }
      return out;
    }
    default:
      throw UsageError("formula must be normalized before checking");
  }
}

}  // namespace

Labeling check_reference(const BundleSystem& sys, const FormulaPtr& f) {
  if (!sys.env) throw UsageError("bundle system without environment");
  return Labeling(reference_eval(sys, *normalize(f)));
}

Labeling check(const BundleSystem& sys, const FormulaPtr& f, ExecPolicy policy) {
  if (!sys.env) throw UsageError("bundle system without environment");
  auto nf = normalize(f);
  return Labeling(Evaluator(sys, policy).eval(*nf));
}

bool models(const BundleSystem& sys, const FormulaPtr& f, ExecPolicy policy) {
  Labeling l = check(sys, f, policy);
  for (size_t c = 0; c < sys.components.size(); ++c)
    for (uint32_t u : sys.components[c].initial())
      if (!l.at_local(c, u)) return false;
  return true;
}

std::vector<Tri> observation_table(const BundleSystem& sys, size_t agent, const Labeling& labeling) {
  const Environment& env = *sys.env;
  std::vector<Tri> out(env.num_observations(agent), Tri::Vacuous);
  for (size_t c = 0; c < sys.components.size(); ++c) {
    const auto& comp = sys.components[c];
    for (uint32_t u = 0; u < comp.size(); ++u) {
      Tri v = labeling.at_local(c, u) ? Tri::True : Tri::False;
      auto& slot = out[env.obs_key(agent, comp.state(u))];
      if (slot == Tri::Vacuous) {
        slot = v;
      } else if (slot != v) {
        throw UsageError("labeling is not constant on an observation class");
      }
    }
  }
  return out;
}

Tri holds_at_observation(const BundleSystem& sys, size_t agent, const Observation& obs,
                         const FormulaPtr& knowledge, ExecPolicy policy) {
  const Environment& env = *sys.env;
  if (agent >= env.num_agents() || obs.agent != agent) throw UsageError("observation/agent mismatch");
  if (knowledge->op != Op::K || knowledge->name != env.agents()[agent].name)
    throw UsageError("expected a knowledge formula of agent " + env.agents()[agent].name);
  auto idx = env.obs_var_indices(agent);
  if (obs.values.size() != idx.size()) throw UsageError("observation has wrong arity");
  std::uint32_t key = 0;
  for (size_t k = 0; k < idx.size(); ++k) {
    const auto& d = env.vars()[idx[k]];
    if (obs.values[k] < d.lo || obs.values[k] > d.hi) return Tri::Vacuous;
    key = key * static_cast<std::uint32_t>(d.size()) + static_cast<std::uint32_t>(obs.values[k] - d.lo);
  }
  Labeling l = check(sys, knowledge, policy);
  return observation_table(sys, agent, l)[key];
}

}  // namespace episynth
