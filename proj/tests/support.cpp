#include "support.hpp"

#include <algorithm>
#include <set>

#include "episynth/errors.hpp"

namespace episynth::fixtures {

namespace {

bool coin(std::mt19937_64& rng, double p) { return std::bernoulli_distribution(p)(rng); }
int uniform(std::mt19937_64& rng, int lo, int hi) { return std::uniform_int_distribution<int>(lo, hi)(rng); }

FormulaPtr random_atom(std::mt19937_64& rng, const Environment& env, std::span<const size_t> vars) {
  if (vars.empty() || coin(rng, 0.1)) return coin(rng, 0.5) ? fm::truth() : fm::falsity();
  const auto& d = env.vars()[vars[uniform(rng, 0, static_cast<int>(vars.size()) - 1)]];
  Cmp c = static_cast<Cmp>(uniform(rng, 0, 2));
  return fm::atom(d.name, c, uniform(rng, d.lo, d.hi));
}

std::vector<size_t> all_vars(const Environment& env) {
  std::vector<size_t> v(env.num_vars());
  for (size_t k = 0; k < v.size(); ++k) v[k] = k;
  return v;
}

FormulaPtr random_local(std::mt19937_64& rng, const Environment& env, size_t agent) {
  auto obs = env.obs_var_indices(agent);
  auto a = random_atom(rng, env, obs);
  switch (uniform(rng, 0, 3)) {
    case 0: return a;
    case 1: return fm::neg(a);
    case 2: return fm::conj(a, random_atom(rng, env, obs));
    default: return fm::disj(a, random_atom(rng, env, obs));
  }
}

FormulaPtr gen(std::mt19937_64& rng, const Environment& env, int depth, bool positive, bool restrict) {
  auto vars = all_vars(env);
  if (depth <= 0 || coin(rng, 0.25)) {
    auto a = random_atom(rng, env, vars);
    return coin(rng, 0.3) ? fm::neg(a) : a;
  }
  // Ops are chosen so that A and K appear at positive, E at negative polarity.
  std::vector<int> choices = {0, 1, 2, 3};
  if (!restrict || positive) choices.insert(choices.end(), {10, 11, 12, 13, 14, 15, 16});
  if (!restrict || !positive) choices.insert(choices.end(), {20, 21, 22, 23, 24});
  if (!restrict) choices.push_back(4);
  int op = choices[uniform(rng, 0, static_cast<int>(choices.size()) - 1)];
  auto sub = [&](bool pol) { return gen(rng, env, depth - 1, pol, restrict); };
  switch (op) {
    case 0: return fm::conj(sub(positive), sub(positive));
    case 1: return fm::disj(sub(positive), sub(positive));
    case 2: return fm::neg(sub(!positive));
    case 3: return fm::implies(sub(!positive), sub(positive));
    case 4: return fm::iff(sub(positive), sub(positive));
    case 10: return fm::unary(Op::AX, sub(positive));
    case 11: return fm::unary(Op::AF, sub(positive));
    case 12: return fm::unary(Op::AG, sub(positive));
    case 13: return fm::binary(Op::AU, sub(positive), sub(positive));
    case 14: return fm::binary(Op::AR, sub(positive), sub(positive));
    case 15:
    case 16: return fm::know(env.agents()[uniform(rng, 0, static_cast<int>(env.num_agents()) - 1)].name, sub(positive));
    case 20: return fm::unary(Op::EX, sub(positive));
    case 21: return fm::unary(Op::EF, sub(positive));
    case 22: return fm::unary(Op::EG, sub(positive));
    case 23: return fm::binary(Op::EU, sub(positive), sub(positive));
    default: return fm::binary(Op::ER, sub(positive), sub(positive));
  }
}

class Oracle {
 public:
  explicit Oracle(const BundleSystem& sys) : sys_(sys), env_(*sys.env) {}

  using Bits = std::vector<std::vector<bool>>;

  Bits eval(const Formula& f) {
    switch (f.op) {
      case Op::True: return fill(true);
      case Op::False: return fill(false);
      case Op::Atom: return map_state([&](StateId s) { return eval_state(env_, f, s); });
      case Op::Not: return lift1(eval(*f.lhs), [](bool a) { return !a; });
      case Op::And: return lift2(eval(*f.lhs), eval(*f.rhs), [](bool a, bool b) { return a && b; });
      case Op::Or: return lift2(eval(*f.lhs), eval(*f.rhs), [](bool a, bool b) { return a || b; });
      case Op::Implies: return lift2(eval(*f.lhs), eval(*f.rhs), [](bool a, bool b) { return !a || b; });
      case Op::Iff: return lift2(eval(*f.lhs), eval(*f.rhs), [](bool a, bool b) { return a == b; });
      case Op::EX: return next(eval(*f.lhs), true);
      case Op::AX: return next(eval(*f.lhs), false);
      case Op::EU: return exists_until(eval(*f.lhs), eval(*f.rhs));
      case Op::ER: return exists_release(eval(*f.lhs), eval(*f.rhs));
      case Op::EF: return exists_until(fill(true), eval(*f.lhs));
      case Op::EG: return exists_release(fill(false), eval(*f.lhs));
      case Op::AU: return negate(exists_release(negate(eval(*f.lhs)), negate(eval(*f.rhs))));
      case Op::AR: return negate(exists_until(negate(eval(*f.lhs)), negate(eval(*f.rhs))));
      case Op::AF: return negate(exists_release(fill(false), negate(eval(*f.lhs))));
      case Op::AG: return negate(exists_until(fill(true), negate(eval(*f.lhs))));
      case Op::K: return know(*env_.agent_index(f.name), eval(*f.lhs));
      default: throw UsageError("oracle: unsupported operator");
    }
  }

 private:
  Bits fill(bool v) const {
    Bits b(sys_.components.size());
    for (size_t c = 0; c < b.size(); ++c) b[c].assign(sys_.components[c].size(), v);
    return b;
  }
  template <class F>
  Bits map_state(F fn) const {
    Bits b = fill(false);
    for (size_t c = 0; c < b.size(); ++c)
      for (uint32_t l = 0; l < b[c].size(); ++l) b[c][l] = fn(sys_.components[c].state(l));
    return b;
  }
  template <class F>
  static Bits lift1(Bits a, F fn) {
    for (auto& row : a)
      for (size_t k = 0; k < row.size(); ++k) row[k] = fn(row[k]);
    return a;
  }
  template <class F>
  static Bits lift2(Bits a, const Bits& b, F fn) {
    for (size_t c = 0; c < a.size(); ++c)
      for (size_t k = 0; k < a[c].size(); ++k) a[c][k] = fn(a[c][k], b[c][k]);
    return a;
  }
  static Bits negate(Bits a) { return lift1(std::move(a), [](bool v) { return !v; }); }

  Bits next(const Bits& a, bool exists) const {
    Bits out = fill(false);
    for (size_t c = 0; c < out.size(); ++c)
      for (uint32_t l = 0; l < out[c].size(); ++l) {
        bool any = false, all = true;
        for (auto t : sys_.components[c].succ(l)) {
          any = any || a[c][t];
          all = all && a[c][t];
        }
        out[c][l] = exists ? any : all;
      }
    return out;
  }

  // Some simple path f..f g.
  bool until_from(size_t c, uint32_t l, const Bits& f, const Bits& g, std::vector<char>& on_path) const {
    if (g[c][l]) return true;
    if (!f[c][l]) return false;
    on_path[l] = 1;
    bool found = false;
    for (auto t : sys_.components[c].succ(l))
      if (!on_path[t] && until_from(c, t, f, g, on_path)) {
        found = true;
        break;
      }
    on_path[l] = 0;
    return found;
  }
  Bits exists_until(const Bits& f, const Bits& g) const {
    Bits out = fill(false);
    for (size_t c = 0; c < out.size(); ++c) {
      std::vector<char> on_path(out[c].size(), 0);
      for (uint32_t l = 0; l < out[c].size(); ++l) out[c][l] = until_from(c, l, f, g, on_path);
    }
    return out;
  }

  // Some path with g at every position up to and including the first f, or
  // g forever (a lasso inside g).
  bool release_from(size_t c, uint32_t l, const Bits& f, const Bits& g, std::vector<char>& on_path) const {
    if (!g[c][l]) return false;
    if (f[c][l]) return true;
    on_path[l] = 1;
    bool found = false;
    for (auto t : sys_.components[c].succ(l))
      if (on_path[t] || release_from(c, t, f, g, on_path)) {
        found = true;
        break;
      }
    on_path[l] = 0;
    return found;
  }
  Bits exists_release(const Bits& f, const Bits& g) const {
    Bits out = fill(false);
    for (size_t c = 0; c < out.size(); ++c) {
      std::vector<char> on_path(out[c].size(), 0);
      for (uint32_t l = 0; l < out[c].size(); ++l) out[c][l] = release_from(c, l, f, g, on_path);
    }
    return out;
  }

  Bits know(size_t agent, const Bits& a) const {
    Bits out = fill(false);
    for (size_t c = 0; c < out.size(); ++c)
      for (uint32_t l = 0; l < out[c].size(); ++l) {
        auto mine = observation(env_, agent, sys_.components[c].state(l));
        bool all = true;
        for (size_t d = 0; d < out.size() && all; ++d)
          for (uint32_t m = 0; m < out[d].size() && all; ++m)
            if (observation(env_, agent, sys_.components[d].state(m)) == mine) all = a[d][m];
        out[c][l] = all;
      }
    return out;
  }

  const BundleSystem& sys_;
  const Environment& env_;
};

}  // namespace

Model model_from_text(const std::string& text) {
  auto m = expand(parse_model(text));
  return {m.env, m.templates};
}

Model three_state() {
  return model_from_text(R"(
agents A
var s : 0..2
obs A : s
actions A : a b
rule [a] when s = 0 : s' = 1
rule [b] when s = 0 : s' = 2
rule [a] when s >= 1
rule [b] when s >= 1
init s = 0
template A { x -> a ; !x -> b }
)");
}

Model one_action() {
  return model_from_text(R"(
agents A
var s : 0..1
actions A : a
rule [a] when s = 0 : s' = 1
rule [a] when s = 1 : s' = 0
init s = 0
template A { x -> a }
)");
}

Model random_model(std::mt19937_64& rng) {
  std::vector<VarDecl> vars = {{"a", 0, uniform(rng, 1, 2)}, {"b", 0, 1}};
  std::vector<AgentDecl> agents(2);
  agents[0].name = "A";
  agents[1].name = "B";
  agents[0].obs_vars = {"a"};
  agents[1].obs_vars = coin(rng, 0.3) ? std::vector<std::string>{"a", "b"} : std::vector<std::string>{"b"};
  for (auto& ag : agents) {
    ag.actions = {"skip", "m"};
    if (coin(rng, 0.5)) ag.actions.push_back("n");
  }
  const size_t nstates = static_cast<size_t>(vars[0].size() * vars[1].size());
  const size_t njoint = agents[0].actions.size() * agents[1].actions.size();
  std::vector<std::vector<StateId>> succ(nstates * njoint);
  for (size_t s = 0; s < nstates; ++s) {
    succ[s * njoint].push_back(static_cast<StateId>(s));
    for (size_t j = 1; j < njoint; ++j) {
      auto& out = succ[s * njoint + j];
      for (size_t t = 0; t < nstates; ++t)
        if (coin(rng, 0.3)) out.push_back(static_cast<StateId>(t));
      if (out.empty()) out.push_back(static_cast<StateId>(uniform(rng, 0, static_cast<int>(nstates) - 1)));
    }
  }
  std::vector<StateId> initial;
  for (size_t s = 0; s < nstates; ++s)
    if (coin(rng, 0.25)) initial.push_back(static_cast<StateId>(s));
  if (initial.empty()) initial.push_back(static_cast<StateId>(uniform(rng, 0, static_cast<int>(nstates) - 1)));
  auto env = std::make_shared<Environment>(agents, vars, initial, succ);

  Model m{env, {}};
  for (size_t i = 0; i < 2; ++i) {
    ProtocolTemplate t;
    t.agent = i;
    std::vector<std::string> tvars = {i == 0 ? "x_A" : "x_B"};
    if (i == 0 && coin(rng, 0.3)) tvars.push_back("z_A");
    for (size_t a = 1; a < agents[i].actions.size(); ++a) {
      if (a > 1 && coin(rng, 0.2)) continue;
      auto x = fm::tvar(tvars[uniform(rng, 0, static_cast<int>(tvars.size()) - 1)]);
      FormulaPtr g;
      switch (uniform(rng, 0, 4)) {
        case 0: g = x; break;
        case 1: g = fm::neg(x); break;
        case 2: g = fm::conj(x, random_local(rng, *env, i)); break;
        case 3: g = fm::disj(fm::neg(x), random_local(rng, *env, i)); break;
        default: g = fm::conj(fm::neg(x), random_local(rng, *env, i)); break;
      }
      t.clauses.push_back({g, a});
    }
    m.templates.push_back(std::move(t));
  }
  return m;
}

Substitution random_theta(std::mt19937_64& rng, const Model& m, double keep) {
  Substitution theta;
  for (const auto& t : m.templates)
    for (const auto& x : template_vars(t))
      if (coin(rng, keep)) theta[x] = random_local(rng, *m.env, t.agent);
  return theta;
}

FormulaPtr random_ctlk_plus(std::mt19937_64& rng, const Environment& env, int depth) {
  return gen(rng, env, depth, true, true);
}

FormulaPtr random_ctlk(std::mt19937_64& rng, const Environment& env, int depth) {
  return gen(rng, env, depth, true, false);
}

Component random_component(std::mt19937_64& rng, const Environment& env, const std::string& id) {
  std::vector<std::vector<StateId>> choice(env.num_states());
  for (StateId s = 0; s < env.num_states(); ++s) {
    std::set<StateId> all;
    for (JointIndex j = 0; j < env.num_joint_actions(); ++j)
      for (auto t : env.successors(s, j)) all.insert(t);
    for (auto t : all)
      if (coin(rng, 0.5)) choice[s].push_back(t);
    if (choice[s].empty()) {
      auto it = all.begin();
      std::advance(it, uniform(rng, 0, static_cast<int>(all.size()) - 1));
      choice[s].push_back(*it);
    }
  }
  std::vector<StateId> init;
  for (auto s : env.initial())
    if (coin(rng, 0.6)) init.push_back(s);
  if (init.empty()) init.push_back(env.initial().front());
  return Component(env, id, init, [choice](StateId s) { return choice[s]; });
}

std::vector<std::vector<bool>> path_oracle(const BundleSystem& sys, const FormulaPtr& f) {
  return Oracle(sys).eval(*f);
}

}  // namespace episynth::fixtures
