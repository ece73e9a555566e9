#include "episynth/synth.hpp"

#include <algorithm>
#include <chrono>

#include "episynth/errors.hpp"

namespace episynth {

std::vector<std::set<std::string>> partition_order(const std::set<std::string>& vars,
                                                   const std::vector<OrderDecl>& decls) {
  std::vector<std::string> names(vars.begin(), vars.end());
  const size_t n = names.size();
  auto index = [&](const std::string& x) {
    auto it = std::lower_bound(names.begin(), names.end(), x);
    if (it == names.end() || *it != x) throw UsageError("order mentions unknown template variable '" + x + "'");
    return static_cast<size_t>(it - names.begin());
  };
  std::vector<std::vector<char>> le(n, std::vector<char>(n, 0));
  for (size_t i = 0; i < n; ++i) le[i][i] = 1;
  std::vector<std::pair<size_t, size_t>> strict;
  for (const auto& d : decls) {
    size_t a = index(d.lhs), b = index(d.rhs);
    le[a][b] = 1;
    if (d.rel == OrderDecl::Rel::Eq) le[b][a] = 1;
    if (d.rel == OrderDecl::Rel::Lt) strict.emplace_back(a, b);
  }
  for (size_t k = 0; k < n; ++k)
    for (size_t i = 0; i < n; ++i)
      if (le[i][k])
        for (size_t j = 0; j < n; ++j)
          if (le[k][j]) le[i][j] = 1;
  for (auto [a, b] : strict)
    if (le[b][a])
      throw UsageError("order is inconsistent: " + names[a] + " < " + names[b] + " but also " +
                       names[b] + " <= " + names[a]);
  for (size_t i = 0; i < n; ++i)
    for (size_t j = i + 1; j < n; ++j)
      if (!le[i][j] && !le[j][i])
        throw UsageError("order is not total: " + names[i] + " and " + names[j] + " are unrelated");

  std::vector<std::pair<size_t, std::set<std::string>>> classes;
  std::vector<char> done(n, 0);
  for (size_t i = 0; i < n; ++i) {
    if (done[i]) continue;
    std::set<std::string> cls;
    for (size_t j = 0; j < n; ++j)
      if (le[i][j] && le[j][i]) {
        cls.insert(names[j]);
        done[j] = 1;
      }
    size_t below = 0;
    for (size_t k = 0; k < n; ++k) below += le[k][i];
    classes.emplace_back(below, std::move(cls));
  }
  std::sort(classes.begin(), classes.end());
  std::vector<std::set<std::string>> out;
  for (auto& c : classes) out.push_back(std::move(c.second));
  return out;
}

namespace {

size_t owner_of(const EpistemicSpec& spec, const std::string& x) {
  for (const auto& t : spec.templates)
    if (template_vars(t).count(x)) return t.agent;
  throw UsageError("'" + x + "' is not a template variable");
}

FormulaPtr ag(FormulaPtr f) { return fm::unary(Op::AG, std::move(f)); }

FormulaPtr substituted(const FormulaPtr& f, const Substitution& theta, const std::string& what) {
  auto r = apply_substitution(f, theta);
  if (!r.unbound.empty())
    throw UsageError(what + " mentions template variable '" + *r.unbound.begin() +
                     "' which is not bound at this point");
  return r.formula;
}

double seconds_since(std::chrono::steady_clock::time_point t0) {
  return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
}

}  // namespace

void validate_spec(const EpistemicSpec& spec) {
  if (!spec.env) throw UsageError("specification has no environment");
  auto diags = validate_templates(*spec.env, spec.templates);
  if (!diags.empty()) throw ModelError(diags);
  std::set<std::string> vars;
  for (const auto& t : spec.templates) {
    auto vs = template_vars(t);
    vars.insert(vs.begin(), vs.end());
  }
  for (const auto& x : vars)
    if (!spec.kappa.count(x)) throw UsageError("no knowledge condition for template variable '" + x + "'");
  for (const auto& [x, k] : spec.kappa) {
    if (!vars.count(x)) throw UsageError("knowledge condition for unknown template variable '" + x + "'");
    auto owner = spec.env->agents()[owner_of(spec, x)].name;
    if (k->op != Op::K) throw UsageError("knowledge condition of '" + x + "' must have the form K[agent] f");
    if (k->name != owner)
      throw UsageError("template variable '" + x + "' belongs to " + owner + " but its condition is K[" +
                       k->name + "]");
  }
}

StateId observation_state(const Environment& env, size_t agent, std::uint32_t key) {
  std::vector<int> vals(env.num_vars());
  for (size_t v = 0; v < vals.size(); ++v) vals[v] = env.vars()[v].lo;
  auto idx = env.obs_var_indices(agent);
  auto ov = env.obs_values(agent, key);
  for (size_t k = 0; k < idx.size(); ++k) vals[idx[k]] = ov[k];
  return env.encode(vals);
}

FormulaPtr table_formula(const Environment& env, size_t agent, const std::vector<Tri>& table) {
  FormulaPtr out;
  for (std::uint32_t key = 0; key < table.size(); ++key) {
    if (table[key] != Tri::True) continue;
    auto f = observation_formula(env, agent, key);
    out = out ? fm::disj(out, f) : f;
  }
  return out ? out : fm::falsity();
}

std::optional<FormulaPtr> simplify_table(const Environment& env, size_t agent,
                                         const std::vector<Tri>& table) {
  if (std::find(table.begin(), table.end(), Tri::True) == table.end()) return fm::falsity();
  if (std::find(table.begin(), table.end(), Tri::False) == table.end()) return fm::truth();

  auto idx = env.obs_var_indices(agent);
  std::optional<FormulaPtr> best;
  size_t best_runs = 0;
  for (size_t k = 0; k < idx.size(); ++k) {
    const auto& d = env.vars()[idx[k]];
    // per value: 0 unconstrained, 1 true, 2 false, 3 both
    std::vector<char> seen(static_cast<size_t>(d.size()), 0);
    for (std::uint32_t key = 0; key < table.size(); ++key)
      if (table[key] != Tri::Vacuous)
        seen[static_cast<size_t>(env.obs_values(agent, key)[k] - d.lo)] |= table[key] == Tri::True ? 1 : 2;
    if (std::find(seen.begin(), seen.end(), 3) != seen.end()) continue;

    // an unconstrained block joins its true neighbours unless a false value borders it
    std::vector<char> in(seen.size(), 0);
    for (size_t v = 0; v < seen.size();) {
      if (seen[v] != 0) {
        in[v] = seen[v] == 1;
        ++v;
        continue;
      }
      size_t w = v;
      while (w < seen.size() && seen[w] == 0) ++w;
      bool left = v == 0 || seen[v - 1] == 1;
      bool right = w == seen.size() || seen[w] == 1;
      for (size_t u = v; u < w; ++u) in[u] = left && right;
      v = w;
    }

    FormulaPtr f;
    size_t runs = 0;
    for (int a = d.lo; a <= d.hi; ++a) {
      if (!in[static_cast<size_t>(a - d.lo)]) continue;
      int b = a;
      while (b < d.hi && in[static_cast<size_t>(b + 1 - d.lo)]) ++b;
      FormulaPtr run;
      if (a == b) run = fm::atom(d.name, Cmp::Eq, a);
      else if (a == d.lo) run = fm::atom(d.name, Cmp::Le, b);
      else if (b == d.hi) run = fm::atom(d.name, Cmp::Ge, a);
      else run = fm::conj(fm::atom(d.name, Cmp::Ge, a), fm::atom(d.name, Cmp::Le, b));
      f = f ? fm::disj(f, run) : run;
      ++runs;
      a = b;
    }
    if (!best || runs < best_runs) {
      best = f;
      best_runs = runs;
    }
  }
  return best;
}

Extraction extract_local_formula(const BundleSystem& sys, size_t agent, const std::string& variable,
                                 const FormulaPtr& kappa, ExecPolicy policy) {
  const Environment& env = *sys.env;
  Extraction ex;
  ex.variable = variable;
  ex.agent = agent;
  ex.table = observation_table(sys, agent, check(sys, kappa, policy));
  ex.raw = table_formula(env, agent, ex.table);
  ex.simplified = ex.raw;
  if (auto s = simplify_table(env, agent, ex.table)) {
    bool same = true;
    for (std::uint32_t key = 0; key < ex.table.size() && same; ++key) {
      if (ex.table[key] == Tri::Vacuous) continue;
      StateId s0 = observation_state(env, agent, key);
      same = eval_state(env, **s, s0) == eval_state(env, *ex.raw, s0);
    }
    if (same) {
      ex.simplified = *s;
      ex.simplifier_used = true;
    }
  }
  return ex;
}

bool SynthesisReport::kappa_verified() const {
  return std::all_of(verdicts.begin(), verdicts.end(),
                     [](const Verdict& v) { return v.role == "extra" || v.holds; });
}

bool SynthesisReport::all_verified() const {
  return std::all_of(verdicts.begin(), verdicts.end(), [](const Verdict& v) { return v.holds; });
}

SynthesisReport synthesize(const EpistemicSpec& spec, const SchemeId& scheme, const Budget& budget,
                           ExecPolicy policy) {
  validate_spec(spec);
  for (const auto& [x, k] : spec.kappa)
    if (!is_ctlk_plus(k))
      throw Refusal("knowledge condition of '" + x + "' is outside the positive fragment: " + to_string(k));
  std::set<std::string> ordered;
  for (const auto& cls : spec.order) ordered.insert(cls.begin(), cls.end());
  for (const auto& [x, k] : spec.kappa)
    if (!ordered.count(x)) throw UsageError("template variable '" + x + "' is missing from the order");

  SynthesisReport report;
  for (const auto& cls : spec.order) {
    auto t0 = std::chrono::steady_clock::now();
    BundleSystem sys = build_scheme(spec.env, spec.templates, report.theta, scheme, budget, policy);
    StageRecord rec;
    rec.variables = cls;
    rec.scheme = scheme.name();
    rec.components = sys.components.size();
    rec.reachable_states = reachable_states(sys).size();
    Substitution fresh;
    std::vector<FormulaPtr> kappas;
    for (const auto& x : cls) {
      auto kx = substituted(spec.kappa.at(x), report.theta, "knowledge condition of '" + x + "'");
      rec.extractions.push_back(extract_local_formula(sys, owner_of(spec, x), x, kx, policy));
      fresh[x] = rec.extractions.back().simplified;
      kappas.push_back(kx);
    }
    rec.equivalence_holds = true;
    size_t k = 0;
    for (const auto& x : cls)
      rec.equivalence_holds = rec.equivalence_holds && models(sys, ag(fm::iff(fresh[x], kappas[k++])), policy);
    report.theta.insert(fresh.begin(), fresh.end());
    rec.seconds = seconds_since(t0);
    report.stages.push_back(std::move(rec));
  }
  report.verdicts = verify_implementation(spec, report.theta, VerifyMode::Slp, policy);
  report.final_reachable_states =
      build_concrete(spec.env, spec.templates, report.theta).components[0].size();
  return report;
}

std::vector<Verdict> verify_implementation(const EpistemicSpec& spec, const Substitution& theta,
                                           VerifyMode mode, ExecPolicy policy) {
  BundleSystem sys = build_concrete(spec.env, spec.templates, theta);
  const auto& comp = sys.components[0];

  auto judge = [&](Verdict v) {
    v.holds = models(sys, v.formula, policy);
    if (!v.holds) {
      const Formula& f = *v.formula;
      if (f.op == Op::AG || (f.op == Op::AR && f.lhs->op == Op::False)) {
        const auto& body = f.op == Op::AG ? f.lhs : f.rhs;
        auto lab = check(sys, body, policy);
        for (uint32_t u = 0; u < comp.size() && !v.witness; ++u)
          if (!lab.at_local(0, u)) v.witness = comp.state(u);
      } else {
        auto lab = check(sys, v.formula, policy);
        for (uint32_t u : comp.initial())
          if (!lab.at_local(0, u)) {
            v.witness = comp.state(u);
            break;
          }
      }
    }
    return v;
  };

  std::vector<Verdict> out;
  for (const auto& [x, k] : spec.kappa) {
    auto it = theta.find(x);
    if (it == theta.end()) throw UsageError("substitution leaves '" + x + "' unbound");
    auto kx = substituted(k, theta, "knowledge condition of '" + x + "'");
    Verdict v;
    v.role = mode == VerifyMode::Slp ? "kappa" : "kbp";
    v.variable = x;
    v.formula = ag(mode == VerifyMode::Slp ? fm::implies(it->second, kx) : fm::iff(it->second, kx));
    out.push_back(judge(std::move(v)));
  }
  for (const auto& phi : spec.extra) {
    Verdict v;
    v.role = "extra";
    v.formula = substituted(phi, theta, "formula " + to_string(phi));
    out.push_back(judge(std::move(v)));
  }
  return out;
}

namespace {

struct NeedEntry {
  size_t var;
  std::uint32_t key;
};

}  // namespace

KbpSearch kbp_find(const EpistemicSpec& spec, const Budget& budget, ExecPolicy policy) {
  validate_spec(spec);
  const Environment& env = *spec.env;
  std::vector<std::string> vars;
  std::vector<size_t> owner;
  std::map<std::string, size_t> var_pos;
  for (const auto& [x, k] : spec.kappa) {
    var_pos[x] = vars.size();
    vars.push_back(x);
    owner.push_back(owner_of(spec, x));
  }
  std::vector<std::vector<signed char>> tables(vars.size());
  for (size_t v = 0; v < vars.size(); ++v) tables[v].assign(env.num_observations(owner[v]), -1);

  KbpSearch result;

  auto leaf = [&](Component comp) {
    if (++result.candidates > budget.max_kbp_candidates)
      throw Refusal("knowledge-based program search exceeded " + std::to_string(budget.max_kbp_candidates) +
                    " candidate tables");
    BundleSystem sys{spec.env, {}};
    sys.components.push_back(std::move(comp));

    Substitution theta;
    std::vector<std::vector<Tri>> completed(vars.size());
    for (size_t v = 0; v < vars.size(); ++v) {
      completed[v].assign(tables[v].size(), Tri::False);
      for (size_t key = 0; key < tables[v].size(); ++key)
        if (tables[v][key] == 1) completed[v][key] = Tri::True;
      theta[vars[v]] = table_formula(env, owner[v], completed[v]);
    }
    // Entries no guard consulted cannot change the system; set them to the
    // knowledge value so only consulted entries can refute the candidate.
    bool ok = true;
    std::vector<std::vector<Tri>> shown(vars.size());
    for (size_t v = 0; v < vars.size() && ok; ++v) {
      auto kx = substituted(spec.kappa.at(vars[v]), theta, "knowledge condition of '" + vars[v] + "'");
      auto kt = observation_table(sys, owner[v], check(sys, kx, policy));
      shown[v] = kt;
      for (size_t key = 0; key < kt.size() && ok; ++key) {
        if (kt[key] == Tri::Vacuous) continue;
        if (tables[v][key] < 0) {
          completed[v][key] = kt[key];
        } else {
          ok = (tables[v][key] == 1) == (kt[key] == Tri::True);
        }
        shown[v][key] = completed[v][key];
      }
    }
    if (!ok) return;
    KbpImplementation impl;
    for (size_t v = 0; v < vars.size(); ++v) {
      impl.theta[vars[v]] = table_formula(env, owner[v], completed[v]);
      impl.tables[vars[v]] = shown[v];
      auto s = simplify_table(env, owner[v], shown[v]);
      impl.simplified[vars[v]] = s ? *s : impl.theta[vars[v]];
    }
    auto verdicts = verify_implementation(spec, impl.theta, VerifyMode::Kbp, policy);
    for (const auto& vd : verdicts)
      if (vd.role == "kbp" && !vd.holds) return;
    result.implementations.push_back(std::move(impl));
  };

  auto explore = [&](auto&& self) -> void {
    std::optional<NeedEntry> need;
    std::optional<Component> comp;
    try {
      comp.emplace(env, "kbp", env.initial(), [&](StateId s) {
        TVarLookup look = [&](const std::string& x) -> std::optional<bool> {
          auto it = var_pos.find(x);
          if (it == var_pos.end()) return std::nullopt;
          size_t v = it->second;
          std::uint32_t key = env.obs_key(owner[v], s);
          if (tables[v][key] < 0) throw NeedEntry{v, key};
          return tables[v][key] == 1;
        };
        std::vector<ActionMask> masks(env.num_agents());
        for (size_t i = 0; i < masks.size(); ++i)
          masks[i] = enabled_actions_with(env, spec.templates[i], s, look);
        std::vector<StateId> out;
        for (JointIndex j : joint_product(env, masks)) {
          auto succ = env.successors(s, j);
          out.insert(out.end(), succ.begin(), succ.end());
        }
        return out;
      });
    } catch (const NeedEntry& n) {
      need = n;
    }
    if (!need) {
      leaf(std::move(*comp));
      return;
    }
    for (signed char b : {0, 1}) {
      tables[need->var][need->key] = b;
      self(self);
    }
    tables[need->var][need->key] = -1;
  };
  explore(explore);
  return result;
}

}  // namespace episynth
