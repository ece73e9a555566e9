#include "commands.hpp"

#include <algorithm>
#include <chrono>
#include <cstdio>
#include <fstream>
#include <map>
#include <random>
#include <set>
#include <sstream>

#include "episynth/approx.hpp"
#include "episynth/errors.hpp"
#include "episynth/mck.hpp"
#include "episynth/synth.hpp"

namespace episynth::cli {

namespace {

using json = nlohmann::ordered_json;
using Clock = std::chrono::steady_clock;

class Timer {
 public:
  void lap(const std::string& phase) {
    auto now = Clock::now();
    phases_[phase] = std::chrono::duration<double>(now - last_).count();
    last_ = now;
  }
  json to_json() const {
    json j = json::object();
    for (const auto& [k, v] : phases_) j[k] = v;
    return j;
  }

 private:
  Clock::time_point last_ = Clock::now();
  std::map<std::string, double> phases_;
};

std::string read_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw UsageError("cannot read " + path);
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

const char* tri_name(Tri t) {
  switch (t) {
    case Tri::True: return "true";
    case Tri::False: return "false";
    default: return "vacuous";
  }
}

json obs_json(const Environment& env, size_t agent, std::uint32_t key) {
  json o = json::object();
  auto vals = env.obs_values(agent, key);
  auto idx = env.obs_var_indices(agent);
  for (size_t k = 0; k < idx.size(); ++k) o[env.vars()[idx[k]].name] = vals[k];
  return o;
}

json table_json(const Environment& env, size_t agent, const std::vector<Tri>& table) {
  json rows = json::array();
  for (std::uint32_t key = 0; key < table.size(); ++key)
    rows.push_back({{"obs", obs_json(env, agent, key)}, {"value", tri_name(table[key])}});
  return rows;
}

json state_json(const Environment& env, StateId s) {
  json o = json::object();
  for (size_t v = 0; v < env.num_vars(); ++v) o[env.vars()[v].name] = env.value(s, v);
  return o;
}

json verdict_json(const Environment& env, const Verdict& v) {
  json j = {{"role", v.role}, {"variable", v.variable}, {"formula", to_string(v.formula)}, {"holds", v.holds}};
  j["witness"] = v.witness ? state_json(env, *v.witness) : json(nullptr);
  return j;
}

size_t owner_index(const ExpandedModel& m, const std::string& var) {
  for (const auto& t : m.templates) {
    auto vs = template_vars(t);
    if (vs.count(var)) return t.agent;
  }
  throw UsageError("'" + var + "' is not a template variable");
}

std::set<std::string> all_template_vars(const ExpandedModel& m) {
  std::set<std::string> out;
  for (const auto& t : m.templates) {
    auto vs = template_vars(t);
    out.insert(vs.begin(), vs.end());
  }
  return out;
}

struct Loaded {
  std::string text;
  ModelFile file;
  ExpandedModel model;
};

Loaded load(const Options& opt, Timer& timer) {
  Loaded l;
  l.text = opt.model_text.empty() ? read_file(opt.model) : opt.model_text;
  l.file = parse_model(l.text);
  timer.lap("parse");
  l.model = expand(l.file);
  timer.lap("expand");
  return l;
}

Budget budget_of(const Options& opt) { return opt.budget.empty() ? Budget::from_env() : Budget::parse(opt.budget); }

FormulaPtr bind_formula(const ExpandedModel& m, const std::string& text, const Substitution& theta) {
  auto f = resolve_template_vars(parse_formula(text), all_template_vars(m));
  auto r = apply_substitution(f, theta);
  if (!r.unbound.empty()) throw UsageError("formula mentions unbound template variable " + *r.unbound.begin());
  return r.formula;
}

std::vector<std::string> split(const std::string& text, const std::string& seps) {
  std::vector<std::string> out;
  std::string cur;
  for (char c : text) {
    if (seps.find(c) != std::string::npos) {
      out.push_back(cur);
      cur.clear();
    } else {
      cur += c;
    }
  }
  out.push_back(cur);
  std::vector<std::string> kept;
  for (auto& s : out) {
    auto b = s.find_first_not_of(" \t\r");
    if (b == std::string::npos) continue;
    kept.push_back(s.substr(b, s.find_last_not_of(" \t\r") - b + 1));
  }
  return kept;
}

Outcome cmd_validate(const Options& opt) {
  Timer timer;
  auto l = load(opt, timer);
  const auto& env = *l.model.env;
  auto top = build_top(l.model.env, l.model.templates, {});
  timer.lap("top");
  Outcome o;
  json r;
  r["agents"] = json::array();
  for (const auto& a : env.agents()) r["agents"].push_back({{"name", a.name}, {"actions", a.actions}, {"obs", a.obs_vars}});
  r["states"] = env.num_states();
  r["initial_states"] = env.initial().size();
  r["joint_actions"] = env.num_joint_actions();
  r["template_variables"] = all_template_vars(l.model);
  r["reachable_under_top"] = reachable_states(top).size();
  r["know"] = l.model.kappa.size();
  r["extra_specs"] = l.model.extra.size();
  o.report["result"] = r;
  o.report["timings"] = timer.to_json();
  std::ostringstream s;
  s << "ok: " << env.num_states() << " states, " << env.initial().size() << " initial, "
    << reachable_states(top).size() << " reachable under top\n";
  o.text = s.str();
  return o;
}

Outcome cmd_check(const Options& opt) {
  if (opt.formula.empty()) throw UsageError("check needs --formula");
  Timer timer;
  auto l = load(opt, timer);
  const auto& env = *l.model.env;
  Substitution theta = opt.theta.empty() ? Substitution{} : parse_theta(opt.theta, l.model);
  auto f = bind_formula(l.model, opt.formula, theta);
  auto scheme = SchemeId::parse(opt.scheme);
  auto sys = build_scheme(l.model.env, l.model.templates, theta, scheme, budget_of(opt));
  timer.lap("build");
  auto lab = check(sys, f);
  bool holds = models(sys, f);
  timer.lap("check");
  auto truth = lab.state_truth(sys);
  size_t sat = 0, reach = 0;
  for (auto t : truth) {
    if (t != 2) ++reach;
    if (t == 1) ++sat;
  }
  Outcome o;
  json r;
  r["formula"] = to_string(f);
  r["components"] = sys.components.size();
  r["reachable_states"] = reach;
  r["satisfying_states"] = sat;
  r["holds_initially"] = holds;
  r["failing_initial"] = json::array();
  for (size_t c = 0; c < sys.components.size(); ++c)
    for (auto li : sys.components[c].initial())
      if (!lab.at_local(c, li)) r["failing_initial"].push_back(state_json(env, sys.components[c].state(li)));
  if (f->op == Op::K) {
    auto agent = env.agent_index(f->name);
    if (agent) r["table"] = table_json(env, *agent, observation_table(sys, *agent, lab));
  }
  o.report["result"] = r;
  o.report["timings"] = timer.to_json();
  std::ostringstream s;
  s << to_string(f) << ": " << (holds ? "holds" : "fails") << " at the initial states; true at " << sat << " of "
    << reach << " reachable states\n";
  o.text = s.str();
  o.exit_code = holds ? kOk : kViolated;
  return o;
}

json extraction_json(const Environment& env, const Extraction& e) {
  return {{"variable", e.variable},
          {"agent", env.agents()[e.agent].name},
          {"table", table_json(env, e.agent, e.table)},
          {"raw", to_string(e.raw)},
          {"simplified", to_string(e.simplified)},
          {"simplifier_used", e.simplifier_used}};
}

Outcome cmd_synth(const Options& opt) {
  Timer timer;
  auto scheme = SchemeId::parse(opt.scheme);
  auto l = load(opt, timer);
  const auto& env = *l.model.env;
  auto spec = l.model.spec(opt.order.empty() ? std::vector<OrderDecl>{} : parse_order(opt.order));
  auto rep = synthesize(spec, scheme, budget_of(opt));
  timer.lap("synthesize");
  Outcome o;
  json r;
  r["order"] = json::array();
  for (const auto& cls : spec.order) r["order"].push_back(cls);
  r["stages"] = json::array();
  std::map<std::string, std::string> simplified;
  for (const auto& st : rep.stages) {
    json js = {{"variables", st.variables},
               {"scheme", st.scheme},
               {"components", st.components},
               {"reachable_states", st.reachable_states},
               {"equivalence_holds", st.equivalence_holds},
               {"seconds", st.seconds}};
    js["extractions"] = json::array();
    for (const auto& e : st.extractions) {
      js["extractions"].push_back(extraction_json(env, e));
      simplified[e.variable] = to_string(e.simplified);
    }
    r["stages"].push_back(js);
  }
  r["theta"] = json::object();
  for (const auto& [x, f] : rep.theta) r["theta"][x] = to_string(f);
  r["verdicts"] = json::array();
  for (const auto& v : rep.verdicts) r["verdicts"].push_back(verdict_json(env, v));
  r["final_reachable_states"] = rep.final_reachable_states;
  r["verified"] = rep.all_verified();
  o.report["result"] = r;
  o.report["timings"] = timer.to_json();
  std::ostringstream s;
  for (size_t k = 0; k < rep.stages.size(); ++k) {
    s << "stage " << k + 1 << ":";
    for (const auto& e : rep.stages[k].extractions) s << " " << e.variable << " := " << to_string(e.simplified);
    s << "  (" << rep.stages[k].reachable_states << " reachable)\n";
  }
  for (const auto& v : rep.verdicts)
    s << (v.holds ? "  ok    " : "  FAIL  ") << v.role << (v.variable.empty() ? "" : " " + v.variable) << "\n";
  o.text = s.str();
  o.exit_code = rep.all_verified() ? kOk : kViolated;
  return o;
}

Outcome cmd_kbp(const Options& opt) {
  Timer timer;
  auto l = load(opt, timer);
  const auto& env = *l.model.env;
  auto spec = l.model.spec();
  auto found = kbp_find(spec, budget_of(opt));
  timer.lap("search");
  Outcome o;
  json r;
  r["candidates"] = found.candidates;
  r["implementations"] = json::array();
  std::ostringstream s;
  if (found.implementations.empty()) s << "none (" << found.candidates << " candidates)\n";
  for (size_t k = 0; k < found.implementations.size(); ++k) {
    const auto& impl = found.implementations[k];
    json ji = json::object();
    s << "implementation " << k + 1 << ":";
    for (const auto& [x, table] : impl.tables) {
      size_t agent = owner_index(l.model, x);
      ji[x] = {{"agent", env.agents()[agent].name},
               {"table", table_json(env, agent, table)},
               {"formula", to_string(impl.theta.at(x))},
               {"simplified", to_string(impl.simplified.at(x))}};
      s << " " << x << " := " << to_string(impl.simplified.at(x));
    }
    s << "\n";
    r["implementations"].push_back(ji);
  }
  o.report["result"] = r;
  o.report["timings"] = timer.to_json();
  o.text = s.str();
  return o;
}

// a's system is contained in b's: fewer strategies or the top strategy.
bool contained(const SchemeId& a, const SchemeId& b) {
  if (a == b) return false;
  if (b.kind == SchemeId::Kind::Top) return a.kind == SchemeId::Kind::Class;
  if (a.kind != SchemeId::Kind::Class || b.kind != SchemeId::Kind::Class) return false;
  bool info_le = a.info == b.info || (a.info == Info::Ii && b.info == Info::Pi);
  bool cons_le = a.consistency == b.consistency || (a.consistency == Consistency::Sc && b.consistency == Consistency::Nsc);
  return info_le && cons_le;
}

Outcome cmd_oracle(const Options& opt) {
  Timer timer;
  std::vector<SchemeId> schemes;
  std::vector<std::string> names;
  for (const auto& c : split(opt.classes, ",")) {
    schemes.push_back(SchemeId::parse(c));
    names.push_back(schemes.back().name());
  }
  if (schemes.empty()) throw UsageError("no classes given");
  auto l = load(opt, timer);
  const auto& env = *l.model.env;
  if (l.model.kappa.empty()) throw UsageError("model has no knowledge bindings");
  Substitution theta = opt.theta.empty() ? Substitution{} : parse_theta(opt.theta, l.model);
  auto budget = budget_of(opt);
  // tables[class][variable]
  std::vector<std::map<std::string, std::vector<Tri>>> tables(schemes.size());
  json r;
  r["classes"] = names;
  r["systems"] = json::array();
  for (size_t k = 0; k < schemes.size(); ++k) {
    auto sys = build_scheme(l.model.env, l.model.templates, theta, schemes[k], budget);
    json js = {{"class", names[k]}, {"components", sys.components.size()},
               {"reachable_states", reachable_states(sys).size()}};
    js["tables"] = json::object();
    for (const auto& [x, kappa] : l.model.kappa) {
      auto kb = apply_substitution(kappa, theta).formula;
      size_t agent = *env.agent_index(kb->name);
      tables[k][x] = observation_table(sys, agent, check(sys, kb));
      js["tables"][x] = table_json(env, agent, tables[k][x]);
    }
    r["systems"].push_back(js);
    timer.lap(names[k]);
  }
  r["agreement"] = json::object();
  r["containment_violations"] = json::array();
  for (const auto& [x, kappa] : l.model.kappa) {
    json m = json::array();
    for (size_t a = 0; a < schemes.size(); ++a) {
      json row = json::array();
      for (size_t b = 0; b < schemes.size(); ++b) row.push_back(tables[a][x] == tables[b][x]);
      m.push_back(row);
    }
    r["agreement"][x] = m;
    size_t agent = *env.agent_index(kappa->name);
    for (size_t a = 0; a < schemes.size(); ++a)
      for (size_t b = 0; b < schemes.size(); ++b) {
        if (!contained(schemes[a], schemes[b])) continue;
        for (std::uint32_t key = 0; key < tables[a][x].size(); ++key)
          if (tables[b][x][key] == Tri::True && tables[a][x][key] == Tri::False)
            r["containment_violations"].push_back(
                {{"variable", x}, {"smaller", names[a]}, {"larger", names[b]}, {"obs", obs_json(env, agent, key)}});
      }
  }
  Outcome o;
  o.report["result"] = r;
  o.report["timings"] = timer.to_json();
  std::ostringstream s;
  for (const auto& [x, kappa] : l.model.kappa) {
    s << x << " := " << to_string(kappa) << "\n";
    for (size_t a = 0; a < schemes.size(); ++a) {
      s << "  " << names[a] << ":";
      for (size_t b = 0; b < schemes.size(); ++b) s << (tables[a][x] == tables[b][x] ? " =" : " x");
      s << "\n";
    }
  }
  s << r["containment_violations"].size() << " containment violations\n";
  o.text = s.str();
  o.exit_code = r["containment_violations"].empty() ? kOk : kViolated;
  return o;
}

Outcome cmd_simulate(const Options& opt) {
  if (opt.steps < 1) throw UsageError("--steps must be positive");
  Timer timer;
  auto l = load(opt, timer);
  const auto& env = *l.model.env;
  Substitution theta;
  bool synthesized = opt.theta.empty();
  if (synthesized) {
    theta = synthesize(l.model.spec(), SchemeId::parse(opt.scheme), budget_of(opt)).theta;
    timer.lap("synthesize");
  } else {
    theta = parse_theta(opt.theta, l.model);
  }
  for (const auto& x : all_template_vars(l.model))
    if (!theta.count(x)) throw UsageError("simulate needs a total substitution; " + x + " is unbound");
  std::mt19937_64 rng(opt.seed);
  auto pick = [&](size_t n) { return std::uniform_int_distribution<size_t>(0, n - 1)(rng); };
  StateId s = env.initial()[pick(env.initial().size())];
  json trace = json::array();
  std::ostringstream text;
  for (int k = 0; k < opt.steps; ++k) {
    json step = {{"state", state_json(env, s)}};
    text << env.state_label(s);
    if (k + 1 < opt.steps) {
      auto joints = joint_enabled(env, l.model.templates, theta, s);
      JointIndex j = joints[pick(joints.size())];
      auto succ = env.successors(s, j);
      step["action"] = env.joint_label(j);
      text << "  " << env.joint_label(j);
      s = succ[pick(succ.size())];
    }
    text << "\n";
    trace.push_back(step);
  }
  timer.lap("simulate");
  Outcome o;
  json r;
  r["seed"] = opt.seed;
  r["theta"] = json::object();
  for (const auto& [x, f] : theta) r["theta"][x] = to_string(f);
  r["theta_source"] = synthesized ? "synth" : "given";
  r["trace"] = trace;
  o.report["result"] = r;
  o.report["timings"] = timer.to_json();
  o.text = text.str();
  return o;
}

std::string dot_escape(const std::string& s) {
  std::string out;
  for (char c : s) {
    if (c == '"' || c == '\\') out += '\\';
    out += c;
  }
  return out;
}

Outcome cmd_dot(const Options& opt) {
  Timer timer;
  auto l = load(opt, timer);
  const auto& env = *l.model.env;
  Substitution theta = opt.theta.empty() ? Substitution{} : parse_theta(opt.theta, l.model);
  auto sys = build_scheme(l.model.env, l.model.templates, theta, SchemeId::parse(opt.scheme), budget_of(opt));
  size_t agent = 0;
  if (!opt.agent.empty()) {
    auto a = env.agent_index(opt.agent);
    if (!a) throw UsageError("unknown agent " + opt.agent);
    agent = *a;
  }
  auto states = reachable_states(sys);
  std::set<StateId> initial;
  for (const auto& c : sys.components)
    for (auto li : c.initial()) initial.insert(c.state(li));
  std::map<std::uint32_t, std::vector<StateId>> classes;
  for (auto s : states) classes[env.obs_key(agent, s)].push_back(s);
  std::set<std::pair<StateId, StateId>> edges;
  for (const auto& c : sys.components)
    for (uint32_t li = 0; li < c.size(); ++li)
      for (auto lj : c.succ(li)) edges.insert({c.state(li), c.state(lj)});

  std::ostringstream d;
  d << "digraph system {\n  rankdir=LR;\n  node [shape=box, fontsize=10];\n";
  for (const auto& [key, members] : classes) {
    std::string label;
    auto vals = env.obs_values(agent, key);
    auto idx = env.obs_var_indices(agent);
    for (size_t k = 0; k < idx.size(); ++k) label += (k ? "," : "") + env.vars()[idx[k]].name + "=" + std::to_string(vals[k]);
    d << "  subgraph cluster_" << key << " {\n    label=\"" << dot_escape(env.agents()[agent].name + ": " + label)
      << "\";\n    style=filled; color=\"/pastel19/" << (key % 9) + 1 << "\";\n";
    for (auto s : members)
      d << "    s" << s << " [label=\"" << dot_escape(env.state_label(s)) << "\""
        << (initial.count(s) ? ", peripheries=2" : "") << "];\n";
    d << "  }\n";
  }
  for (const auto& [a, b] : edges) d << "  s" << a << " -> s" << b << ";\n";
  d << "}\n";
  timer.lap("dot");
  Outcome o;
  o.report["result"] = {{"states", states.size()}, {"edges", edges.size()}, {"classes", classes.size()}};
  o.report["timings"] = timer.to_json();
  o.text = d.str();
  return o;
}

Outcome cmd_gen(const Options& opt) {
  ModelFile m;
  if (opt.which == "picnic") m = gen_picnic();
  else if (opt.which == "robot") m = gen_robot(opt.error, opt.length);
  else throw UsageError("gen knows picnic and robot");
  Outcome o;
  o.text = to_text(m);
  o.report["result"] = {{"model", opt.which}, {"bytes", o.text.size()}};
  return o;
}

}  // namespace

std::uint64_t fnv1a(std::string_view bytes) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char c : bytes) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  return h;
}

Substitution parse_theta(const std::string& text, const ExpandedModel& m) {
  std::string body = text;
  if (!body.empty() && body[0] == '@') body = read_file(body.substr(1));
  const auto& env = *m.env;
  auto tvars = all_template_vars(m);
  Substitution theta;
  for (const auto& part : split(body, ";\n")) {
    if (part[0] == '#') continue;
    auto eq = part.find(":=");
    if (eq == std::string::npos) throw UsageError("expected 'x := formula' in '" + part + "'");
    auto name = split(part.substr(0, eq), " \t").at(0);
    if (!tvars.count(name)) throw UsageError("'" + name + "' is not a template variable");
    if (theta.count(name)) throw UsageError("'" + name + "' bound twice");
    auto f = parse_formula(part.substr(eq + 2));
    if (!is_propositional(*f) || !template_vars(*f).empty())
      throw UsageError("binding of " + name + " must be a boolean formula over state variables");
    size_t agent = owner_index(m, name);
    if (!locality_check(*f, agent, env))
      throw UsageError("binding of " + name + " is not local to " + env.agents()[agent].name);
    theta[name] = f;
  }
  return theta;
}

Outcome run(const std::string& verb, const Options& opt) {
  Outcome o;
  auto started = Clock::now();
  try {
    if (verb == "validate") o = cmd_validate(opt);
    else if (verb == "check") o = cmd_check(opt);
    else if (verb == "synth") o = cmd_synth(opt);
    else if (verb == "kbp") o = cmd_kbp(opt);
    else if (verb == "oracle") o = cmd_oracle(opt);
    else if (verb == "simulate") o = cmd_simulate(opt);
    else if (verb == "dot") o = cmd_dot(opt);
    else if (verb == "gen") o = cmd_gen(opt);
    else throw UsageError("unknown command " + verb);
  } catch (const Refusal& e) {
    o = {};
    o.exit_code = kRefused;
    o.report["error"] = {{"kind", "refusal"}, {"message", e.what()}};
  } catch (const ModelError& e) {
    o = {};
    o.exit_code = kInputError;
    o.report["error"] = {{"kind", "model"}, {"message", "invalid model"}, {"diagnostics", e.diagnostics()}};
  } catch (const SyntaxError& e) {
    o = {};
    o.exit_code = kInputError;
    o.report["error"] = {{"kind", "syntax"}, {"message", e.what()}};
  } catch (const std::exception& e) {
    o = {};
    o.exit_code = kInputError;
    o.report["error"] = {{"kind", "usage"}, {"message", e.what()}};
  }
  if (o.report.contains("error")) {
    std::string msg = o.report["error"]["message"];
    o.text = "error: " + msg + "\n";
    if (o.report["error"].contains("diagnostics"))
      for (const auto& d : o.report["error"]["diagnostics"]) o.text += "  " + d.get<std::string>() + "\n";
  }

  json report;
  report["command"] = verb;
  report["version"] = kVersion;
  std::string hash;
  auto hex = [](std::uint64_t h) {
    char buf[17];
    std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(h));
    return std::string(buf);
  };
  if (!opt.model_text.empty()) hash = hex(fnv1a(opt.model_text));
  else if (!opt.model.empty()) {
    try {
      hash = hex(fnv1a(read_file(opt.model)));
    } catch (const std::exception&) {
    }
  }
  report["model"] = opt.model;
  report["model_hash"] = hash.empty() ? json(nullptr) : json("fnv1a:" + hash);
  report["scheme"] = opt.scheme;
  json timings = o.report.contains("timings") ? o.report["timings"] : json::object();
  timings["total"] = std::chrono::duration<double>(Clock::now() - started).count();
  report["timings"] = timings;
  report["exit_code"] = o.exit_code;
  if (o.report.contains("error")) report["error"] = o.report["error"];
  else report["result"] = o.report["result"];
  o.report = std::move(report);
  return o;
}

}  // namespace episynth::cli
