#include "episynth/dsl.hpp"

#include <algorithm>
#include <functional>
#include <sstream>

#include "episynth/errors.hpp"
#include "formula_parser.hpp"
#include "lexer.hpp"

namespace episynth {

namespace {

using detail::Tok;
using detail::Token;
using detail::TokenStream;

const std::set<std::string> kKeywords = {"agents", "var",      "obs",  "actions", "stutter", "init",
                                         "rule",   "template", "know", "spec",    "order"};

bool is_keyword(const Token& t) { return t.kind == Tok::Ident && kKeywords.count(t.text); }

Span span_of(const Token& t) { return {t.line, t.column}; }

std::vector<std::string> ident_list(TokenStream& ts) {
  std::vector<std::string> out;
  while (ts.peek().kind == Tok::Ident && !is_keyword(ts.peek())) out.push_back(ts.next().text);
  return out;
}

UpdateTerm parse_term(TokenStream& ts) {
  UpdateTerm t;
  if (ts.peek().kind == Tok::Int || ts.is_sym("-")) {
    t.offset = ts.expect_int();
    return t;
  }
  t.var = ts.expect_ident("variable or integer").text;
  t.kind = ts.accept_sym("'") ? UpdateTerm::Kind::Primed : UpdateTerm::Kind::Var;
  if (ts.accept_sym("+")) {
    t.offset = ts.expect_int();
  } else if (ts.is_sym("-")) {
    t.offset = ts.expect_int();
  }
  return t;
}

Update parse_update(TokenStream& ts) {
  Update u;
  const Token& name = ts.expect_ident("updated variable");
  u.span = span_of(name);
  u.var = name.text;
  ts.expect_sym("'");
  if (ts.is_ident("in")) {
    ts.next();
    u.choice = true;
    ts.expect_sym("{");
    u.terms.push_back(parse_term(ts));
    while (ts.accept_sym(",")) u.terms.push_back(parse_term(ts));
    ts.expect_sym("}");
  } else {
    ts.expect_sym("=");
    u.terms.push_back(parse_term(ts));
  }
  if (ts.is_ident("if")) {
    ts.next();
    u.guard = detail::parse_formula(ts);
  }
  return u;
}

RuleDecl parse_rule(TokenStream& ts, Span span) {
  RuleDecl r;
  r.span = span;
  ts.expect_sym("[");
  r.pattern.push_back(ts.expect_ident("action or _").text);
  while (ts.accept_sym(",")) r.pattern.push_back(ts.expect_ident("action or _").text);
  ts.expect_sym("]");
  if (ts.is_ident("when")) {
    ts.next();
    r.guard = detail::parse_formula(ts);
  }
  if (ts.accept_sym(":")) {
    r.updates.push_back(parse_update(ts));
    while (ts.accept_sym(",")) r.updates.push_back(parse_update(ts));
  }
  return r;
}

TemplateDecl parse_template(TokenStream& ts, Span span) {
  TemplateDecl t;
  t.span = span;
  t.agent = ts.expect_ident("agent").text;
  ts.expect_sym("{");
  while (!ts.is_sym("}")) {
    ClauseDecl c;
    c.guard = detail::parse_formula(ts);
    ts.expect_sym("->");
    c.action = ts.expect_ident("action").text;
    t.clauses.push_back(std::move(c));
    if (!ts.accept_sym(";") && !ts.accept_sym("[]")) break;
  }
  ts.expect_sym("}");
  return t;
}

void parse_order_chains(TokenStream& ts, std::vector<OrderDecl>& out) {
  while (true) {
    std::string lhs = ts.expect_ident("template variable").text;
    bool any = false;
    while (true) {
      OrderDecl d;
      if (ts.accept_sym("<")) d.rel = OrderDecl::Rel::Lt;
      else if (ts.accept_sym("<=")) d.rel = OrderDecl::Rel::Le;
      else if (ts.accept_sym("=")) d.rel = OrderDecl::Rel::Eq;
      else break;
      d.lhs = lhs;
      d.rhs = ts.expect_ident("template variable").text;
      lhs = d.rhs;
      out.push_back(std::move(d));
      any = true;
    }
    if (!any) ts.fail("expected '<', '<=' or '='");
    if (!ts.accept_sym(",") && !ts.accept_sym(";")) break;
  }
}

NamedList parse_named_list(TokenStream& ts, Span span) {
  NamedList l;
  l.span = span;
  l.agent = ts.expect_ident("agent").text;
  ts.expect_sym(":");
  l.names = ident_list(ts);
  return l;
}

// Atoms of a formula, split into bare identifiers and comparisons.
void collect_atoms(const Formula& f, std::vector<const Formula*>& atoms, std::set<std::string>& agents) {
  if (f.op == Op::Atom || f.op == Op::TVar) atoms.push_back(&f);
  if (f.op == Op::K) agents.insert(f.name);
  if (f.lhs) collect_atoms(*f.lhs, atoms, agents);
  if (f.rhs) collect_atoms(*f.rhs, atoms, agents);
}

std::string where(Span s) { return std::to_string(s.line) + ":" + std::to_string(s.column) + ": "; }

class Resolver {
 public:
  explicit Resolver(ModelFile& m) : m_(m) {}

  void run() {
    if (m_.agents.empty()) error({1, 1}, "at least one agent must be declared");
    std::set<std::string> seen;
    for (const auto& a : m_.agents)
      if (!seen.insert(a).second) error({1, 1}, "agent " + a + " declared twice");
    for (size_t v = 0; v < m_.vars.size(); ++v) {
      const auto& d = m_.vars[v];
      if (!vars_.insert(d.name).second) error(m_.var_spans[v], "variable " + d.name + " declared twice");
      if (d.hi < d.lo) error(m_.var_spans[v], "variable " + d.name + " has an empty domain");
    }
    check_lists();
    check_formula(m_.init, {1, 1}, "init", false);
    for (const auto& r : m_.rules) check_rule(r);
    check_templates();
    for (auto& k : m_.know) {
      if (!tvars_.count(k.variable)) error(k.span, "'" + k.variable + "' is not a template variable");
      if (!know_seen_.insert(k.variable).second) error(k.span, "second knowledge binding for " + k.variable);
      if (k.kappa->op != Op::K) error(k.span, "knowledge binding must have the form K[agent] f");
      else if (auto it = owner_.find(k.variable); it != owner_.end() && it->second != k.kappa->name)
        error(k.span, k.variable + " belongs to " + it->second + " but is bound to knowledge of " + k.kappa->name);
      check_formula(k.kappa, k.span, "knowledge binding", true);
      k.kappa = resolve_template_vars(k.kappa, tvars_);
    }
    for (auto& s : m_.specs) {
      check_formula(s, {1, 1}, "spec", true);
      s = resolve_template_vars(s, tvars_);
    }
    for (const auto& o : m_.order)
      for (const auto& x : {o.lhs, o.rhs})
        if (!tvars_.count(x)) error({1, 1}, "order mentions '" + x + "', which is not a template variable");
    if (!diags_.empty()) throw ModelError(diags_);
  }

 private:
  void error(Span s, const std::string& msg) { diags_.push_back(where(s) + msg); }

  bool known_agent(const std::string& a) const {
    return std::find(m_.agents.begin(), m_.agents.end(), a) != m_.agents.end();
  }

  const std::vector<std::string>* actions_of(const std::string& agent) const {
    for (const auto& l : m_.actions)
      if (l.agent == agent) return &l.names;
    return nullptr;
  }

  bool has_action(const std::string& agent, const std::string& a) const {
    if (a == kSkip) return true;
    auto acts = actions_of(agent);
    return acts && std::find(acts->begin(), acts->end(), a) != acts->end();
  }

  void check_lists() {
    auto once = [&](const std::vector<NamedList>& lists, const std::string& kind) {
      std::set<std::string> agents;
      for (const auto& l : lists) {
        if (!known_agent(l.agent)) error(l.span, kind + " for unknown agent " + l.agent);
        if (!agents.insert(l.agent).second) error(l.span, kind + " of " + l.agent + " declared twice");
      }
    };
    once(m_.obs, "obs");
    once(m_.actions, "actions");
    once(m_.stutter, "stutter");
    for (const auto& l : m_.obs)
      for (const auto& v : l.names)
        if (!vars_.count(v)) error(l.span, "agent " + l.agent + " observes undeclared variable " + v);
    for (const auto& l : m_.actions) {
      std::set<std::string> names;
      for (const auto& a : l.names) {
        if (a == kSkip || a == "_") error(l.span, "action name '" + a + "' is reserved");
        if (!names.insert(a).second) error(l.span, "action " + a + " declared twice for " + l.agent);
      }
    }
    for (const auto& l : m_.stutter)
      for (const auto& a : l.names)
        if (a == kSkip || !has_action(l.agent, a)) error(l.span, "stutter names unknown action " + a + " of " + l.agent);
  }

  // allow_tvars: bare identifiers that are not state variables must be
  // template variables (known after the templates are read).
  void check_formula(const FormulaPtr& f, Span span, const std::string& what, bool allow_tvars) {
    if (!f) return;
    std::vector<const Formula*> atoms;
    std::set<std::string> agents;
    collect_atoms(*f, atoms, agents);
    for (const auto& a : agents)
      if (!known_agent(a)) error(span, what + " mentions unknown agent " + a);
    for (const Formula* a : atoms) {
      if (vars_.count(a->name)) continue;
      if (allow_tvars && (a->bare || a->op == Op::TVar) && tvars_.count(a->name)) continue;
      error(span, what + " mentions undeclared variable " + a->name);
    }
  }

  void check_rule(const RuleDecl& r) {
    if (r.pattern.size() != m_.agents.size()) {
      error(r.span, "rule pattern has " + std::to_string(r.pattern.size()) + " entries for " +
                        std::to_string(m_.agents.size()) + " agents");
    } else {
      for (size_t i = 0; i < r.pattern.size(); ++i)
        if (r.pattern[i] != "_" && !has_action(m_.agents[i], r.pattern[i]))
          error(r.span, "rule pattern names unknown action " + r.pattern[i] + " of " + m_.agents[i]);
    }
    check_formula(r.guard, r.span, "rule guard", false);
    for (const auto& u : r.updates) {
      if (!vars_.count(u.var)) error(u.span, "update of undeclared variable " + u.var);
      for (const auto& t : u.terms)
        if (t.kind != UpdateTerm::Kind::Const && !vars_.count(t.var))
          error(u.span, "update mentions undeclared variable " + t.var);
      check_formula(u.guard, u.span, "update condition", false);
    }
  }

  void check_templates() {
    auto& owner = owner_;
    std::set<std::string> with_template;
    for (const auto& t : m_.templates) {
      if (!known_agent(t.agent)) {
        error(t.span, "template for unknown agent " + t.agent);
        continue;
      }
      if (!with_template.insert(t.agent).second) error(t.span, "second template for " + t.agent);
      std::set<std::string> obs;
      for (const auto& l : m_.obs)
        if (l.agent == t.agent) obs.insert(l.names.begin(), l.names.end());
      std::set<std::string> acts;
      for (const auto& c : t.clauses) {
        if (!has_action(t.agent, c.action)) error(t.span, "template of " + t.agent + " uses unknown action " + c.action);
        if (!acts.insert(c.action).second)
          error(t.span, "template of " + t.agent + " uses action " + c.action + " in two clauses");
        std::vector<const Formula*> atoms;
        std::set<std::string> agents;
        collect_atoms(*c.guard, atoms, agents);
        if (!agents.empty() || !is_propositional(*c.guard))
          error(t.span, "template guards must be boolean formulas");
        for (const Formula* a : atoms) {
          if (vars_.count(a->name)) {
            if (!obs.count(a->name))
              error(t.span, "guard of " + t.agent + " is not local: " + a->name + " is not observed by " + t.agent);
            continue;
          }
          if (!(a->bare || a->op == Op::TVar)) {
            error(t.span, "guard mentions undeclared variable " + a->name);
            continue;
          }
          auto [it, fresh] = owner.emplace(a->name, t.agent);
          if (!fresh && it->second != t.agent)
            error(t.span, "template variable " + a->name + " is shared by " + it->second + " and " + t.agent);
          tvars_.insert(a->name);
        }
      }
    }
    for (const auto& a : m_.agents)
      if (!with_template.count(a)) error({1, 1}, "no template for agent " + a);
    for (auto& t : m_.templates)
      for (auto& c : t.clauses) c.guard = resolve_template_vars(c.guard, tvars_);
  }

  ModelFile& m_;
  std::set<std::string> vars_;
  std::set<std::string> tvars_;
  std::set<std::string> know_seen_;
  std::map<std::string, std::string> owner_;
  std::vector<std::string> diags_;
};

bool formula_eq(const FormulaPtr& a, const FormulaPtr& b) {
  if (!a || !b) return !a && !b;
  return structurally_equal(*a, *b);
}

std::string term_text(const UpdateTerm& t) {
  if (t.kind == UpdateTerm::Kind::Const) return std::to_string(t.offset);
  std::string out = t.var;
  if (t.kind == UpdateTerm::Kind::Primed) out += "'";
  if (t.offset > 0) out += "+" + std::to_string(t.offset);
  if (t.offset < 0) out += std::to_string(t.offset);
  return out;
}

std::string join(const std::vector<std::string>& xs, const std::string& sep) {
  std::string out;
  for (size_t k = 0; k < xs.size(); ++k) out += (k ? sep : "") + xs[k];
  return out;
}

using Pred = std::function<bool(const std::vector<int>&)>;

Pred compile(const FormulaPtr& f, const std::map<std::string, size_t>& idx) {
  if (!f) return [](const std::vector<int>&) { return true; };
  switch (f->op) {
    case Op::True: return [](const std::vector<int>&) { return true; };
    case Op::False: return [](const std::vector<int>&) { return false; };
    case Op::Atom: {
      size_t v = idx.at(f->name);
      int c = f->value;
      switch (f->cmp) {
        case Cmp::Eq: return [v, c](const std::vector<int>& x) { return x[v] == c; };
        case Cmp::Le: return [v, c](const std::vector<int>& x) { return x[v] <= c; };
        case Cmp::Ge: return [v, c](const std::vector<int>& x) { return x[v] >= c; };
      }
      break;
    }
    case Op::Not: {
      auto a = compile(f->lhs, idx);
      return [a](const std::vector<int>& x) { return !a(x); };
    }
    case Op::And: case Op::Or: case Op::Implies: case Op::Iff: {
      auto a = compile(f->lhs, idx);
      auto b = compile(f->rhs, idx);
      switch (f->op) {
        case Op::And: return [a, b](const std::vector<int>& x) { return a(x) && b(x); };
        case Op::Or: return [a, b](const std::vector<int>& x) { return a(x) || b(x); };
        case Op::Implies: return [a, b](const std::vector<int>& x) { return !a(x) || b(x); };
        default: return [a, b](const std::vector<int>& x) { return a(x) == b(x); };
      }
    }
    default: break;
  }
  throw UsageError("expected a boolean state formula: " + to_string(f));
}

struct CompiledUpdate {
  size_t var;
  std::vector<UpdateTerm> terms;
  std::vector<size_t> term_vars;
  Pred guard;
  bool guarded;
};

struct CompiledRule {
  std::vector<int> pattern;  // per agent: action index or -1
  Pred guard;
  std::vector<CompiledUpdate> updates;
};

}  // namespace

ModelFile parse_model(std::string_view text) {
  TokenStream ts(detail::tokenize(text));
  ModelFile m;
  bool agents_seen = false;
  while (!ts.at_end()) {
    const Token& kw = ts.peek();
    if (!is_keyword(kw)) ts.fail("expected a statement keyword");
    Span span = span_of(kw);
    std::string k = ts.next().text;
    if (k == "agents") {
      if (agents_seen) throw SyntaxError("agents declared twice", span.line, span.column);
      agents_seen = true;
      m.agents = ident_list(ts);
    } else if (k == "var") {
      VarDecl d;
      d.name = ts.expect_ident("variable name").text;
      ts.expect_sym(":");
      if (ts.is_ident("bool")) {
        ts.next();
        d.lo = 0;
        d.hi = 1;
      } else {
        d.lo = ts.expect_int();
        ts.expect_sym("..");
        d.hi = ts.expect_int();
      }
      m.vars.push_back(d);
      m.var_spans.push_back(span);
    } else if (k == "obs") {
      m.obs.push_back(parse_named_list(ts, span));
    } else if (k == "actions") {
      m.actions.push_back(parse_named_list(ts, span));
    } else if (k == "stutter") {
      m.stutter.push_back(parse_named_list(ts, span));
    } else if (k == "init") {
      if (m.init) throw SyntaxError("init declared twice", span.line, span.column);
      ts.accept_sym(":");
      m.init = detail::parse_formula(ts);
    } else if (k == "rule") {
      m.rules.push_back(parse_rule(ts, span));
    } else if (k == "template") {
      m.templates.push_back(parse_template(ts, span));
    } else if (k == "know") {
      KnowDecl d;
      d.span = span;
      d.variable = ts.expect_ident("template variable").text;
      ts.expect_sym(":=");
      d.kappa = detail::parse_formula(ts);
      m.know.push_back(std::move(d));
    } else if (k == "spec") {
      m.specs.push_back(detail::parse_formula(ts));
    } else {
      parse_order_chains(ts, m.order);
    }
  }
  Resolver(m).run();
  return m;
}

std::vector<OrderDecl> parse_order(std::string_view text) {
  TokenStream ts(detail::tokenize(text));
  std::vector<OrderDecl> out;
  if (ts.at_end()) return out;
  parse_order_chains(ts, out);
  if (!ts.at_end()) ts.fail("unexpected text after order");
  return out;
}

bool same_model(const ModelFile& a, const ModelFile& b) {
  auto lists_eq = [](const std::vector<NamedList>& x, const std::vector<NamedList>& y) {
    if (x.size() != y.size()) return false;
    for (size_t k = 0; k < x.size(); ++k)
      if (x[k].agent != y[k].agent || x[k].names != y[k].names) return false;
    return true;
  };
  if (a.agents != b.agents || a.vars.size() != b.vars.size()) return false;
  for (size_t k = 0; k < a.vars.size(); ++k)
    if (a.vars[k].name != b.vars[k].name || a.vars[k].lo != b.vars[k].lo || a.vars[k].hi != b.vars[k].hi)
      return false;
  if (!lists_eq(a.obs, b.obs) || !lists_eq(a.actions, b.actions) || !lists_eq(a.stutter, b.stutter))
    return false;
  if (!formula_eq(a.init, b.init)) return false;
  if (a.rules.size() != b.rules.size()) return false;
  for (size_t k = 0; k < a.rules.size(); ++k) {
    const auto& x = a.rules[k];
    const auto& y = b.rules[k];
    if (x.pattern != y.pattern || !formula_eq(x.guard, y.guard) || x.updates.size() != y.updates.size())
      return false;
    for (size_t u = 0; u < x.updates.size(); ++u) {
      const auto& p = x.updates[u];
      const auto& q = y.updates[u];
      if (p.var != q.var || p.choice != q.choice || p.terms != q.terms || !formula_eq(p.guard, q.guard))
        return false;
    }
  }
  if (a.templates.size() != b.templates.size()) return false;
  for (size_t k = 0; k < a.templates.size(); ++k) {
    const auto& x = a.templates[k];
    const auto& y = b.templates[k];
    if (x.agent != y.agent || x.clauses.size() != y.clauses.size()) return false;
    for (size_t c = 0; c < x.clauses.size(); ++c)
      if (x.clauses[c].action != y.clauses[c].action || !formula_eq(x.clauses[c].guard, y.clauses[c].guard))
        return false;
  }
  if (a.know.size() != b.know.size() || a.specs.size() != b.specs.size() || a.order.size() != b.order.size())
    return false;
  for (size_t k = 0; k < a.know.size(); ++k)
    if (a.know[k].variable != b.know[k].variable || !formula_eq(a.know[k].kappa, b.know[k].kappa)) return false;
  for (size_t k = 0; k < a.specs.size(); ++k)
    if (!formula_eq(a.specs[k], b.specs[k])) return false;
  for (size_t k = 0; k < a.order.size(); ++k)
    if (a.order[k].lhs != b.order[k].lhs || a.order[k].rel != b.order[k].rel || a.order[k].rhs != b.order[k].rhs)
      return false;
  return true;
}

std::string to_text(const ModelFile& m) {
  std::ostringstream out;
  out << "agents " << join(m.agents, " ") << "\n\n";
  for (const auto& v : m.vars) out << "var " << v.name << " : " << v.lo << ".." << v.hi << "\n";
  out << "\n";
  auto lists = [&](const char* kw, const std::vector<NamedList>& ls) {
    for (const auto& l : ls) out << kw << " " << l.agent << " : " << join(l.names, " ") << "\n";
  };
  lists("obs", m.obs);
  lists("actions", m.actions);
  lists("stutter", m.stutter);
  if (m.init) out << "\ninit " << to_string(m.init) << "\n";
  if (!m.rules.empty()) out << "\n";
  for (const auto& r : m.rules) {
    out << "rule [" << join(r.pattern, ", ") << "]";
    if (r.guard) out << " when " << to_string(r.guard);
    for (size_t u = 0; u < r.updates.size(); ++u) {
      const auto& up = r.updates[u];
      out << (u ? ",\n    " : " :\n    ") << up.var << "'";
      if (up.choice) {
        std::vector<std::string> ts;
        for (const auto& t : up.terms) ts.push_back(term_text(t));
        out << " in {" << join(ts, ", ") << "}";
      } else {
        out << " = " << term_text(up.terms.at(0));
      }
      if (up.guard) out << " if " << to_string(up.guard);
    }
    out << "\n";
  }
  if (!m.templates.empty()) out << "\n";
  for (const auto& t : m.templates) {
    out << "template " << t.agent << " {";
    for (size_t c = 0; c < t.clauses.size(); ++c)
      out << (c ? " ;" : "") << " " << to_string(t.clauses[c].guard) << " -> " << t.clauses[c].action;
    out << " }\n";
  }
  if (!m.know.empty()) out << "\n";
  for (const auto& k : m.know) out << "know " << k.variable << " := " << to_string(k.kappa) << "\n";
  if (!m.specs.empty()) out << "\n";
  for (const auto& s : m.specs) out << "spec " << to_string(s) << "\n";
  if (!m.order.empty()) out << "\n";
  for (const auto& o : m.order) {
    const char* rel = o.rel == OrderDecl::Rel::Lt ? " < " : o.rel == OrderDecl::Rel::Le ? " <= " : " = ";
    out << "order " << o.lhs << rel << o.rhs << "\n";
  }
  return out.str();
}

EpistemicSpec ExpandedModel::spec(const std::vector<OrderDecl>& order_override) const {
  EpistemicSpec s;
  s.env = env;
  s.templates = templates;
  s.kappa = kappa;
  s.extra = extra;
  std::set<std::string> vars;
  for (const auto& t : templates) {
    auto vs = template_vars(t);
    vars.insert(vs.begin(), vs.end());
  }
  s.order = partition_order(vars, order_override.empty() ? order : order_override);
  return s;
}

ExpandedModel expand(const ModelFile& m) {
  const size_t nvars = m.vars.size();
  std::map<std::string, size_t> vidx;
  for (size_t v = 0; v < nvars; ++v) vidx[m.vars[v].name] = v;

  std::vector<AgentDecl> agents;
  for (const auto& a : m.agents) {
    AgentDecl d;
    d.name = a;
    d.actions.push_back(std::string(kSkip));
    for (const auto& l : m.actions)
      if (l.agent == a) d.actions.insert(d.actions.end(), l.names.begin(), l.names.end());
    for (const auto& l : m.obs)
      if (l.agent == a) d.obs_vars = l.names;
    agents.push_back(std::move(d));
  }
  const size_t nagents = agents.size();

  std::vector<size_t> strides(nvars, 1);
  size_t nstates = 1;
  for (size_t v = nvars; v-- > 0;) {
    strides[v] = nstates;
    nstates *= static_cast<size_t>(m.vars[v].size());
    if (nstates > (size_t{1} << 31)) throw UsageError("state space too large");
  }
  size_t njoint = 1;
  std::vector<size_t> jstrides(nagents, 1);
  for (size_t i = nagents; i-- > 0;) {
    jstrides[i] = njoint;
    njoint *= agents[i].actions.size();
  }
  std::vector<std::vector<size_t>> joint_acts(njoint, std::vector<size_t>(nagents));
  for (size_t j = 0; j < njoint; ++j)
    for (size_t i = 0; i < nagents; ++i) joint_acts[j][i] = (j / jstrides[i]) % agents[i].actions.size();

  std::vector<std::vector<char>> stutter(nagents);
  for (size_t i = 0; i < nagents; ++i) {
    stutter[i].assign(agents[i].actions.size(), 0);
    for (const auto& l : m.stutter)
      if (l.agent == agents[i].name)
        for (const auto& a : l.names)
          for (size_t k = 0; k < agents[i].actions.size(); ++k)
            if (agents[i].actions[k] == a) stutter[i][k] = 1;
  }

  std::vector<CompiledRule> rules;
  for (const auto& r : m.rules) {
    CompiledRule c;
    for (size_t i = 0; i < nagents; ++i) {
      int idx = -1;
      if (r.pattern[i] != "_")
        for (size_t k = 0; k < agents[i].actions.size(); ++k)
          if (agents[i].actions[k] == r.pattern[i]) idx = static_cast<int>(k);
      c.pattern.push_back(idx);
    }
    c.guard = compile(r.guard, vidx);
    for (const auto& u : r.updates) {
      CompiledUpdate cu{vidx.at(u.var), u.terms, {}, compile(u.guard, vidx), u.guard != nullptr};
      for (const auto& t : u.terms) cu.term_vars.push_back(t.kind == UpdateTerm::Kind::Const ? 0 : vidx.at(t.var));
      c.updates.push_back(std::move(cu));
    }
    rules.push_back(std::move(c));
  }

  auto decode = [&](size_t s) {
    std::vector<int> x(nvars);
    for (size_t v = 0; v < nvars; ++v)
      x[v] = m.vars[v].lo + static_cast<int>((s / strides[v]) % static_cast<size_t>(m.vars[v].size()));
    return x;
  };
  auto encode = [&](const std::vector<int>& x) {
    size_t s = 0;
    for (size_t v = 0; v < nvars; ++v) s += static_cast<size_t>(x[v] - m.vars[v].lo) * strides[v];
    return static_cast<StateId>(s);
  };

  Pred init = compile(m.init, vidx);
  std::vector<std::vector<StateId>> succ(nstates * njoint);
  std::vector<char> init_flag(nstates, 0);
  std::vector<char> missing(nstates * njoint, 0);

  const long total = static_cast<long>(nstates);
#pragma omp parallel for schedule(dynamic, 64)
  for (long sl = 0; sl < total; ++sl) {
    const size_t s = static_cast<size_t>(sl);
    const std::vector<int> pre = decode(s);
    init_flag[s] = init(pre);
    succ[s * njoint].push_back(static_cast<StateId>(s));
    std::vector<std::vector<int>> cur, next;
    for (size_t j = 1; j < njoint; ++j) {
      auto& out = succ[s * njoint + j];
      for (const auto& r : rules) {
        bool match = true;
        for (size_t i = 0; i < nagents && match; ++i)
          match = r.pattern[i] < 0 || static_cast<size_t>(r.pattern[i]) == joint_acts[j][i];
        if (!match || !r.guard(pre)) continue;
        cur.assign(1, pre);
        for (const auto& u : r.updates) {
          if (u.guarded && !u.guard(pre)) continue;
          next.clear();
          const auto& dom = m.vars[u.var];
          for (const auto& p : cur) {
            for (size_t t = 0; t < u.terms.size(); ++t) {
              const auto& term = u.terms[t];
              int val = term.kind == UpdateTerm::Kind::Const ? term.offset
                        : term.kind == UpdateTerm::Kind::Var ? pre[u.term_vars[t]] + term.offset
                                                             : p[u.term_vars[t]] + term.offset;
              if (val < dom.lo || val > dom.hi) continue;
              next.push_back(p);
              next.back()[u.var] = val;
            }
          }
          cur.swap(next);
          if (cur.empty()) break;
        }
        for (const auto& p : cur) out.push_back(encode(p));
      }
      std::sort(out.begin(), out.end());
      out.erase(std::unique(out.begin(), out.end()), out.end());
      if (out.empty()) {
        bool stutters = true;
        for (size_t i = 0; i < nagents && stutters; ++i)
          stutters = joint_acts[j][i] == 0 || stutter[i][joint_acts[j][i]];
        if (stutters) out.push_back(static_cast<StateId>(s));
        else missing[s * njoint + j] = 1;
      }
    }
  }

  std::vector<std::string> diags;
  size_t nmissing = 0;
  for (size_t k = 0; k < missing.size(); ++k) {
    if (!missing[k]) continue;
    if (++nmissing > 10) continue;
    const auto x = decode(k / njoint);
    std::string label;
    for (size_t v = 0; v < nvars; ++v) label += (v ? "," : "") + m.vars[v].name + "=" + std::to_string(x[v]);
    std::vector<std::string> acts;
    for (size_t i = 0; i < nagents; ++i) acts.push_back(agents[i].actions[joint_acts[k % njoint][i]]);
    diags.push_back("seriality violated at " + label + " under (" + join(acts, ",") + "): no rule applies");
  }
  if (nmissing > 10) diags.push_back("... and " + std::to_string(nmissing - 10) + " more seriality violations");
  if (!diags.empty()) throw ModelError(diags);

  std::vector<StateId> initial;
  for (size_t s = 0; s < nstates; ++s)
    if (init_flag[s]) initial.push_back(static_cast<StateId>(s));

  ExpandedModel out;
  auto env = std::make_shared<Environment>(agents, m.vars, std::move(initial), std::move(succ));
  auto vd = validate_environment(*env);
  if (!vd.empty()) throw ModelError(vd);
  out.env = env;

  for (size_t i = 0; i < nagents; ++i) {
    ProtocolTemplate t;
    t.agent = i;
    for (const auto& td : m.templates)
      if (td.agent == agents[i].name)
        for (const auto& c : td.clauses) t.clauses.push_back({c.guard, *env->action_index(i, c.action)});
    out.templates.push_back(std::move(t));
  }
  auto td = validate_templates(*env, out.templates);
  if (!td.empty()) throw ModelError(td);

  for (const auto& k : m.know) out.kappa[k.variable] = k.kappa;
  auto owners = template_owners(*env, out.templates);
  for (const auto& s : m.specs) {
    out.specs.push_back(s);
    auto c = classify_spec(s, owners);
    if (c.kind == SpecKind::General) {
      out.extra.push_back(s);
      continue;
    }
    auto it = out.kappa.find(c.variable);
    if (it == out.kappa.end()) {
      out.kappa[c.variable] = c.kappa;
    } else if (!structurally_equal(*it->second, *c.kappa)) {
      out.extra.push_back(s);
    }
  }
  out.order = m.order;
  return out;
}

ModelFile gen_picnic() {
  std::string t = R"(# Two agents each bring wine or cheese, then picnic.
agents A B

var start : 0..1
var w : 0..1
var c : 0..1

obs A : start w c
obs B : start w c
actions A : w c p
actions B : w c p
stutter A : w c p
stutter B : w c p

init start & !w & !c

rule [w, w] when start : start' = 0, w' = 1, c' = 0
rule [w, c] when start : start' = 0, w' = 1, c' = 1
rule [c, w] when start : start' = 0, w' = 1, c' = 1
rule [c, c] when start : start' = 0, w' = 0, c' = 1

template A { start & x_A -> c ; start & !x_A -> w ; !start -> p }
template B { start & x_B -> c ; start & !x_B -> w ; !start -> p }

know x_A := K[A] AX w
know x_B := K[B] AX w

spec AG (x_A => K[A] AX w)
spec AG (x_B => K[B] AX w)
spec AG (start => AX (w & c))

order x_A < x_B
)";
  return parse_model(t);
}

ModelFile gen_robot(int error, int length) {
  if (error != 0 && error != 1) throw UsageError("sensor error must be 0 or 1");
  if (length < 4) throw UsageError("track length must be at least 4");
  const std::string L = std::to_string(length);
  std::ostringstream t;
  t << "# Two robots on a track 0.." << L << ", sensor error " << error << ".\n";
  t << "agents A B\n\n";
  for (const char* a : {"A", "B"}) {
    t << "var pos" << a << " : 0.." << L << "\n";
    t << "var sens" << a << " : 0.." << L << "\n";
    t << "var halt" << a << " : 0..1\n";
  }
  t << "\nobs A : sensA haltA\nobs B : sensB haltB\n";
  t << "actions A : Move Halt\nactions B : Move Halt\n\n";
  if (error == 0)
    t << "init posA = 0 & sensA = 0 & haltA = 0 & posB = " << L << " & sensB = " << L << " & haltB = 0\n\n";
  else
    t << "init posA = 0 & sensA <= 1 & haltA = 0 & posB = " << L << " & sensB >= " << length - 1
      << " & haltB = 0\n\n";

  auto sens = [&](const std::string& a) {
    std::string p = "pos" + a + "'";
    if (error == 0) return "sens" + a + "' = " + p;
    return "sens" + a + "' in {" + p + "-1, " + p + ", " + p + "+1}";
  };
  auto effect = [&](const std::string& a, const std::string& act) -> std::vector<std::string> {
    if (act == "Move") {
      std::string step = a == "A" ? "{posA, posA+1}" : "{posB-1, posB}";
      return {"pos" + a + "' in " + step + " if halt" + a + " = 0", sens(a) + " if halt" + a + " = 0"};
    }
    if (act == "Halt") return {"halt" + a + "' = 1"};
    return {};
  };
  const std::vector<std::string> acts = {"skip", "Move", "Halt"};
  for (const auto& a : acts)
    for (const auto& b : acts) {
      if (a == "skip" && b == "skip") continue;
      auto ups = effect("A", a);
      auto ub = effect("B", b);
      ups.insert(ups.end(), ub.begin(), ub.end());
      t << "rule [" << a << ", " << b << "] : " << join(ups, ", ") << "\n";
    }

  t << "\ntemplate A { !x -> Move ; x -> Halt }\n";
  t << "template B { y -> Move ; !y -> Halt }\n\n";
  std::string safe;
  for (int p = 0; p <= length; ++p)
    safe += std::string(p ? " & " : "") + "(posB = " + std::to_string(p) + " => AG (posA < " +
            std::to_string(p - 1) + "))";
  std::string apart;
  for (int p = 0; p <= length; ++p)
    apart += std::string(p ? " & " : "") + "(posB = " + std::to_string(p) + " => posA < " + std::to_string(p) + ")";
  t << "know x := K[A] (posA >= 2)\n";
  t << "know y := K[B] (" << safe << ")\n\n";
  t << "spec AG (x => K[A] (posA >= 2))\n";
  t << "spec AG (y => K[B] (" << safe << "))\n";
  t << "spec AG (haltA = 1 => posA >= 2)\n";
  t << "spec AG (" << apart << ")\n";
  if (error == 1) {
    t << "spec AG (posA <= 4)\n";
    t << "spec EF (haltA = 1 & posA = 2)\n";
    t << "spec EF (haltB = 1 & posB = 5)\n";
  }
  t << "\norder x < y\n";
  return parse_model(t.str());
}

}  // namespace episynth
