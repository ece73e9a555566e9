#include "episynth/formula.hpp"

#include <functional>

#include "episynth/errors.hpp"
#include "formula_parser.hpp"

namespace episynth {

namespace fm {

namespace {
FormulaPtr make(Formula f) { return std::make_shared<const Formula>(std::move(f)); }
}  // namespace

FormulaPtr truth() {
  static const FormulaPtr t = make(Formula{Op::True});
  return t;
}
FormulaPtr falsity() {
  static const FormulaPtr f = make(Formula{Op::False});
  return f;
}
FormulaPtr atom(std::string var, Cmp cmp, int value) {
  Formula f{Op::Atom, std::move(var)};
  f.cmp = cmp;
  f.value = value;
  return make(std::move(f));
}
FormulaPtr bare(std::string var) {
  Formula f{Op::Atom, std::move(var)};
  f.cmp = Cmp::Eq;
  f.value = 1;
  f.bare = true;
  return make(std::move(f));
}
FormulaPtr tvar(std::string name) { return make(Formula{Op::TVar, std::move(name)}); }
FormulaPtr unary(Op op, FormulaPtr a) {
  Formula f{op};
  f.lhs = std::move(a);
  return make(std::move(f));
}
FormulaPtr binary(Op op, FormulaPtr a, FormulaPtr b) {
  Formula f{op};
  f.lhs = std::move(a);
  f.rhs = std::move(b);
  return make(std::move(f));
}
FormulaPtr neg(FormulaPtr a) { return unary(Op::Not, std::move(a)); }
FormulaPtr conj(FormulaPtr a, FormulaPtr b) { return binary(Op::And, std::move(a), std::move(b)); }
FormulaPtr disj(FormulaPtr a, FormulaPtr b) { return binary(Op::Or, std::move(a), std::move(b)); }
FormulaPtr implies(FormulaPtr a, FormulaPtr b) { return binary(Op::Implies, std::move(a), std::move(b)); }
FormulaPtr iff(FormulaPtr a, FormulaPtr b) { return binary(Op::Iff, std::move(a), std::move(b)); }
FormulaPtr know(std::string agent, FormulaPtr a) {
  Formula f{Op::K, std::move(agent)};
  f.lhs = std::move(a);
  return make(std::move(f));
}

}  // namespace fm

bool is_unary(Op op) {
  switch (op) {
    case Op::Not: case Op::AX: case Op::EX: case Op::AF: case Op::EF:
    case Op::AG: case Op::EG: case Op::K:
      return true;
    default:
      return false;
  }
}

bool is_binary(Op op) {
  switch (op) {
    case Op::And: case Op::Or: case Op::Implies: case Op::Iff:
    case Op::AU: case Op::EU: case Op::AR: case Op::ER:
      return true;
    default:
      return false;
  }
}

bool is_temporal(Op op) {
  switch (op) {
    case Op::AX: case Op::EX: case Op::AF: case Op::EF: case Op::AG: case Op::EG:
    case Op::AU: case Op::EU: case Op::AR: case Op::ER:
      return true;
    default:
      return false;
  }
}

bool is_propositional(const Formula& f) {
  if (is_temporal(f.op) || f.op == Op::K) return false;
  if (f.lhs && !is_propositional(*f.lhs)) return false;
  if (f.rhs && !is_propositional(*f.rhs)) return false;
  return true;
}

bool structurally_equal(const Formula& a, const Formula& b) {
  if (a.op != b.op) return false;
  switch (a.op) {
    case Op::Atom:
      return a.name == b.name && a.cmp == b.cmp && a.value == b.value && a.bare == b.bare;
    case Op::TVar:
      return a.name == b.name;
    case Op::K:
      if (a.name != b.name) return false;
      break;
    default:
      break;
  }
  if (bool(a.lhs) != bool(b.lhs) || bool(a.rhs) != bool(b.rhs)) return false;
  if (a.lhs && !structurally_equal(*a.lhs, *b.lhs)) return false;
  if (a.rhs && !structurally_equal(*a.rhs, *b.rhs)) return false;
  return true;
}

// ---------------------------------------------------------------- printing

namespace {

constexpr int kIff = 1, kImplies = 2, kOr = 3, kAnd = 4, kPrefix = 5, kPrimary = 6;

int precedence(Op op) {
  switch (op) {
    case Op::Iff: return kIff;
    case Op::Implies: return kImplies;
    case Op::Or: return kOr;
    case Op::And: return kAnd;
    case Op::Not: case Op::AX: case Op::EX: case Op::AF: case Op::EF:
    case Op::AG: case Op::EG: case Op::K:
      return kPrefix;
    default:
      return kPrimary;
  }
}

const char* prefix_name(Op op) {
  switch (op) {
    case Op::Not: return "!";
    case Op::AX: return "AX ";
    case Op::EX: return "EX ";
    case Op::AF: return "AF ";
    case Op::EF: return "EF ";
    case Op::AG: return "AG ";
    case Op::EG: return "EG ";
    default: return "";
  }
}

void print(const Formula& f, int min_prec, std::string& out) {
  int prec = precedence(f.op);
  bool paren = prec < min_prec;
  if (paren) out += '(';
  switch (f.op) {
    case Op::True: out += "true"; break;
    case Op::False: out += "false"; break;
    case Op::TVar: out += f.name; break;
    case Op::Atom:
      if (f.bare) {
        out += f.name;
      } else {
        out += f.name;
        out += f.cmp == Cmp::Eq ? " = " : f.cmp == Cmp::Le ? " <= " : " >= ";
        out += std::to_string(f.value);
      }
      break;
    case Op::Not: case Op::AX: case Op::EX: case Op::AF: case Op::EF:
    case Op::AG: case Op::EG: case Op::K: {
      if (f.op == Op::K) {
        out += "K[" + f.name + "] ";
      } else {
        out += prefix_name(f.op);
      }
      // Comparison atoms read better parenthesised under a prefix operator.
      const Formula& c = *f.lhs;
      bool wrap = c.op == Op::Atom && !c.bare;
      if (wrap) out += '(';
      print(c, kPrefix, out);
      if (wrap) out += ')';
      break;
    }
    case Op::And:
      print(*f.lhs, kAnd, out);
      out += " & ";
      print(*f.rhs, kPrefix, out);
      break;
    case Op::Or:
      print(*f.lhs, kOr, out);
      out += " | ";
      print(*f.rhs, kAnd, out);
      break;
    case Op::Implies:
      print(*f.lhs, kOr, out);
      out += " => ";
      print(*f.rhs, kImplies, out);
      break;
    case Op::Iff:
      print(*f.lhs, kIff, out);
      out += " <=> ";
      print(*f.rhs, kImplies, out);
      break;
    case Op::AU: case Op::EU: case Op::AR: case Op::ER:
      out += (f.op == Op::AU || f.op == Op::AR) ? "A[" : "E[";
      print(*f.lhs, kIff, out);
      out += (f.op == Op::AU || f.op == Op::EU) ? " U " : " R ";
      print(*f.rhs, kIff, out);
      out += ']';
      break;
  }
  if (paren) out += ')';
}

}  // namespace

std::string to_string(const Formula& f) {
  std::string out;
  print(f, 0, out);
  return out;
}

// ----------------------------------------------------------------- parsing

namespace detail {

namespace {

class Parser {
 public:
  explicit Parser(TokenStream& ts) : ts_(ts) {}

  FormulaPtr iff() {
    auto lhs = implies();
    while (ts_.accept_sym("<=>")) lhs = fm::iff(lhs, implies());
    return lhs;
  }

 private:
  FormulaPtr implies() {
    auto lhs = disjunction();
    if (ts_.accept_sym("=>")) return fm::implies(lhs, implies());
    return lhs;
  }
  FormulaPtr disjunction() {
    auto lhs = conjunction();
    while (ts_.accept_sym("|")) lhs = fm::disj(lhs, conjunction());
    return lhs;
  }
  FormulaPtr conjunction() {
    auto lhs = prefix();
    while (ts_.accept_sym("&")) lhs = fm::conj(lhs, prefix());
    return lhs;
  }
  FormulaPtr prefix() {
    if (ts_.accept_sym("!")) return fm::neg(prefix());
    const Token& t = ts_.peek();
    if (t.kind == Tok::Ident) {
      static const std::map<std::string, Op> kPrefixOps = {
          {"AX", Op::AX}, {"EX", Op::EX}, {"AF", Op::AF},
          {"EF", Op::EF}, {"AG", Op::AG}, {"EG", Op::EG}};
      auto it = kPrefixOps.find(t.text);
      if (it != kPrefixOps.end()) {
        ts_.next();
        return fm::unary(it->second, prefix());
      }
      if (t.text == "K" && ts_.is_sym("[", 1)) {
        ts_.next();
        ts_.next();
        std::string agent = ts_.expect_ident("agent name").text;
        ts_.expect_sym("]");
        return fm::know(agent, prefix());
      }
    }
    return primary();
  }
  FormulaPtr primary() {
    if (ts_.accept_sym("(")) {
      auto f = iff();
      ts_.expect_sym(")");
      return f;
    }
    const Token& t = ts_.peek();
    if (t.kind != Tok::Ident) ts_.fail("expected formula");
    if ((t.text == "A" || t.text == "E") && ts_.is_sym("[", 1)) {
      bool universal = t.text == "A";
      ts_.next();
      ts_.next();
      auto lhs = iff();
      Op op;
      if (ts_.is_ident("U")) {
        op = universal ? Op::AU : Op::EU;
      } else if (ts_.is_ident("R")) {
        op = universal ? Op::AR : Op::ER;
      } else {
        ts_.fail("expected 'U' or 'R'");
      }
      ts_.next();
      auto rhs = iff();
      ts_.expect_sym("]");
      return fm::binary(op, lhs, rhs);
    }
    static const std::set<std::string> kReserved = {"AX", "EX", "AF", "EF", "AG", "EG",
                                                    "K", "A", "E", "U", "R", "X", "F", "G"};
    if (t.text == "true") {
      ts_.next();
      return fm::truth();
    }
    if (t.text == "false") {
      ts_.next();
      return fm::falsity();
    }
    if (kReserved.count(t.text)) ts_.fail("unknown operator or misplaced keyword");
    std::string name = ts_.next().text;
    if (ts_.accept_sym("=")) return fm::atom(name, Cmp::Eq, ts_.expect_int());
    if (ts_.accept_sym("<=")) return fm::atom(name, Cmp::Le, ts_.expect_int());
    if (ts_.accept_sym(">=")) return fm::atom(name, Cmp::Ge, ts_.expect_int());
    if (ts_.accept_sym("<")) return fm::atom(name, Cmp::Le, ts_.expect_int() - 1);
    if (ts_.accept_sym(">")) return fm::atom(name, Cmp::Ge, ts_.expect_int() + 1);
    if (ts_.accept_sym("!=")) return fm::neg(fm::atom(name, Cmp::Eq, ts_.expect_int()));
    return fm::bare(name);
  }

  TokenStream& ts_;
};

}  // namespace

FormulaPtr parse_formula(TokenStream& ts) { return Parser(ts).iff(); }

}  // namespace detail

FormulaPtr parse_formula(std::string_view text) {
  detail::TokenStream ts(detail::tokenize(text));
  auto f = detail::parse_formula(ts);
  if (!ts.at_end()) ts.fail("unexpected trailing input");
  return f;
}

// ------------------------------------------------------------ normal forms

FormulaPtr normalize(const FormulaPtr& f) {
  switch (f->op) {
    case Op::True: case Op::False: case Op::Atom: case Op::TVar:
      return f;
    case Op::Implies:
      return fm::disj(fm::neg(normalize(f->lhs)), normalize(f->rhs));
    case Op::Iff: {
      auto a = normalize(f->lhs), b = normalize(f->rhs);
      return fm::conj(fm::disj(fm::neg(a), b), fm::disj(fm::neg(b), a));
    }
    case Op::AF: return fm::binary(Op::AU, fm::truth(), normalize(f->lhs));
    case Op::EF: return fm::binary(Op::EU, fm::truth(), normalize(f->lhs));
    case Op::AG: return fm::binary(Op::AR, fm::falsity(), normalize(f->lhs));
    case Op::EG: return fm::binary(Op::ER, fm::falsity(), normalize(f->lhs));
    case Op::K: return fm::know(f->name, normalize(f->lhs));
    default:
      break;
  }
  if (is_unary(f->op)) return fm::unary(f->op, normalize(f->lhs));
  return fm::binary(f->op, normalize(f->lhs), normalize(f->rhs));
}

namespace {

bool positive_ok(const Formula& f, bool positive) {
  switch (f.op) {
    case Op::True: case Op::False: case Op::Atom: case Op::TVar:
      return true;
    case Op::Not:
      return positive_ok(*f.lhs, !positive);
    case Op::And: case Op::Or:
      return positive_ok(*f.lhs, positive) && positive_ok(*f.rhs, positive);
    case Op::AX: case Op::K:
      return positive && positive_ok(*f.lhs, true);
    case Op::AU: case Op::AR:
      return positive && positive_ok(*f.lhs, true) && positive_ok(*f.rhs, true);
    case Op::EX:
      return !positive && positive_ok(*f.lhs, false);
    case Op::EU: case Op::ER:
      return !positive && positive_ok(*f.lhs, false) && positive_ok(*f.rhs, false);
    default:
      return false;  // unreachable after normalize
  }
}

void collect(const Formula& f, Op op, std::set<std::string>& out) {
  if (f.op == op) out.insert(f.name);
  if (f.lhs) collect(*f.lhs, op, out);
  if (f.rhs) collect(*f.rhs, op, out);
}

FormulaPtr rebuild(const FormulaPtr& f, const std::function<FormulaPtr(const FormulaPtr&)>& leaf) {
  if (!f->lhs) return leaf(f);
  auto l = rebuild(f->lhs, leaf);
  auto r = f->rhs ? rebuild(f->rhs, leaf) : nullptr;
  if (l == f->lhs && r == f->rhs) return f;
  Formula copy = *f;
  copy.lhs = l;
  copy.rhs = r;
  return std::make_shared<const Formula>(std::move(copy));
}

}  // namespace

bool is_ctlk_plus(const FormulaPtr& f) { return positive_ok(*normalize(f), true); }

std::set<std::string> template_vars(const Formula& f) {
  std::set<std::string> out;
  collect(f, Op::TVar, out);
  return out;
}

std::set<std::string> atom_vars(const Formula& f) {
  std::set<std::string> out;
  collect(f, Op::Atom, out);
  return out;
}

std::set<std::string> agents_mentioned(const Formula& f) {
  std::set<std::string> out;
  collect(f, Op::K, out);
  return out;
}

FormulaPtr resolve_template_vars(const FormulaPtr& f, const std::set<std::string>& tvars) {
  return rebuild(f, [&](const FormulaPtr& leaf) {
    if (leaf->op == Op::Atom && leaf->bare && tvars.count(leaf->name)) return fm::tvar(leaf->name);
    return leaf;
  });
}

SubstitutionResult apply_substitution(const FormulaPtr& f, const Substitution& theta) {
  SubstitutionResult res;
  res.formula = rebuild(f, [&](const FormulaPtr& leaf) {
    if (leaf->op != Op::TVar) return leaf;
    auto it = theta.find(leaf->name);
    if (it == theta.end()) {
      res.unbound.insert(leaf->name);
      return leaf;
    }
    return it->second;
  });
  return res;
}

SpecFormula classify_spec(const FormulaPtr& f, const std::map<std::string, std::string>& owner) {
  std::set<std::string> tvars;
  for (const auto& [x, _] : owner) tvars.insert(x);
  SpecFormula out;
  out.body = resolve_template_vars(f, tvars);

  const Formula* inner = nullptr;
  if (out.body->op == Op::AG) {
    inner = out.body->lhs.get();
  } else if (out.body->op == Op::AR && out.body->lhs->op == Op::False) {
    inner = out.body->rhs.get();
  }
  if (!inner || (inner->op != Op::Implies && inner->op != Op::Iff)) return out;

  const FormulaPtr* var = nullptr;
  const FormulaPtr* know = nullptr;
  if (inner->lhs->op == Op::TVar && inner->rhs->op == Op::K) {
    var = &inner->lhs;
    know = &inner->rhs;
  } else if (inner->op == Op::Iff && inner->rhs->op == Op::TVar && inner->lhs->op == Op::K) {
    var = &inner->rhs;
    know = &inner->lhs;
  }
  if (!var) return out;

  const std::string& x = (*var)->name;
  const std::string& agent = (*know)->name;
  auto it = owner.find(x);
  if (it == owner.end()) return out;
  if (it->second != agent) {
    throw UsageError("template variable '" + x + "' belongs to agent " + it->second +
                     " but its knowledge condition is about agent " + agent);
  }
  out.kind = inner->op == Op::Implies ? SpecKind::SlpSound : SpecKind::Kbp;
  out.variable = x;
  out.agent = agent;
  out.kappa = *know;
  return out;
}

}  // namespace episynth
