#pragma once

// CTLK formulas: abstract syntax, text syntax, the positive fragment, and
// substitution of template variables.

#include <map>
#include <memory>
#include <set>
#include <string>
#include <string_view>

namespace episynth {

enum class Op : unsigned char {
  True, False, Atom, TVar,
  Not, And, Or, Implies, Iff,
  AX, EX, AF, EF, AG, EG,
  AU, EU, AR, ER,
  K
};

enum class Cmp : unsigned char { Eq, Le, Ge };

struct Formula;
using FormulaPtr = std::shared_ptr<const Formula>;

/// One node of a formula tree. Nodes are immutable and freely shared.
struct Formula {
  Op op = Op::True;
  std::string name;  // Atom: state variable, TVar: template variable, K: agent
  Cmp cmp = Cmp::Eq;
  int value = 0;
  bool bare = false;  // Atom written as a bare identifier, meaning name = 1
  FormulaPtr lhs;
  FormulaPtr rhs;
};

namespace fm {
FormulaPtr truth();
FormulaPtr falsity();
FormulaPtr atom(std::string var, Cmp cmp, int value);
FormulaPtr bare(std::string var);
FormulaPtr tvar(std::string name);
FormulaPtr neg(FormulaPtr a);
FormulaPtr conj(FormulaPtr a, FormulaPtr b);
FormulaPtr disj(FormulaPtr a, FormulaPtr b);
FormulaPtr implies(FormulaPtr a, FormulaPtr b);
FormulaPtr iff(FormulaPtr a, FormulaPtr b);
FormulaPtr unary(Op op, FormulaPtr a);
FormulaPtr binary(Op op, FormulaPtr a, FormulaPtr b);
FormulaPtr know(std::string agent, FormulaPtr a);
}  // namespace fm

bool is_unary(Op op);
bool is_binary(Op op);
/// True for every operator with a path quantifier (AX .. ER).
bool is_temporal(Op op);
/// No temporal or knowledge operator anywhere in the tree.
bool is_propositional(const Formula& f);

bool structurally_equal(const Formula& a, const Formula& b);

/// Prints in the concrete syntax accepted by parse_formula, with minimal
/// parenthesisation.
std::string to_string(const Formula& f);
inline std::string to_string(const FormulaPtr& f) { return to_string(*f); }

/// Parses the concrete syntax:
///   atoms      v = c | v <= c | v >= c | v < c | v > c | v != c | v | true | false
///   boolean    ! & | => <=>     (tightest to loosest)
///   temporal   AX AF AG EX EF EG  A[f U g]  E[f U g]  A[f R g]  E[f R g]
///   knowledge  K[agent] f
/// `<`, `>` and `!=` are rewritten to the three primitive comparisons.
/// Throws SyntaxError.
FormulaPtr parse_formula(std::string_view text);

/// Desugars => and <=>, and rewrites F/G into U/R (AF f = A[true U f],
/// AG f = A[false R f], likewise for E).
FormulaPtr normalize(const FormulaPtr& f);

/// Membership in the positive fragment: after normalize, A-operators and K
/// occur only under an even number of negations, E-operators only under an
/// odd number.
bool is_ctlk_plus(const FormulaPtr& f);

std::set<std::string> template_vars(const Formula& f);
std::set<std::string> atom_vars(const Formula& f);
std::set<std::string> agents_mentioned(const Formula& f);

/// Rewrites bare atoms whose name is in `tvars` into TVar nodes.
FormulaPtr resolve_template_vars(const FormulaPtr& f, const std::set<std::string>& tvars);

using Substitution = std::map<std::string, FormulaPtr>;

struct SubstitutionResult {
  FormulaPtr formula;
  std::set<std::string> unbound;  // TVars left in place
};

SubstitutionResult apply_substitution(const FormulaPtr& f, const Substitution& theta);

enum class SpecKind { SlpSound, Kbp, General };

struct SpecFormula {
  SpecKind kind = SpecKind::General;
  std::string variable;  // template variable (slp-sound/kbp)
  std::string agent;     // knowledge agent (slp-sound/kbp)
  FormulaPtr kappa;      // K[agent] psi (slp-sound/kbp)
  FormulaPtr body;       // the full formula
};

/// Recognises AG(x => K[i] psi) and AG(x <=> K[i] psi) with x a template
/// variable owned by agent i. `owner` maps template variables to agents.
/// Throws UsageError when the pattern matches but x is not owned by i.
SpecFormula classify_spec(const FormulaPtr& f, const std::map<std::string, std::string>& owner);

}  // namespace episynth
