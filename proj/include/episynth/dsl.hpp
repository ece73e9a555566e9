#pragma once

// Model files (.eps): parsing, printing, expansion into an environment with
// protocol templates and specifications, and generators for the two
// reference models.
//
//   agents A B
//   var posA : 0..10          (or `var flag : bool`)
//   obs A : sensA haltA
//   actions A : Move Halt     (skip is implicit and always action 0)
//   stutter A : Move          (unmatched joint actions of these become self-loops)
//   init posA = 0 & haltA = 0
//   rule [Move, _] when haltA = 0 : posA' in {posA, posA+1}, sensA' = posA' if haltA = 0
//   template A { !x -> Move ; x -> Halt }
//   know x := K[A] (posA >= 2)
//   spec AG (x => K[A] (posA >= 2))
//   order x < y

#include <map>
#include <memory>
#include <set>
#include <string>
#include <string_view>
#include <vector>

#include "episynth/formula.hpp"
#include "episynth/kernel.hpp"
#include "episynth/synth.hpp"

namespace episynth {

struct Span {
  int line = 0;
  int column = 0;
};

/// One choice of an update: a constant, or a variable (primed = value already
/// assigned earlier in the same rule) plus an offset.
struct UpdateTerm {
  enum class Kind { Const, Var, Primed };
  Kind kind = Kind::Const;
  std::string var;
  int offset = 0;  // the constant itself for Const
  bool operator==(const UpdateTerm&) const = default;
};

struct Update {
  std::string var;
  bool choice = false;  // `v' in {..}` rather than `v' = e`
  std::vector<UpdateTerm> terms;
  FormulaPtr guard;  // optional `if` condition on the pre-state
  Span span;
};

struct RuleDecl {
  std::vector<std::string> pattern;  // per agent: action name or "_"
  FormulaPtr guard;                  // optional
  std::vector<Update> updates;
  Span span;
};

struct ClauseDecl {
  FormulaPtr guard;
  std::string action;
};

struct TemplateDecl {
  std::string agent;
  std::vector<ClauseDecl> clauses;
  Span span;
};

struct KnowDecl {
  std::string variable;
  FormulaPtr kappa;
  Span span;
};

struct NamedList {
  std::string agent;
  std::vector<std::string> names;
  Span span;
};

struct ModelFile {
  std::vector<std::string> agents;
  std::vector<VarDecl> vars;
  std::vector<Span> var_spans;
  std::vector<NamedList> obs;
  std::vector<NamedList> actions;
  std::vector<NamedList> stutter;
  FormulaPtr init;
  std::vector<RuleDecl> rules;
  std::vector<TemplateDecl> templates;
  std::vector<KnowDecl> know;
  std::vector<FormulaPtr> specs;
  std::vector<OrderDecl> order;
};

/// Structural equality ignoring source positions.
bool same_model(const ModelFile& a, const ModelFile& b);

/// Parses and resolves names. Syntax errors throw SyntaxError at the first
/// problem; name errors are collected and thrown together as ModelError.
/// Bare identifiers in guards, knowledge bindings and specs that are not
/// state variables become template variables.
ModelFile parse_model(std::string_view text);

/// Canonical text that parses back to a same_model file.
std::string to_text(const ModelFile& m);

struct ExpandedModel {
  std::shared_ptr<const Environment> env;
  std::vector<ProtocolTemplate> templates;
  std::map<std::string, FormulaPtr> kappa;
  std::vector<FormulaPtr> extra;  // spec formulas not of the form AG(x => kappa(x))
  std::vector<FormulaPtr> specs;  // every spec formula, as written
  std::vector<OrderDecl> order;

  /// Specification for synthesis. `order_override` replaces the declared order
  /// when nonempty.
  EpistemicSpec spec(const std::vector<OrderDecl>& order_override = {}) const;
};

/// Builds the explicit environment: the state space is the full product of
/// the domains, transitions are the union of all matching rules plus the
/// skip-all self-loops. Throws ModelError with the validation diagnostics.
ExpandedModel expand(const ModelFile& m);

/// `a < b`, `a <= b`, `a = b`, chains allowed, `;` or `,` separated.
std::vector<OrderDecl> parse_order(std::string_view text);

ModelFile gen_picnic();
/// error in {0, 1}; length >= 4.
ModelFile gen_robot(int error, int length = 10);

}  // namespace episynth
