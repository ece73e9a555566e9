#pragma once

#include "episynth/formula.hpp"
#include "lexer.hpp"

namespace episynth::detail {

/// Parses one formula from the current position, leaving the stream at the
/// first token that cannot continue it.
FormulaPtr parse_formula(TokenStream& ts);

}  // namespace episynth::detail
