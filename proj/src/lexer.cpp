#include "lexer.hpp"

#include <array>
#include <cctype>

namespace episynth::detail {

namespace {

// Longest symbols first.
constexpr std::array<std::string_view, 27> kSymbols = {
    "<=>", ":=", "->", "=>", "<=", ">=", "!=", "..", "[]",
    "(", ")", "[", "]", "{", "}", ",", ";", ":",
    "&", "|", "!", "=", "<", ">", "'", "+", "-"};

bool ident_start(char c) { return std::isalpha(static_cast<unsigned char>(c)) || c == '_'; }
bool ident_char(char c) { return std::isalnum(static_cast<unsigned char>(c)) || c == '_'; }

}  // namespace

std::vector<Token> tokenize(std::string_view text) {
  std::vector<Token> out;
  int line = 1, col = 1;
  size_t i = 0;
  auto advance = [&](size_t n) {
    for (size_t k = 0; k < n; ++k, ++i) {
      if (text[i] == '\n') {
        ++line;
        col = 1;
      } else {
        ++col;
      }
    }
  };
  while (i < text.size()) {
    char c = text[i];
    if (c == '#') {
      while (i < text.size() && text[i] != '\n') advance(1);
      continue;
    }
    if (std::isspace(static_cast<unsigned char>(c))) {
      advance(1);
      continue;
    }
    Token tok;
    tok.line = line;
    tok.column = col;
    if (ident_start(c)) {
      size_t j = i;
      while (j < text.size() && ident_char(text[j])) ++j;
      tok.kind = Tok::Ident;
      tok.text = std::string(text.substr(i, j - i));
      advance(j - i);
      out.push_back(std::move(tok));
      continue;
    }
    if (std::isdigit(static_cast<unsigned char>(c))) {
      size_t j = i;
      while (j < text.size() && std::isdigit(static_cast<unsigned char>(text[j]))) ++j;
      tok.kind = Tok::Int;
      tok.text = std::string(text.substr(i, j - i));
      advance(j - i);
      out.push_back(std::move(tok));
      continue;
    }
    bool matched = false;
    for (auto sym : kSymbols) {
      if (text.substr(i, sym.size()) == sym) {
        // "[]" is only a clause separator when not an empty bracket pair in
        // an action pattern; patterns never contain "[]" so this is safe.
        tok.kind = Tok::Sym;
        tok.text = std::string(sym);
        advance(sym.size());
        out.push_back(std::move(tok));
        matched = true;
        break;
      }
    }
    if (!matched) throw SyntaxError(std::string("unexpected character '") + c + "'", line, col);
  }
  Token end;
  end.kind = Tok::End;
  end.line = line;
  end.column = col;
  out.push_back(end);
  return out;
}

int TokenStream::expect_int() {
  bool neg = accept_sym("-");
  if (peek().kind != Tok::Int) fail("expected integer");
  const Token& t = next();
  if (t.text.size() > 10 || std::stol(t.text) > 1'000'000'000L) throw SyntaxError("integer out of range", t.line, t.column);
  int v = static_cast<int>(std::stol(t.text));
  return neg ? -v : v;
}

}  // namespace episynth::detail
