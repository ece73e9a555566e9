#pragma once

// Tokenizer shared by the formula parser and the model-file parser.

#include <string>
#include <string_view>
#include <vector>

#include "episynth/errors.hpp"

namespace episynth::detail {

enum class Tok { Ident, Int, Sym, End };

struct Token {
  Tok kind = Tok::End;
  std::string text;
  int line = 1;
  int column = 1;
};

std::vector<Token> tokenize(std::string_view text);

class TokenStream {
 public:
  explicit TokenStream(std::vector<Token> toks) : toks_(std::move(toks)) {}

  const Token& peek(size_t ahead = 0) const {
    size_t i = pos_ + ahead;
    return i < toks_.size() ? toks_[i] : toks_.back();
  }
  const Token& next() {
    const Token& t = peek();
    if (pos_ < toks_.size() - 1) ++pos_;
    return t;
  }
  bool at_end() const { return peek().kind == Tok::End; }

  bool is_sym(std::string_view s, size_t ahead = 0) const {
    const Token& t = peek(ahead);
    return t.kind == Tok::Sym && t.text == s;
  }
  bool is_ident(std::string_view s, size_t ahead = 0) const {
    const Token& t = peek(ahead);
    return t.kind == Tok::Ident && t.text == s;
  }
  bool accept_sym(std::string_view s) {
    if (!is_sym(s)) return false;
    next();
    return true;
  }
  const Token& expect_sym(std::string_view s) {
    if (!is_sym(s)) fail("expected '" + std::string(s) + "'");
    return next();
  }
  const Token& expect_ident(std::string_view what = "identifier") {
    if (peek().kind != Tok::Ident) fail("expected " + std::string(what));
    return next();
  }
  int expect_int();

  [[noreturn]] void fail(const std::string& msg) const {
    const Token& t = peek();
    std::string found = t.kind == Tok::End ? "end of input" : "'" + t.text + "'";
    throw SyntaxError(msg + ", found " + found, t.line, t.column);
  }

 private:
  std::vector<Token> toks_;
  size_t pos_ = 0;
};

}  // namespace episynth::detail
