#pragma once

#include <stdexcept>
#include <string>
#include <vector>

namespace episynth {

/// Caller violated an operation's precondition (unknown agent, unbound
/// template variable, path formula at top level, ...).
class UsageError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Text could not be parsed. Positions are 1-based.
class SyntaxError : public std::runtime_error {
 public:
  SyntaxError(const std::string& msg, int line, int column)
      : std::runtime_error(std::to_string(line) + ":" + std::to_string(column) + ": " + msg),
        line_(line),
        column_(column) {}

  int line() const noexcept { return line_; }
  int column() const noexcept { return column_; }

 private:
  int line_;
  int column_;
};

/// A model file parsed but failed name resolution or expansion. Carries every
/// diagnostic found, not just the first.
class ModelError : public std::runtime_error {
 public:
  explicit ModelError(std::vector<std::string> diagnostics)
      : std::runtime_error(join(diagnostics)), diagnostics_(std::move(diagnostics)) {}

  const std::vector<std::string>& diagnostics() const noexcept { return diagnostics_; }

 private:
  static std::string join(const std::vector<std::string>& d) {
    std::string out;
    for (const auto& s : d) {
      if (!out.empty()) out += "\n";
      out += s;
    }
    return out;
  }
  std::vector<std::string> diagnostics_;
};

/// The request is well-formed but deliberately not served: an unsupported
/// approximation scheme or an enumeration exceeding its budget.
class Refusal : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

}  // namespace episynth
