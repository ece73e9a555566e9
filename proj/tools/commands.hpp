#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "json.hpp"

#include "episynth/dsl.hpp"

namespace episynth::cli {

inline constexpr const char* kVersion = "0.3.1";

enum Exit : int { kOk = 0, kViolated = 1, kRefused = 2, kInputError = 3 };

struct Options {
  std::string model;       // path
  std::string model_text;  // used instead of reading `model` when nonempty
  std::string scheme = "top";
  std::string order;
  std::string theta;  // `x := f; y := g` or @file
  std::string formula;
  std::string classes = "top,ii-ir-sc,ii-ir-nsc,pi-ir-sc,pi-ir-nsc";
  std::string budget;
  std::string agent;
  int steps = 10;
  std::uint64_t seed = 1;
  // gen
  std::string which;
  int error = 1;
  int length = 10;
};

struct Outcome {
  nlohmann::ordered_json report;
  std::string text;  // human summary, or DOT / model text for dot and gen
  int exit_code = kOk;
};

/// Runs one verb. Never throws: errors become exit codes and an "error"
/// field in the report.
Outcome run(const std::string& verb, const Options& opt);

std::uint64_t fnv1a(std::string_view bytes);

/// `x := f; y := g`, one binding per `;` or line. Formulas must be boolean
/// and local to the owner of the variable.
Substitution parse_theta(const std::string& text, const ExpandedModel& m);

}  // namespace episynth::cli
