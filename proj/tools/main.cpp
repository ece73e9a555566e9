#include <fstream>
#include <iostream>

#include "CLI11.hpp"
#include "commands.hpp"

using episynth::cli::Options;

int main(int argc, char** argv) {
  CLI::App app{"episynth: synthesis of protocols from epistemic specifications"};
  app.require_subcommand(1);
  app.set_version_flag("--version", episynth::cli::kVersion);
  Options opt;
  std::string out;
  bool json_stdout = false;

  auto common = [&](CLI::App* c) {
    c->add_option("model", opt.model, "model file (.eps)")->required();
    c->add_option("--budget", opt.budget, "enumeration budget, e.g. states=64,obs=8,candidates=1048576");
    c->add_option("--out", out, "write the JSON report (or DOT text) here");
    c->add_flag("--json", json_stdout, "print the JSON report instead of the summary");
  };
  auto* validate = app.add_subcommand("validate", "parse and expand a model");
  common(validate);

  auto* check = app.add_subcommand("check", "model check a formula");
  common(check);
  check->add_option("--formula", opt.formula, "CTLK formula")->required();
  check->add_option("--theta", opt.theta, "bindings 'x := f; ...' or @file");
  check->add_option("--scheme", opt.scheme, "system: concrete, top or a class such as ii-ir-sc");

  auto* synth = app.add_subcommand("synth", "ordered synthesis");
  common(synth);
  synth->add_option("--scheme", opt.scheme, "top, ii-ir-sc, ii-ir-nsc, pi-ir-sc or pi-ir-nsc");
  synth->add_option("--order", opt.order, "override the declared order, e.g. 'x < y'");

  auto* kbp = app.add_subcommand("kbp", "find all knowledge-based program implementations");
  common(kbp);

  auto* oracle = app.add_subcommand("oracle", "compare knowledge tables across approximations");
  common(oracle);
  oracle->add_option("--classes", opt.classes, "comma-separated schemes");
  oracle->add_option("--theta", opt.theta, "partial bindings 'x := f; ...' or @file");

  auto* simulate = app.add_subcommand("simulate", "sample a trace of the implemented protocol");
  common(simulate);
  simulate->add_option("--theta", opt.theta, "total bindings; synthesized with --scheme when absent");
  simulate->add_option("--scheme", opt.scheme, "scheme used when synthesizing");
  simulate->add_option("--steps", opt.steps, "number of states in the trace");
  simulate->add_option("--seed", opt.seed, "random seed");

  auto* dot = app.add_subcommand("dot", "reachable graph in DOT, clustered by observation");
  common(dot);
  dot->add_option("--theta", opt.theta, "bindings 'x := f; ...' or @file");
  dot->add_option("--scheme", opt.scheme, "system to draw");
  dot->add_option("--agent", opt.agent, "agent whose observations form the clusters");

  auto* gen = app.add_subcommand("gen", "print a reference model");
  gen->add_option("which", opt.which, "picnic or robot")->required();
  gen->add_option("--error", opt.error, "robot sensor error (0 or 1)");
  gen->add_option("--length", opt.length, "robot track length");
  gen->add_option("--out", out, "write the model here");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    int rc = app.exit(e);
    return rc == 0 ? 0 : episynth::cli::kInputError;
  }

  const std::string verb = app.get_subcommands().front()->get_name();
  auto result = episynth::cli::run(verb, opt);
  const bool raw_text = (verb == "dot" || verb == "gen") && result.exit_code == 0;
  if (!out.empty()) {
    std::ofstream f(out);
    if (raw_text) f << result.text;
    else f << result.report.dump(2) << "\n";
    if (!f) {
      std::cerr << "error: cannot write " << out << "\n";
      return episynth::cli::kInputError;
    }
  }
  if (json_stdout) std::cout << result.report.dump(2) << "\n";
  else if (out.empty() || !raw_text) (result.exit_code == episynth::cli::kOk || result.exit_code == episynth::cli::kViolated ? std::cout : std::cerr) << result.text;
  return result.exit_code;
}
