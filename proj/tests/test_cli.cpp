#include <gtest/gtest.h>

#include "commands.hpp"

using namespace episynth;
using namespace episynth::cli;

namespace {

Options with_model(const std::string& name) {
  Options o;
  o.model = std::string(EPISYNTH_MODELS_DIR) + "/" + name;
  return o;
}

}  // namespace

TEST(Cli, ValidatePicnic) {
  auto out = run("validate", with_model("picnic.eps"));
  ASSERT_EQ(out.exit_code, kOk) << out.text;
  const auto& r = out.report["result"];
  EXPECT_EQ(r["states"], 8);
  EXPECT_EQ(r["reachable_under_top"], 4);
  EXPECT_EQ(out.report["command"], "validate");
  EXPECT_EQ(out.report["exit_code"], 0);
  EXPECT_EQ(out.report["model_hash"].get<std::string>().rfind("fnv1a:", 0), 0u);
}

TEST(Cli, MissingModelIsInputError) {
  auto out = run("validate", with_model("nope.eps"));
  EXPECT_EQ(out.exit_code, kInputError);
  EXPECT_TRUE(out.report.contains("error"));
  EXPECT_FALSE(out.report.contains("result"));
}

TEST(Cli, BrokenModelReportsDiagnostics) {
  Options o;
  o.model_text = "agents A\nvar s : 0..1\nobs A : t\n";
  auto out = run("validate", o);
  EXPECT_EQ(out.exit_code, kInputError);
  EXPECT_EQ(out.report["error"]["kind"], "model");
  EXPECT_FALSE(out.report["error"]["diagnostics"].empty());
  o.model_text = "agents A\nvar s : 0..\n";
  EXPECT_EQ(run("validate", o).report["error"]["kind"], "syntax");
}

TEST(Cli, SynthRobot) {
  auto out = run("synth", with_model("robot.eps"));
  ASSERT_EQ(out.exit_code, kOk) << out.text;
  const auto& r = out.report["result"];
  EXPECT_EQ(r["theta"]["x"], "sensA >= 3");
  EXPECT_EQ(r["theta"]["y"], "sensB >= 7");
  EXPECT_TRUE(r["verified"].get<bool>());
  EXPECT_EQ(r["stages"].size(), 2u);
}

TEST(Cli, PerfectRecallRefused) {
  auto o = with_model("picnic.eps");
  o.scheme = "pi-pr-sc";
  auto out = run("synth", o);
  EXPECT_EQ(out.exit_code, kRefused);
  EXPECT_EQ(out.report["error"]["kind"], "refusal");
  o.scheme = "weird";
  EXPECT_EQ(run("synth", o).exit_code, kInputError);
}

TEST(Cli, BudgetRefusal) {
  auto o = with_model("robot.eps");
  o.scheme = "ii-ir-sc";
  EXPECT_EQ(run("synth", o).exit_code, kRefused);
  o.budget = "states=8";
  o.scheme = "top";
  EXPECT_EQ(run("synth", o).exit_code, kOk);
}

TEST(Cli, CheckFormula) {
  auto o = with_model("picnic.eps");
  o.formula = "K[A] AX w";
  auto out = run("check", o);
  EXPECT_EQ(out.exit_code, kViolated);
  EXPECT_FALSE(out.report["result"]["holds_initially"].get<bool>());
  EXPECT_TRUE(out.report["result"].contains("table"));
  o.formula = "AG (start | w | c)";
  EXPECT_EQ(run("check", o).exit_code, kOk);

  auto r = with_model("robot.eps");
  r.formula = "AG (posA <= 4)";
  r.theta = "x := sensA >= 3; y := sensB >= 7";
  r.scheme = "concrete";
  EXPECT_EQ(run("check", r).exit_code, kOk);
  r.theta = "x := sensA >= 6; y := sensB >= 7";
  EXPECT_EQ(run("check", r).exit_code, kViolated);
  r.theta = "x := posA >= 3";
  EXPECT_EQ(run("check", r).exit_code, kInputError);
}

TEST(Cli, KbpListsImplementations) {
  auto out = run("kbp", with_model("picnic.eps"));
  EXPECT_TRUE(out.report["result"]["implementations"].empty());
  EXPECT_NE(out.text.find("none"), std::string::npos);
  auto r0 = run("kbp", with_model("robot0.eps"));
  EXPECT_FALSE(r0.report["result"]["implementations"].empty());
}

TEST(Cli, OraclePicnicAgrees) {
  auto out = run("oracle", with_model("picnic.eps"));
  ASSERT_EQ(out.exit_code, kOk) << out.text;
  EXPECT_TRUE(out.report["result"]["containment_violations"].empty());
  EXPECT_EQ(out.report["result"]["systems"].size(), 5u);
}

TEST(Cli, SimulateIsSeeded) {
  auto o = with_model("robot.eps");
  o.steps = 12;
  o.seed = 5;
  auto a = run("simulate", o);
  auto b = run("simulate", o);
  ASSERT_EQ(a.exit_code, kOk) << a.text;
  EXPECT_EQ(a.report["result"]["trace"], b.report["result"]["trace"]);
  EXPECT_EQ(a.report["result"]["trace"].size(), 12u);
  EXPECT_EQ(a.report["result"]["theta_source"], "synth");
  o.theta = "x := false";
  EXPECT_EQ(run("simulate", o).exit_code, kInputError);
}

TEST(Cli, DotClustersByObservation) {
  auto o = with_model("picnic.eps");
  o.agent = "A";
  auto out = run("dot", o);
  ASSERT_EQ(out.exit_code, kOk);
  EXPECT_EQ(out.text.rfind("digraph", 0), 0u);
  EXPECT_NE(out.text.find("peripheries=2"), std::string::npos);
  EXPECT_EQ(out.report["result"]["states"], 4);
}

TEST(Cli, GenMatchesShippedFiles) {
  Options o;
  o.which = "picnic";
  auto out = run("gen", o);
  ASSERT_EQ(out.exit_code, kOk);
  EXPECT_EQ(out.text, to_text(gen_picnic()));
  o.which = "robot";
  o.error = 3;
  EXPECT_EQ(run("gen", o).exit_code, kInputError);
}

TEST(Cli, ParseTheta) {
  auto m = expand(gen_robot(1));
  auto theta = parse_theta("x := sensA >= 3\ny := sensB = 7 | haltB = 1", m);
  EXPECT_EQ(theta.size(), 2u);
  EXPECT_THROW(parse_theta("x := AX sensA = 1", m), std::exception);
  EXPECT_THROW(parse_theta("z := true", m), std::exception);
}

TEST(Cli, Fnv1a) {
  EXPECT_EQ(fnv1a(""), 0xcbf29ce484222325ull);
  EXPECT_EQ(fnv1a("a"), 0xaf63dc4c8601ec8cull);
}

TEST(Cli, RobotTracesHaltAtTwoToFour) {
  auto o = with_model("robot.eps");
  o.steps = 30;
  for (std::uint64_t seed = 1; seed <= 20; ++seed) {
    o.seed = seed;
    auto out = run("simulate", o);
    ASSERT_EQ(out.exit_code, kOk);
    for (const auto& step : out.report["result"]["trace"])
      if (step["state"]["haltA"] == 1) {
        int pos = step["state"]["posA"];
        EXPECT_TRUE(pos >= 2 && pos <= 4) << "seed " << seed;
        break;
      }
  }
}

TEST(Cli, PicnicTraceIsDeterministic) {
  auto o = with_model("picnic.eps");
  o.steps = 3;
  auto out = run("simulate", o);
  const auto& trace = out.report["result"]["trace"];
  ASSERT_EQ(trace.size(), 3u);
  EXPECT_EQ(trace[0]["state"]["start"], 1);
  for (int k : {1, 2}) {
    EXPECT_EQ(trace[k]["state"]["w"], 1);
    EXPECT_EQ(trace[k]["state"]["c"], 1);
  }
}
