#include <gtest/gtest.h>

#include <random>

#include "episynth/dsl.hpp"
#include "episynth/errors.hpp"
#include "episynth/synth.hpp"
#include "support.hpp"

using namespace episynth;

namespace {

const ExpandedModel& picnic() {
  static const ExpandedModel m = expand(gen_picnic());
  return m;
}

const ExpandedModel& robot() {
  static const ExpandedModel m = expand(gen_robot(1));
  return m;
}

const ExpandedModel& robot0() {
  static const ExpandedModel m = expand(gen_robot(0));
  return m;
}

using Classes = std::vector<std::set<std::string>>;

// Table must agree with `expected` on every non-vacuous observation.
void expect_table(const Environment& env, size_t agent, const std::vector<Tri>& table,
                  const std::function<bool(const std::vector<int>&)>& expected) {
  for (std::uint32_t key = 0; key < table.size(); ++key) {
    if (table[key] == Tri::Vacuous) continue;
    EXPECT_EQ(table[key] == Tri::True, expected(env.obs_values(agent, key))) << "key " << key;
  }
}

}  // namespace

TEST(Synth, PartitionOrder) {
  using R = OrderDecl::Rel;
  EXPECT_EQ(partition_order({"x_A", "x_B"}, {{"x_A", R::Lt, "x_B"}}), (Classes{{"x_A"}, {"x_B"}}));
  EXPECT_EQ(partition_order({"x"}, {}), (Classes{{"x"}}));
  EXPECT_EQ(partition_order({"a", "b", "c"}, {{"c", R::Lt, "a"}, {"a", R::Eq, "b"}}), (Classes{{"c"}, {"a", "b"}}));
  EXPECT_EQ(partition_order({"a", "b"}, {{"a", R::Le, "b"}, {"b", R::Le, "a"}}), (Classes{{"a", "b"}}));
  EXPECT_THROW(partition_order({"a", "b"}, {{"a", R::Lt, "b"}, {"b", R::Le, "a"}}), UsageError);
  try {
    partition_order({"a", "b", "c"}, {{"a", R::Lt, "b"}});
    FAIL();
  } catch (const UsageError& e) {
    std::string msg = e.what();
    EXPECT_NE(msg.find("a"), std::string::npos);
    EXPECT_NE(msg.find("c"), std::string::npos);
  }
  EXPECT_THROW(partition_order({"a"}, {{"a", R::Lt, "zz"}}), UsageError);
}

TEST(Synth, SimplifyTable) {
  const auto& env = *robot().env;
  std::vector<Tri> t(env.num_observations(0), Tri::False);
  for (std::uint32_t k = 0; k < t.size(); ++k)
    if (env.obs_values(0, k)[0] >= 3) t[k] = Tri::True;
  auto s = simplify_table(env, 0, t);
  ASSERT_TRUE(s.has_value());
  EXPECT_EQ(to_string(*s), "sensA >= 3");
  for (auto& v : t) v = Tri::False;
  EXPECT_EQ(to_string(*simplify_table(env, 0, t)), "false");
  for (auto& v : t) v = Tri::True;
  EXPECT_EQ(to_string(*simplify_table(env, 0, t)), "true");
  for (std::uint32_t k = 0; k < t.size(); ++k) {
    auto v = env.obs_values(0, k);
    t[k] = (v[0] >= 3 && v[1] == 0) || (v[0] == 5 && v[1] == 1) ? Tri::True : Tri::False;
  }
  EXPECT_FALSE(simplify_table(env, 0, t).has_value());
  auto raw = table_formula(env, 0, t);
  for (StateId s2 = 0; s2 < env.num_states(); s2 += 17)
    EXPECT_EQ(eval_state(env, *raw, s2), t[env.obs_key(0, s2)] == Tri::True);
}

TEST(Synth, RobotStageExtractions) {
  const auto& m = robot();
  const auto& env = *m.env;
  auto top = build_top(m.env, m.templates, {});
  auto ex = extract_local_formula(top, 0, "x", m.kappa.at("x"));
  EXPECT_TRUE(ex.simplifier_used);
  EXPECT_EQ(to_string(ex.simplified), "sensA >= 3");
  expect_table(env, 0, ex.table, [](const std::vector<int>& o) { return o[0] >= 3; });

  Substitution theta = {{"x", ex.simplified}};
  auto stage2 = build_top(m.env, m.templates, theta);
  auto ey = extract_local_formula(stage2, 1, "y", m.kappa.at("y"));
  EXPECT_EQ(to_string(ey.simplified), "sensB >= 7");
  expect_table(env, 1, ey.table, [](const std::vector<int>& o) { return o[0] >= 7; });

  auto all = extract_local_formula(top, 0, "x", parse_formula("K[A] true"));
  for (auto v : all.table) EXPECT_NE(v, Tri::False);
  EXPECT_TRUE(models(top, fm::unary(Op::AG, all.simplified)));
}

TEST(Synth, PicnicOrderedSynthesis) {
  const auto& m = picnic();
  auto spec = m.spec();
  auto rep = synthesize(spec, SchemeId::parse("top"));
  ASSERT_EQ(rep.stages.size(), 2u);
  StateId start = m.env->initial()[0];
  EXPECT_FALSE(eval_state(*m.env, *rep.theta.at("x_A"), start));
  EXPECT_TRUE(eval_state(*m.env, *rep.theta.at("x_B"), start));
  EXPECT_TRUE(rep.kappa_verified());
  EXPECT_TRUE(rep.all_verified());
  for (const auto& st : rep.stages) EXPECT_TRUE(st.equivalence_holds);
  auto final_sys = build_concrete(m.env, m.templates, rep.theta);
  EXPECT_TRUE(models(final_sys, parse_formula("AG (start => AX (w & c))")));
  EXPECT_EQ(rep.final_reachable_states, 2u);

  // the reverse order has Bob bring wine
  auto rev = synthesize(m.spec(parse_order("x_B < x_A")), SchemeId::parse("top"));
  EXPECT_TRUE(eval_state(*m.env, *rev.theta.at("x_A"), start));
  EXPECT_FALSE(eval_state(*m.env, *rev.theta.at("x_B"), start));
}

TEST(Synth, PicnicAgreesAcrossSchemes) {
  const auto& m = picnic();
  auto top = synthesize(m.spec(), SchemeId::parse("top"));
  for (const char* s : {"ii-ir-sc", "ii-ir-nsc", "pi-ir-sc", "pi-ir-nsc"}) {
    auto rep = synthesize(m.spec(), SchemeId::parse(s));
    EXPECT_TRUE(rep.all_verified()) << s;
    StateId start = m.env->initial()[0];
    for (const auto& x : {"x_A", "x_B"})
      EXPECT_EQ(eval_state(*m.env, *rep.theta.at(x), start), eval_state(*m.env, *top.theta.at(x), start)) << s;
  }
  EXPECT_THROW(synthesize(m.spec(), SchemeId::parse("ii-ir-sc"), Budget::parse("candidates=2")), Refusal);
}

TEST(Synth, RobotOrderedSynthesis) {
  const auto& m = robot();
  auto rep = synthesize(m.spec(), SchemeId::parse("top"));
  EXPECT_EQ(to_string(rep.theta.at("x")), "sensA >= 3");
  EXPECT_EQ(to_string(rep.theta.at("y")), "sensB >= 7");
  EXPECT_TRUE(rep.all_verified());
  auto sys = build_concrete(m.env, m.templates, rep.theta);
  EXPECT_TRUE(models(sys, parse_formula("AG (posA <= 4)")));
  std::set<int> halts;
  for (auto s : reachable_states(sys))
    if (m.env->value(s, 2) == 1) halts.insert(m.env->value(s, 0));
  EXPECT_EQ(halts, (std::set<int>{2, 3, 4}));
}

TEST(Synth, FalseKnowledgeGivesFalse) {
  const auto& m = picnic();
  auto spec = m.spec();
  spec.kappa["x_A"] = parse_formula("K[A] false");
  spec.extra.clear();
  auto rep = synthesize(spec, SchemeId::parse("top"));
  EXPECT_EQ(to_string(rep.theta.at("x_A")), "false");
  EXPECT_TRUE(rep.kappa_verified());
}

TEST(Synth, RefusesNonPositiveKappa) {
  const auto& m = picnic();
  auto spec = m.spec();
  spec.kappa["x_A"] = parse_formula("K[A] !K[B] w");
  EXPECT_THROW(synthesize(spec, SchemeId::parse("top")), Refusal);
  spec.kappa["x_A"] = parse_formula("K[B] w");
  EXPECT_THROW(validate_spec(spec), UsageError);
  spec.kappa.erase("x_A");
  EXPECT_THROW(validate_spec(spec), UsageError);
}

TEST(Synth, VerifyImplementation) {
  const auto& m = robot();
  auto spec = m.spec();
  spec.extra.clear();
  Substitution theta = {{"x", parse_formula("sensA >= 4")}, {"y", fm::falsity()}};
  auto slp = verify_implementation(spec, theta, VerifyMode::Slp);
  for (const auto& v : slp)
    if (v.variable == "x") EXPECT_TRUE(v.holds);
  auto kbp = verify_implementation(spec, theta, VerifyMode::Kbp);
  bool x_fails = false;
  for (const auto& v : kbp)
    if (v.variable == "x" && !v.holds) {
      x_fails = true;
      ASSERT_TRUE(v.witness.has_value());
      EXPECT_EQ(m.env->value(*v.witness, 1), 3);
    }
  EXPECT_TRUE(x_fails);

  Substitution bottom = {{"x", fm::falsity()}, {"y", fm::falsity()}};
  for (const auto& v : verify_implementation(spec, bottom)) EXPECT_TRUE(v.holds);
  const auto& p = picnic();
  auto rep = synthesize(p.spec(), SchemeId::parse("top"));
  for (const auto& v : verify_implementation(p.spec(), rep.theta)) EXPECT_TRUE(v.holds);
}

TEST(Synth, PicnicHasNoKbpImplementation) {
  auto found = kbp_find(picnic().spec());
  EXPECT_TRUE(found.implementations.empty());
  EXPECT_GT(found.candidates, 0u);
}

TEST(Synth, ErrorFreeRobotKbp) {
  const auto& m = robot0();
  auto found = kbp_find(m.spec());
  ASSERT_FALSE(found.implementations.empty());
  bool halts_2_3 = false;
  for (const auto& impl : found.implementations) {
    auto sys = build_concrete(m.env, m.templates, impl.theta);
    if (models(sys, parse_formula("AG (haltA = 1 => posA = 2)")) && models(sys, parse_formula("AG (haltB = 1 => posB = 3)")))
      halts_2_3 = true;
    for (const auto& v : verify_implementation(m.spec(), impl.theta, VerifyMode::Slp)) EXPECT_TRUE(v.holds);
  }
  EXPECT_TRUE(halts_2_3);
  EXPECT_THROW(kbp_find(m.spec(), Budget::parse("kbp=10")), Refusal);
}

TEST(Synth, TautologicalKnowledgeKbp) {
  auto text = R"(
agents A
var s : 0..1
obs A : s
actions A : a
rule [a] when s = 0 : s' = 1
rule [a] when s = 1
init s = 0
template A { x -> a }
know x := K[A] true
)";
  auto m = expand(parse_model(text));
  auto found = kbp_find(m.spec());
  ASSERT_EQ(found.implementations.size(), 1u);
  for (auto v : found.implementations[0].tables.at("x")) EXPECT_EQ(v, Tri::True);
}

// Every implementation found for the strict program also satisfies the
// weakened one.
TEST(Synth, KbpImplementationsAreSlpImplementations) {
  std::mt19937_64 rng(31);
  int found_any = 0;
  for (int trial = 0; trial < 60; ++trial) {
    auto m = fixtures::random_model(rng);
    EpistemicSpec spec;
    spec.env = m.env;
    spec.templates = m.templates;
    std::set<std::string> vars;
    for (const auto& t : m.templates)
      for (const auto& x : template_vars(t)) {
        vars.insert(x);
        spec.kappa[x] = fm::know(m.env->agents()[t.agent].name, fixtures::random_ctlk_plus(rng, *m.env, 2));
      }
    spec.order = {vars};
    KbpSearch res;
    try {
      res = kbp_find(spec, Budget::parse("kbp=4096"));
    } catch (const Refusal&) {
      continue;
    }
    for (const auto& impl : res.implementations) {
      ++found_any;
      for (const auto& v : verify_implementation(spec, impl.theta, VerifyMode::Slp)) EXPECT_TRUE(v.holds);
      for (const auto& v : verify_implementation(spec, impl.theta, VerifyMode::Kbp)) EXPECT_TRUE(v.holds);
    }
  }
  EXPECT_GT(found_any, 0);
}

// Ordered synthesis always verifies, whatever the scheme.
TEST(Synth, RandomSynthesisIsSound) {
  std::mt19937_64 rng(64);
  for (int trial = 0; trial < 60; ++trial) {
    auto m = fixtures::random_model(rng);
    EpistemicSpec spec;
    spec.env = m.env;
    spec.templates = m.templates;
    for (const auto& t : m.templates)
      for (const auto& x : template_vars(t)) {
        spec.kappa[x] = fm::know(m.env->agents()[t.agent].name, fixtures::random_ctlk_plus(rng, *m.env, 3));
        spec.order.push_back({x});
      }
    for (const char* s : {"top", "ii-ir-sc", "pi-ir-nsc"}) {
      try {
        auto rep = synthesize(spec, SchemeId::parse(s), Budget::parse("candidates=200000"));
        EXPECT_TRUE(rep.kappa_verified()) << s;
        for (const auto& st : rep.stages) EXPECT_TRUE(st.equivalence_holds) << s;
      } catch (const Refusal&) {
      }
    }
  }
}

TEST(Synth, OrderedRobotResultsAreKbpImplementations) {
  for (const auto* m : {&robot(), &robot0()}) {
    auto rep = synthesize(m->spec(), SchemeId::parse("top"));
    for (const auto& v : verify_implementation(m->spec(), rep.theta, VerifyMode::Kbp)) EXPECT_TRUE(v.holds) << v.variable;
  }
  EXPECT_EQ(to_string(synthesize(robot0().spec(), SchemeId::parse("top")).theta.at("x")), "sensA >= 2");
}
