#include <gtest/gtest.h>

#include <algorithm>
#include <random>
#include <set>

#include "episynth/approx.hpp"
#include "episynth/dsl.hpp"
#include "episynth/errors.hpp"
#include "support.hpp"

using namespace episynth;

namespace {

const ExpandedModel& picnic() {
  static const ExpandedModel m = expand(gen_picnic());
  return m;
}

std::set<std::string> labels(const Environment& env, const std::vector<StateId>& states) {
  std::set<std::string> out;
  for (auto s : states) out.insert(env.state_label(s));
  return out;
}

std::vector<Signature> signatures(const std::vector<IRStrategy>& ss) {
  std::vector<Signature> out;
  for (const auto& s : ss) out.push_back(s.signature());
  return out;
}

size_t distinct(const std::vector<Signature>& sigs) { return std::set<Signature>(sigs.begin(), sigs.end()).size(); }

bool subset(const std::vector<Signature>& a, const std::vector<Signature>& b) {
  std::set<Signature> sb(b.begin(), b.end());
  return std::all_of(a.begin(), a.end(), [&](const Signature& s) { return sb.count(s) > 0; });
}

const Budget kSmall = Budget::parse("states=64,obs=8,actions=4,candidates=200000");

}  // namespace

TEST(Approx, SchemeNames) {
  EXPECT_EQ(SchemeId::parse("top").kind, SchemeId::Kind::Top);
  EXPECT_EQ(SchemeId::parse("concrete").kind, SchemeId::Kind::Concrete);
  auto s = SchemeId::parse("pi-ir-sc");
  EXPECT_EQ(s.kind, SchemeId::Kind::Class);
  EXPECT_EQ(s.info, Info::Pi);
  EXPECT_EQ(s.consistency, Consistency::Sc);
  EXPECT_EQ(s.name(), "pi-ir-sc");
  EXPECT_EQ(SchemeId::parse("ii-ir-nsc").name(), "ii-ir-nsc");
  for (const char* pr : {"pi-pr-sc", "pi-pr-nsc", "ii-pr-sc", "ii-pr-nsc"}) {
    try {
      SchemeId::parse(pr);
      FAIL() << pr;
    } catch (const Refusal& e) {
      EXPECT_NE(std::string(e.what()).find("perfect-recall"), std::string::npos);
    }
  }
  EXPECT_THROW(SchemeId::parse("ii-xx-sc"), UsageError);
  EXPECT_THROW(SchemeId::parse("bottom"), UsageError);
}

TEST(Approx, BudgetParsing) {
  auto b = Budget::parse("states=10,kbp=5");
  EXPECT_EQ(b.max_states, 10u);
  EXPECT_EQ(b.max_kbp_candidates, 5u);
  EXPECT_EQ(b.max_observations, Budget{}.max_observations);
  EXPECT_THROW(Budget::parse("states"), UsageError);
  EXPECT_THROW(Budget::parse("states=x"), UsageError);
  EXPECT_THROW(Budget::parse("colors=3"), UsageError);
}

TEST(Approx, ConcreteSystem) {
  const auto& m = picnic();
  const auto& env = *m.env;
  auto sys = build_concrete(m.env, m.templates, {{"x_A", fm::falsity()}, {"x_B", fm::truth()}});
  ASSERT_EQ(sys.components.size(), 1u);
  EXPECT_EQ(labels(env, sys.components[0].successor_states(env.initial()[0])),
            std::set<std::string>{"start=0,w=1,c=1"});
  EXPECT_THROW(build_concrete(m.env, m.templates, {{"x_A", fm::falsity()}}), UsageError);

  std::vector<ProtocolTemplate> idle = {{0, {{fm::falsity(), 1}}}, {1, {{fm::falsity(), 1}}}};
  auto still = build_concrete(m.env, idle, {});
  for (auto s : reachable_states(still)) EXPECT_EQ(still.components[0].successor_states(s), std::vector<StateId>{s});
}

TEST(Approx, TopSystem) {
  const auto& m = picnic();
  const auto& env = *m.env;
  StateId start = env.initial()[0];
  auto top = build_top(m.env, m.templates, {});
  EXPECT_EQ(labels(env, top.components[0].successor_states(start)),
            (std::set<std::string>{"start=0,w=1,c=0", "start=0,w=1,c=1", "start=0,w=0,c=1"}));
  auto half = build_top(m.env, m.templates, {{"x_A", fm::falsity()}});
  EXPECT_EQ(labels(env, half.components[0].successor_states(start)),
            (std::set<std::string>{"start=0,w=1,c=0", "start=0,w=1,c=1"}));
}

TEST(Approx, TopEqualsConcreteForTotalSubstitutions) {
  std::mt19937_64 rng(41);
  for (int trial = 0; trial < 100; ++trial) {
    auto m = fixtures::random_model(rng);
    auto theta = fixtures::random_theta(rng, m, 1.0);
    auto top = build_top(m.env, m.templates, theta);
    auto concrete = build_concrete(m.env, m.templates, theta);
    EXPECT_EQ(component_signature(top.components[0]), component_signature(concrete.components[0]));
    auto via_scheme = build_scheme(m.env, m.templates, theta, SchemeId::parse("top"));
    EXPECT_EQ(component_signature(via_scheme.components[0]), component_signature(concrete.components[0]));
  }
}

TEST(Approx, TopStrategyIsNotSubstitutionConsistent) {
  auto m = fixtures::three_state();
  const auto& env = *m.env;
  auto top = build_top(m.env, m.templates, {});
  EXPECT_EQ(top.components[0].successor_states(0), (std::vector<StateId>{1, 2}));
  for (Info info : {Info::Ii, Info::Pi}) {
    // choices at the absorbing states are behaviourally idle but still count:
    // sc is 2 choices at s=0 times 3 at the state reached, nsc adds {a,b} at s=0
    auto sc = enumerate_ir_strategies(m.env, m.templates, {}, info, Consistency::Sc, kSmall);
    ASSERT_EQ(sc.size(), 6u);
    for (const auto& s : sc) EXPECT_EQ(s.successors(0).size(), 1u);
    EXPECT_EQ(distinct(signatures(sc)), 2u);
    auto nsc = enumerate_ir_strategies(m.env, m.templates, {}, info, Consistency::Nsc, kSmall);
    EXPECT_EQ(nsc.size(), 3u + 3u + 9u);
    EXPECT_EQ(distinct(signatures(nsc)), 3u);
    EXPECT_TRUE(subset({component_signature(top.components[0])}, signatures(nsc)));
  }
  (void)env;
}

TEST(Approx, CountsOnTinyModels) {
  auto m = fixtures::one_action();
  auto nsc = enumerate_ir_strategies(m.env, m.templates, {}, Info::Ii, Consistency::Nsc, kSmall);
  EXPECT_EQ(nsc.size(), 3u);
  std::set<ActionMask> choices;
  for (const auto& s : nsc) choices.insert(s.choice[0].at(0));
  EXPECT_EQ(choices, (std::set<ActionMask>{1, 2, 3}));

  const auto& p = picnic();
  auto sc = enumerate_ir_strategies(p.env, p.templates, {}, Info::Ii, Consistency::Sc, kSmall);
  EXPECT_EQ(sc.size(), 4u);
  std::set<StateId> after;
  for (const auto& s : sc) {
    auto succ = s.successors(p.env->initial()[0]);
    EXPECT_EQ(succ.size(), 1u);
    after.insert(succ.begin(), succ.end());
  }
  EXPECT_EQ(labels(*p.env, {after.begin(), after.end()}),
            (std::set<std::string>{"start=0,w=1,c=0", "start=0,w=1,c=1", "start=0,w=0,c=1"}));
}

TEST(Approx, StrategyAccessors) {
  const auto& p = picnic();
  auto sc = enumerate_ir_strategies(p.env, p.templates, {}, Info::Pi, Consistency::Sc, kSmall);
  ASSERT_FALSE(sc.empty());
  StateId start = p.env->initial()[0];
  EXPECT_NE(sc[0].choice_at(0, start, *p.env), 0u);
  EXPECT_THROW(sc[0].choice_at(0, 7, *p.env), UsageError);
}

TEST(Approx, UnionSystems) {
  const auto& p = picnic();
  StateId start = p.env->initial()[0];
  auto sys = build_scheme(p.env, p.templates, {}, SchemeId::parse("ii-ir-sc"), kSmall);
  EXPECT_EQ(sys.components.size(), 4u);
  EXPECT_FALSE(check(sys, parse_formula("K[A] AX w")).at(sys, 0, start));

  auto forced = build_scheme(p.env, p.templates, {{"x_A", fm::falsity()}}, SchemeId::parse("ii-ir-sc"), kSmall);
  EXPECT_EQ(forced.components.size(), 2u);
  EXPECT_TRUE(models(forced, parse_formula("AX w")));

  EXPECT_THROW(build_union_system(p.env, {}), UsageError);
  auto one = enumerate_ir_strategies(p.env, p.templates, {}, Info::Ii, Consistency::Sc, kSmall);
  one.resize(1);
  auto single = build_union_system(p.env, one);
  ASSERT_EQ(single.components.size(), 1u);
  EXPECT_EQ(component_signature(single.components[0]), one[0].signature());
}

TEST(Approx, BudgetRefusals) {
  auto r = expand(gen_robot(1));
  try {
    build_scheme(r.env, r.templates, {}, SchemeId::parse("ii-ir-sc"), Budget{});
    FAIL();
  } catch (const Refusal& e) {
    EXPECT_NE(std::string(e.what()).find("64"), std::string::npos);
  }
  const auto& p = picnic();
  EXPECT_THROW(enumerate_ir_strategies(p.env, p.templates, {}, Info::Pi, Consistency::Nsc, Budget::parse("candidates=3")),
               Refusal);
  EXPECT_THROW(enumerate_ir_strategies(p.env, p.templates, {}, Info::Pi, Consistency::Nsc, Budget::parse("actions=2")),
               Refusal);
}

TEST(Approx, ParallelEnumerationMatchesReference) {
  std::mt19937_64 rng(77);
  for (int trial = 0; trial < 60; ++trial) {
    auto m = fixtures::random_model(rng);
    auto theta = fixtures::random_theta(rng, m, 0.4);
    for (Info info : {Info::Ii, Info::Pi})
      for (Consistency c : {Consistency::Sc, Consistency::Nsc}) {
        std::vector<Signature> fast, serial, ref;
        try {
          fast = signatures(enumerate_ir_strategies(m.env, m.templates, theta, info, c, kSmall, ExecPolicy::Parallel));
          serial = signatures(enumerate_ir_strategies(m.env, m.templates, theta, info, c, kSmall, ExecPolicy::Serial));
          ref = enumerate_ir_reference(m.env, m.templates, theta, info, c, kSmall);
        } catch (const Refusal&) {
          continue;
        }
        EXPECT_EQ(fast, serial);
        EXPECT_EQ(fast, ref);
      }
  }
}

TEST(Approx, StrategiesAreJustifiedAndTotal) {
  std::mt19937_64 rng(13);
  for (int trial = 0; trial < 40; ++trial) {
    auto m = fixtures::random_model(rng);
    std::vector<IRStrategy> ss;
    try {
      ss = enumerate_ir_strategies(m.env, m.templates, {}, Info::Pi, Consistency::Nsc, kSmall);
    } catch (const Refusal&) {
      continue;
    }
    auto sys = build_union_system(m.env, ss);
    EXPECT_TRUE(validate_bundle(sys).empty());
  }
}

TEST(Approx, TopStrategyBelongsToImperfectInformationNsc) {
  std::mt19937_64 rng(99);
  int checked = 0;
  for (int trial = 0; trial < 80; ++trial) {
    auto m = fixtures::random_model(rng);
    auto theta = fixtures::random_theta(rng, m, 0.5);
    auto top = build_top(m.env, m.templates, theta);
    std::vector<IRStrategy> nsc;
    try {
      nsc = enumerate_ir_strategies(m.env, m.templates, theta, Info::Ii, Consistency::Nsc, kSmall);
    } catch (const Refusal&) {
      continue;
    }
    ++checked;
    EXPECT_TRUE(subset({component_signature(top.components[0])}, signatures(nsc)));
  }
  EXPECT_GT(checked, 40);
}

TEST(Approx, LatticeContainment) {
  std::mt19937_64 rng(5);
  for (int trial = 0; trial < 60; ++trial) {
    auto m = fixtures::random_model(rng);
    auto theta = fixtures::random_theta(rng, m, 0.3);
    try {
      auto ii_sc = signatures(enumerate_ir_strategies(m.env, m.templates, theta, Info::Ii, Consistency::Sc, kSmall));
      auto ii_nsc = signatures(enumerate_ir_strategies(m.env, m.templates, theta, Info::Ii, Consistency::Nsc, kSmall));
      auto pi_sc = signatures(enumerate_ir_strategies(m.env, m.templates, theta, Info::Pi, Consistency::Sc, kSmall));
      auto pi_nsc = signatures(enumerate_ir_strategies(m.env, m.templates, theta, Info::Pi, Consistency::Nsc, kSmall));
      EXPECT_TRUE(subset(ii_sc, ii_nsc));
      EXPECT_TRUE(subset(pi_sc, pi_nsc));
      EXPECT_TRUE(subset(ii_sc, pi_sc));
      EXPECT_TRUE(subset(ii_nsc, pi_nsc));
    } catch (const Refusal&) {
    }
  }
}

TEST(Approx, Monotonicity) {
  std::mt19937_64 rng(8);
  for (int trial = 0; trial < 60; ++trial) {
    auto m = fixtures::random_model(rng);
    auto full = fixtures::random_theta(rng, m, 1.0);
    Substitution part;
    for (const auto& [x, f] : full)
      if (std::bernoulli_distribution(0.5)(rng)) part[x] = f;
    auto wide = build_top(m.env, m.templates, part);
    auto narrow = build_top(m.env, m.templates, full);
    for (auto s : reachable_states(narrow)) {
      auto a = narrow.components[0].successor_states(s);
      auto b = wide.components[0].successor_states(s);
      EXPECT_TRUE(std::includes(b.begin(), b.end(), a.begin(), a.end()));
    }
    try {
      auto big = signatures(enumerate_ir_strategies(m.env, m.templates, part, Info::Ii, Consistency::Sc, kSmall));
      auto small = signatures(enumerate_ir_strategies(m.env, m.templates, full, Info::Ii, Consistency::Sc, kSmall));
      EXPECT_TRUE(subset(small, big));
    } catch (const Refusal&) {
    }
  }
}

// Without the template constraint the union reaches states the template can
// never produce, so it is no longer equivalent to top and a total
// substitution no longer yields the concrete system.
TEST(Approx, TemplateFreeNscBreaksTheSchemeConditions) {
  auto m = fixtures::model_from_text(R"(
agents A
var s : 0..2
obs A : s
actions A : a b
rule [a] when s = 0 : s' = 1
rule [b] when s = 0 : s' = 2
rule [a] when s >= 1
rule [b] when s >= 1
init s = 0
template A { x -> a }
)");
  auto free = enumerate_ir_strategies(m.env, m.templates, {{"x", fm::truth()}}, Info::Ii, Consistency::Nsc, kSmall,
                                      ExecPolicy::Parallel, Codomain::All);
  auto freesys = build_union_system(m.env, free);
  auto concrete = build_concrete(m.env, m.templates, {{"x", fm::truth()}});
  EXPECT_TRUE(models(concrete, parse_formula("AG (s <= 1)")));
  EXPECT_FALSE(models(freesys, parse_formula("AG (s <= 1)")));

  auto constrained = build_scheme(m.env, m.templates, {{"x", fm::truth()}}, SchemeId::parse("ii-ir-nsc"), kSmall);
  EXPECT_TRUE(models(constrained, parse_formula("AG (s <= 1)")));

  auto free_empty = build_union_system(
      m.env, enumerate_ir_strategies(m.env, m.templates, {}, Info::Ii, Consistency::Nsc, kSmall, ExecPolicy::Parallel,
                                     Codomain::All));
  auto top = build_top(m.env, m.templates, {});
  EXPECT_NE(reachable_states(free_empty), reachable_states(top));
}
