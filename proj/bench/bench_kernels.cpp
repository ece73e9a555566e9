#include <benchmark/benchmark.h>

#include "episynth/approx.hpp"
#include "episynth/dsl.hpp"
#include "episynth/mck.hpp"

using namespace episynth;

namespace {

const ExpandedModel& robot(int length) {
  static std::map<int, ExpandedModel> cache;
  auto it = cache.find(length);
  if (it == cache.end()) it = cache.emplace(length, expand(gen_robot(1, length))).first;
  return it->second;
}

const char* kFormulas[] = {
    "K[A] (posA >= 2)",
    "A[haltA = 0 U posA >= 2]",
    "K[B] (posB = 7 => AG (posA < 6))",
};

void check_args(benchmark::internal::Benchmark* b) {
  for (int length : {6, 10, 14})
    for (int f = 0; f < 3; ++f) b->Args({length, f});
}

void BM_CheckSerial(benchmark::State& state) {
  const auto& m = robot(static_cast<int>(state.range(0)));
  auto sys = build_top(m.env, m.templates, {});
  auto f = parse_formula(kFormulas[state.range(1)]);
  for (auto _ : state) benchmark::DoNotOptimize(check(sys, f, ExecPolicy::Serial));
  state.counters["states"] = static_cast<double>(sys.components[0].size());
}
BENCHMARK(BM_CheckSerial)->Apply(check_args)->Unit(benchmark::kMillisecond);

void BM_CheckParallel(benchmark::State& state) {
  const auto& m = robot(static_cast<int>(state.range(0)));
  auto sys = build_top(m.env, m.templates, {});
  auto f = parse_formula(kFormulas[state.range(1)]);
  for (auto _ : state) benchmark::DoNotOptimize(check(sys, f, ExecPolicy::Parallel));
  state.counters["states"] = static_cast<double>(sys.components[0].size());
}
BENCHMARK(BM_CheckParallel)->Apply(check_args)->Unit(benchmark::kMillisecond);

void BM_CheckReference(benchmark::State& state) {
  const auto& m = robot(static_cast<int>(state.range(0)));
  auto sys = build_top(m.env, m.templates, {});
  auto f = parse_formula(kFormulas[state.range(1)]);
  for (auto _ : state) benchmark::DoNotOptimize(check_reference(sys, f));
}
BENCHMARK(BM_CheckReference)->Apply(check_args)->Unit(benchmark::kMillisecond);

// the picnic strategy space is small; the robot one at length 4 is not
const Budget kBench = Budget::parse("states=128,obs=16,actions=4,candidates=4000000");

void BM_EnumerateSerial(benchmark::State& state) {
  auto m = expand(gen_picnic());
  auto c = state.range(0) ? Consistency::Nsc : Consistency::Sc;
  for (auto _ : state)
    benchmark::DoNotOptimize(enumerate_ir_strategies(m.env, m.templates, {}, Info::Pi, c, kBench, ExecPolicy::Serial));
}
BENCHMARK(BM_EnumerateSerial)->Arg(0)->Arg(1);

void BM_EnumerateParallel(benchmark::State& state) {
  auto m = expand(gen_picnic());
  auto c = state.range(0) ? Consistency::Nsc : Consistency::Sc;
  for (auto _ : state)
    benchmark::DoNotOptimize(enumerate_ir_strategies(m.env, m.templates, {}, Info::Pi, c, kBench, ExecPolicy::Parallel));
}
BENCHMARK(BM_EnumerateParallel)->Arg(0)->Arg(1);

void BM_EnumerateReference(benchmark::State& state) {
  auto m = expand(gen_picnic());
  auto c = state.range(0) ? Consistency::Nsc : Consistency::Sc;
  for (auto _ : state) benchmark::DoNotOptimize(enumerate_ir_reference(m.env, m.templates, {}, Info::Pi, c, kBench));
}
BENCHMARK(BM_EnumerateReference)->Arg(0)->Arg(1);

void BM_Expand(benchmark::State& state) {
  auto file = gen_robot(1, static_cast<int>(state.range(0)));
  for (auto _ : state) benchmark::DoNotOptimize(expand(file));
}
BENCHMARK(BM_Expand)->Arg(6)->Arg(10)->Unit(benchmark::kMillisecond);

}  // namespace

BENCHMARK_MAIN();
