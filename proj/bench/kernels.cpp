// Serial reference kernels against their OpenMP counterparts.

#include "mter/config.hpp"
#include "mter/fixtures.hpp"
#include "mter/reference.hpp"

#include <benchmark/benchmark.h>

#include <random>

using namespace mter;

namespace {

struct Frozen {
  Model model;
  LinkEnvironment env;
  ValueFunctions values;
  Policies policies;
};

Frozen freeze(Model model) {
  std::mt19937_64 rng(1);
  std::uniform_real_distribution<double> U(0.0, 1.0);
  LinkEnvironment env;
  for (std::size_t a = 0; a < model.network.num_links(); ++a) {
    env.time.push_back(model.network.free_flow_time(static_cast<LinkIndex>(a)) * (1.0 + U(rng)));
    const double m = 0.9 * U(rng);
    env.match.push_back(m);
    env.match_complement.push_back(1.0 - m);
  }
  ValueFunctions v = solve_values(env, model.smdp, model.network, model.demand).values;
  Policies p = choice_probabilities(v, model.smdp, model.network, model.demand);
  return {std::move(model), std::move(env), std::move(v), std::move(p)};
}

const Frozen& sioux_falls() {
  static const Frozen f =
      freeze(load_scenario(RunConfig::from_file(std::string(MTER_SOURCE_DIR) + "/configs/siouxfalls.cfg")).model);
  return f;
}

const Frozen& small() {
  static const Frozen f = freeze(fixtures::random_instance(6, 3, 100.0));
  return f;
}

void BM_bellman_serial(benchmark::State& state) {
  const Frozen& f = sioux_falls();
  for (auto _ : state) {
    benchmark::DoNotOptimize(reference::bellman_apply(f.values, f.env, f.model.smdp, f.model.network, f.model.demand));
  }
}

void BM_bellman_parallel(benchmark::State& state) {
  const Frozen& f = sioux_falls();
  for (auto _ : state) {
    benchmark::DoNotOptimize(bellman_apply(f.values, f.env, f.model.smdp, f.model.network, f.model.demand));
  }
}

void BM_chain_serial(benchmark::State& state) {
  const Frozen& f = sioux_falls();
  for (auto _ : state) {
    benchmark::DoNotOptimize(reference::build_chain(f.policies, f.env, f.model.demand, f.model.network));
  }
}

void BM_chain_parallel(benchmark::State& state) {
  const Frozen& f = sioux_falls();
  for (auto _ : state) benchmark::DoNotOptimize(build_chain(f.policies, f.env, f.model.demand, f.model.network));
}

SimConfig sim_config() {
  SimConfig c;
  c.horizon = 2000.0;
  c.warmup = 100.0;
  c.vehicles = 64;
  return c;
}

void BM_simulate_serial(benchmark::State& state) {
  const Frozen& f = small();
  for (auto _ : state) {
    benchmark::DoNotOptimize(
        reference::simulate({f.model.network, f.model.demand, f.env, f.policies}, sim_config()));
  }
}

void BM_simulate_parallel(benchmark::State& state) {
  const Frozen& f = small();
  for (auto _ : state) {
    benchmark::DoNotOptimize(simulate({f.model.network, f.model.demand, f.env, f.policies}, sim_config()));
  }
}

}  // namespace

BENCHMARK(BM_bellman_serial)->Unit(benchmark::kMillisecond)->UseRealTime();
BENCHMARK(BM_bellman_parallel)->Unit(benchmark::kMillisecond)->UseRealTime();
BENCHMARK(BM_chain_serial)->Unit(benchmark::kMillisecond)->UseRealTime();
BENCHMARK(BM_chain_parallel)->Unit(benchmark::kMillisecond)->UseRealTime();
BENCHMARK(BM_simulate_serial)->Unit(benchmark::kMillisecond)->UseRealTime();
BENCHMARK(BM_simulate_parallel)->Unit(benchmark::kMillisecond)->UseRealTime();

BENCHMARK_MAIN();
