#include "support.hpp"

#include "mter/errors.hpp"
#include "mter/reference.hpp"

#include <doctest.h>

#include <cmath>
#include <numeric>

using namespace mter;
using testing::max_abs_diff;

namespace {

struct Frozen {
  LinkEnvironment env;
  Policies policies;
};

Frozen frozen(const Model& model, std::uint64_t seed, double zero_share = 0.2) {
  std::mt19937_64 rng(seed);
  Frozen f;
  f.env = testing::random_env(model.network, rng, zero_share);
  const ValueSolve vs = solve_values(f.env, model.smdp, model.network, model.demand);
  f.policies = choice_probabilities(vs.values, model.smdp, model.network, model.demand);
  return f;
}

double rel_diff(const std::vector<double>& a, const std::vector<double>& b) {
  double scale = 0.0;
  for (double x : b) scale = std::max(scale, std::abs(x));
  return max_abs_diff(a, b) / scale;
}

}  // namespace

TEST_CASE("parallel chain assembly matches the serial reference") {
  for (std::uint64_t seed : {1, 2, 3}) {
    const Model model = fixtures::random_instance(6, seed);
    const Frozen f = frozen(model, seed);
    const ChainSpec fast = build_chain(f.policies, f.env, model.demand, model.network);
    const ChainSpec ref = reference::build_chain(f.policies, f.env, model.demand, model.network);
    REQUIRE(fast.num_states() == model.network.num_states());
    CHECK(max_abs_diff(fast.holding, ref.holding) == 0.0);
    const Eigen::MatrixXd P = reference::jump_matrix(fast);
    CHECK((P - reference::jump_matrix(ref)).cwiseAbs().maxCoeff() <= 1e-15);
    CHECK((P.rowwise().sum().array() - 1.0).abs().maxCoeff() <= 1e-12);
  }
}

TEST_CASE("chain rejects nonpositive travel times") {
  const Model model = fixtures::random_instance(4, 1);
  Frozen f = frozen(model, 1);
  f.env.time[0] = 0.0;
  CHECK_THROWS_AS(build_chain(f.policies, f.env, model.demand, model.network), DomainError);
}

TEST_CASE("stationary routes agree: sparse LU, power iteration, dense LU") {
  const Model model = fixtures::random_instance(5, 4);
  const Frozen f = frozen(model, 4, 0.0);
  ChainSpec chain = build_chain(f.policies, f.env, model.demand, model.network);
  prune_transient(chain, f.env, model.demand, model.network);
  StationaryDiagnostics dd, dp;
  const auto direct = stationary_direct(chain, &dd);
  const auto power = stationary_power(chain, 1e-15, 50'000'000, &dp);
  CHECK(rel_diff(power, direct) <= 1e-8);
  CHECK(dd.generator_residual <= 1e-10);
  CHECK(std::abs(std::accumulate(direct.begin(), direct.end(), 0.0) - 1.0) <= 1e-12);
  for (std::size_t s = 0; s < direct.size(); ++s) {
    if (!chain.recurrent[s]) CHECK(direct[s] == 0.0);
  }
  if (std::all_of(chain.recurrent.begin(), chain.recurrent.end(), [](auto r) { return r != 0; })) {
    CHECK(rel_diff(reference::stationary_dense(chain), direct) <= 1e-9);
  }
}

TEST_CASE("occupancy on a bare cycle is proportional to travel time") {
  const Model model = fixtures::directed_cycle({0.2, 0.5, 0.3, 1.0}, 50.0, 20.0, 0.0);
  LinkEnvironment env{{0.25, 0.5, 0.4, 1.1}, {0, 0, 0, 0}, {1, 1, 1, 1}};
  const ValueSolve vs = solve_values(env, model.smdp, model.network, model.demand);
  const Policies pol = choice_probabilities(vs.values, model.smdp, model.network, model.demand);
  const LoadingResult r = load_network(pol, env, model.demand, model.network, 20.0);
  const double T = 0.25 + 0.5 + 0.4 + 1.1;
  for (std::size_t a = 0; a < 4; ++a) CHECK(r.masses.empty[a] == doctest::Approx(20.0 * env.time[a] / T).epsilon(1e-12));
  for (double y : r.masses.hired) CHECK(y == 0.0);
}

TEST_CASE("no matching leaves every hired state transient") {
  const Model model = fixtures::random_instance(5, 6);
  Frozen f = frozen(model, 6);
  std::fill(f.env.match.begin(), f.env.match.end(), 0.0);
  std::fill(f.env.match_complement.begin(), f.env.match_complement.end(), 1.0);
  const auto structural = structurally_transient(f.env, model.demand, model.network);
  for (std::size_t s = model.network.num_links(); s < structural.size(); ++s) CHECK(structural[s] == 1);
  const LoadingResult r = load_network(f.policies, f.env, model.demand, model.network, 100.0);
  for (double y : r.masses.hired) CHECK(y == 0.0);
  CHECK(r.masses.total() == doctest::Approx(100.0));
}

TEST_CASE("structural pruning agrees with the component sweep") {
  for (std::uint64_t seed : {3, 7, 12}) {
    const Model model = fixtures::random_instance(6, seed);
    const Frozen f = frozen(model, seed, 0.5);
    ChainSpec chain = build_chain(f.policies, f.env, model.demand, model.network);
    const auto structural = structurally_transient(f.env, model.demand, model.network);
    prune_transient(chain, f.env, model.demand, model.network);
    for (std::size_t s = 0; s < structural.size(); ++s) {
      if (structural[s]) CHECK(chain.recurrent[s] == 0);
    }
  }
}

TEST_CASE("loading methods agree and conserve flow") {
  for (std::uint64_t seed : {2, 5}) {
    const Model model = fixtures::random_instance(7, seed);
    const Frozen f = frozen(model, seed);
    const double M = model.network.pool_size();
    LoadingOptions direct{LoadingMethod::direct};
    LoadingOptions power{LoadingMethod::power};
    const auto a = load_network(f.policies, f.env, model.demand, model.network, M, direct);
    const auto b = load_network(f.policies, f.env, model.demand, model.network, M, power);
    const auto c = load_network_blocked(f.policies, f.env, model.demand, model.network, M);
    const auto va = to_state_vector(a.masses);
    CHECK(rel_diff(to_state_vector(b.masses), va) <= 1e-8);
    CHECK(rel_diff(to_state_vector(c.masses), va) <= 1e-9);
    CHECK(a.masses.total() == doctest::Approx(M).epsilon(1e-12));
    const double scale = M / *std::min_element(f.env.time.begin(), f.env.time.end());
    CHECK(flow_balance_residual(a.masses, f.policies, f.env, model.demand, model.network) <= 1e-9 * scale);

    ChainSpec chain = build_chain(f.policies, f.env, model.demand, model.network);
    CHECK(balance_residual(chain, va) <= 1e-9 * scale);
  }
}

TEST_CASE("state vector round trip") {
  const Model model = fixtures::random_instance(4, 2);
  MassDistribution m = random_masses(model.network, 10.0, 3);
  const auto v = to_state_vector(m);
  const MassDistribution back = from_state_vector(v, model.network.num_links());
  CHECK(back.empty == m.empty);
  CHECK(back.hired == m.hired);
}

TEST_CASE("link state from masses") {
  const Model model = fixtures::random_instance(4, 8);
  const MassDistribution m = random_masses(model.network, 300.0, 5);
  const LinkState s = masses_to_env(m, model.network);
  const auto u = m.link_mass(model.network);
  for (std::size_t a = 0; a < model.network.num_links(); ++a) {
    const Link& l = model.network.link(static_cast<LinkIndex>(a));
    CHECK(s.mass[a] == doctest::Approx(u[a]));
    CHECK(s.time[a] == doctest::Approx(travel_time(l, u[a])));
    CHECK(s.empty_flow[a] == doctest::Approx(m.empty[a] / s.time[a]));
    CHECK(s.match[a] == doctest::Approx(matching_probability(l, s.empty_flow[a])));
  }
  const LinkState ff = masses_to_env_free_flow(m, model.network);
  for (std::size_t a = 0; a < model.network.num_links(); ++a) {
    CHECK(ff.time[a] == model.network.free_flow_time(static_cast<LinkIndex>(a)));
  }
}
