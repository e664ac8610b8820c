#include "support.hpp"

#include "mter/errors.hpp"
#include "mter/reference.hpp"

#include <doctest.h>

#include <cmath>

using namespace mter;
using testing::max_abs_diff;

namespace {

double action_distance(const ValueFunctions& a, const ValueFunctions& b) {
  return std::max(max_abs_diff(a.z, b.z), max_abs_diff(a.w, b.w));
}

}  // namespace

TEST_CASE("log-sum gradient is the logit choice probability") {
  std::mt19937_64 rng(7);
  std::uniform_real_distribution<double> U(-5.0, 5.0);
  for (double scale : {0.5, 1.0, 10.0}) {
    std::vector<double> v(6);
    for (double& x : v) x = U(rng);
    const double G = social_surplus(v, scale);
    double top = *std::max_element(v.begin(), v.end());
    double total = 0.0;
    for (double x : v) total += std::exp(scale * (x - top));
    const double h = 1e-6;
    double sum = 0.0;
    for (std::size_t k = 0; k < v.size(); ++k) {
      auto up = v, dn = v;
      up[k] += h;
      dn[k] -= h;
      const double fd = (social_surplus(up, scale) - social_surplus(dn, scale)) / (2 * h);
      const double p = std::exp(scale * (v[k] - top)) / total;
      CHECK(std::abs(fd - p) <= 1e-6);
      sum += p;
    }
    CHECK(std::abs(sum - 1.0) <= 1e-12);
    CHECK(G >= top);
    CHECK(G <= top + std::log(static_cast<double>(v.size())) / scale + 1e-12);
  }
  CHECK_THROWS_AS(social_surplus(std::vector<double>{}, 1.0), DomainError);
  CHECK(social_surplus(1e6, -1e6, 10.0) == doctest::Approx(1e6));
  CHECK(social_surplus(2.0, 2.0, 4.0) == doctest::Approx(2.0 + std::log(2.0) / 4.0));
}

TEST_CASE("parallel Bellman operator matches the serial reference") {
  const Model model = fixtures::random_instance(7, 3);
  std::mt19937_64 rng(11);
  for (Boundary b : {Boundary::forward_looking, Boundary::myopic}) {
    SmdpParams params = model.smdp;
    params.boundary = b;
    for (int rep = 0; rep < 5; ++rep) {
      const LinkEnvironment env = testing::random_env(model.network, rng);
      const ValueFunctions v = testing::random_values(model.network, rng);
      const ValueFunctions fast = bellman_apply(v, env, params, model.network, model.demand);
      const ValueFunctions ref = reference::bellman_apply(v, env, params, model.network, model.demand);
      CHECK(sup_distance(fast, ref) <= 1e-11);
      const Policies pf = choice_probabilities(fast, params, model.network, model.demand);
      const Policies pr = reference::choice_probabilities(fast, params, model.network, model.demand);
      CHECK(max_abs_diff(pf.p, pr.p) <= 1e-12);
      CHECK(max_abs_diff(pf.q, pr.q) <= 1e-12);
      CHECK(max_abs_diff(pf.accept, pr.accept) <= 1e-12);
      CHECK(max_abs_diff(pf.reject, pr.reject) <= 1e-12);
    }
  }
}

TEST_CASE("Bellman operator contracts at rate exp(-beta t_min)") {
  const Model model = fixtures::random_instance(6, 5);
  std::mt19937_64 rng(2);
  const LinkEnvironment env = testing::random_env(model.network, rng);
  const double modulus = contraction_modulus(env, model.smdp);
  CHECK(modulus < 1.0);
  for (int rep = 0; rep < 50; ++rep) {
    const ValueFunctions v = testing::random_values(model.network, rng);
    const ValueFunctions w = testing::random_values(model.network, rng);
    const double before = action_distance(v, w);
    const double after = action_distance(bellman_apply(v, env, model.smdp, model.network, model.demand),
                                         bellman_apply(w, env, model.smdp, model.network, model.demand));
    CHECK(after <= modulus * before * (1 + 1e-12));
  }
}

TEST_CASE("zero rewards on a bare cycle give zero values") {
  // Singleton choice sets and no passengers: no option value, no reward, no cost.
  Model model = fixtures::directed_cycle({0.2, 0.3, 0.4}, 50.0, 10.0, 0.0);
  model.smdp.empty_cost_per_hour = 0.0;
  model.smdp.hired_cost_per_hour = 0.0;
  LinkEnvironment env{{0.2, 0.3, 0.4}, {0.0, 0.0, 0.0}, {1.0, 1.0, 1.0}};
  const ValueSolve vs = solve_values(env, model.smdp, model.network, model.demand);
  for (double z : vs.values.z) CHECK(std::abs(z) <= 1e-12);
  for (double w : vs.values.w) CHECK(std::abs(w) <= 1e-12);
}

TEST_CASE("value bound includes fares, costs and log-sum option values") {
  const Model model = fixtures::random_instance(6, 9);
  std::mt19937_64 rng(4);
  const LinkEnvironment env = testing::random_env(model.network, rng, 0.0);
  const ValueSolve vs = solve_values(env, model.smdp, model.network, model.demand);
  std::size_t max_degree = 1;
  for (std::size_t i = 0; i < model.network.num_nodes(); ++i) {
    max_degree = std::max(max_degree, model.network.outgoing(static_cast<NodeIndex>(i)).size());
  }
  const double t_max = *std::max_element(env.time.begin(), env.time.end());
  const double per_step = model.demand.fare.maxCoeff() +
                          std::max(model.smdp.empty_cost_per_hour, model.smdp.hired_cost_per_hour) * t_max +
                          std::log(static_cast<double>(max_degree)) / model.smdp.route_scale +
                          std::log(2.0) / model.smdp.accept_scale;
  const double bound = per_step / (1.0 - contraction_modulus(env, model.smdp));
  double vmax = 0.0;
  for (double z : vs.values.z) vmax = std::max(vmax, std::abs(z));
  for (double w : vs.values.w) vmax = std::max(vmax, std::abs(w));
  CHECK(vmax <= bound);
}

TEST_CASE("value iteration reaches its tolerance and leaves sigma and tau consistent") {
  const Model model = fixtures::random_instance(5, 1);
  std::mt19937_64 rng(8);
  const LinkEnvironment env = testing::random_env(model.network, rng);
  const ValueSolve vs = solve_values(env, model.smdp, model.network, model.demand, {1e-10, 100000});
  CHECK(vs.residual <= 1e-10);
  const ValueFunctions again = bellman_apply(vs.values, env, model.smdp, model.network, model.demand);
  CHECK(max_abs_diff(again.z, vs.values.z) <= 1e-9);
  // sigma/tau are recomputed from the returned z/w.
  const ValueFunctions ref = reference::bellman_apply(vs.values, env, model.smdp, model.network, model.demand);
  CHECK(max_abs_diff(ref.sigma, vs.values.sigma) <= 1e-12);
  CHECK(max_abs_diff(ref.tau, vs.values.tau) <= 1e-12);

  CHECK_THROWS_AS(solve_values(env, model.smdp, model.network, model.demand, {1e-12, 2}), ConvergenceError);
}

TEST_CASE("myopic boundary pins tau(d, d) to zero") {
  const Model model = fixtures::random_instance(5, 2);
  SmdpParams params = model.smdp;
  params.boundary = Boundary::myopic;
  std::mt19937_64 rng(1);
  const LinkEnvironment env = testing::random_env(model.network, rng);
  const ValueSolve vs = solve_values(env, params, model.network, model.demand);
  const auto N = model.network.num_nodes();
  for (std::size_t d = 0; d < N; ++d) CHECK(vs.values.tau_at(N, static_cast<NodeIndex>(d), static_cast<NodeIndex>(d)) == 0.0);
  const ValueSolve fwd = solve_values(env, model.smdp, model.network, model.demand);
  for (std::size_t d = 0; d < N; ++d) {
    CHECK(fwd.values.tau_at(N, static_cast<NodeIndex>(d), static_cast<NodeIndex>(d)) == doctest::Approx(fwd.values.sigma[d]));
  }
}

TEST_CASE("choice probabilities are simplices") {
  const Model model = fixtures::random_instance(8, 4);
  std::mt19937_64 rng(5);
  const LinkEnvironment env = testing::random_env(model.network, rng);
  const ValueSolve vs = solve_values(env, model.smdp, model.network, model.demand);
  const Policies pol = choice_probabilities(vs.values, model.smdp, model.network, model.demand);
  const Network& net = model.network;
  const auto N = net.num_nodes();
  for (std::size_t i = 0; i < N; ++i) {
    double s = 0.0;
    for (LinkIndex a : net.outgoing(static_cast<NodeIndex>(i))) s += pol.p[static_cast<std::size_t>(a)];
    CHECK(std::abs(s - 1.0) <= 1e-12);
    for (std::size_t d = 0; d < N; ++d) {
      CHECK(pol.accept[i * N + d] + pol.reject[i * N + d] == doctest::Approx(1.0).epsilon(1e-14));
      if (d == i) continue;
      double sq = 0.0;
      for (LinkIndex a : net.outgoing(static_cast<NodeIndex>(i))) {
        sq += pol.q[static_cast<std::size_t>(net.hired().find(a, static_cast<NodeIndex>(d)))];
      }
      CHECK(std::abs(sq - 1.0) <= 1e-12);
    }
  }
}

TEST_CASE("parameter validation") {
  SmdpParams p;
  p.discount_rate = 0.0;
  CHECK_THROWS_AS(validate(p), ValidationError);
  p = {};
  p.route_scale = -1.0;
  CHECK_THROWS_AS(validate(p), ValidationError);
}
