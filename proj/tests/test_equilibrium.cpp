#include "support.hpp"

#include "mter/errors.hpp"

#include <doctest.h>

#include <omp.h>

#include <cmath>
#include <numeric>

using namespace mter;

namespace {

SolverConfig easy_config() {
  SolverConfig c;
  c.step.kind = StepKind::msa_floor;
  c.step.floor = 0.05;
  c.tolerance = 1e-6;
  c.max_iterations = 3000;
  return c;
}

Model soft_random(int nodes, std::uint64_t seed) {
  Model m = fixtures::random_instance(nodes, seed);
  m.smdp.route_scale = 1.0;
  m.smdp.accept_scale = 1.0;
  return m;
}

}  // namespace

TEST_CASE("step sizes") {
  StepRule msa{StepKind::msa};
  StepRule floor{StepKind::msa_floor, 0.02};
  StepRule fixed{StepKind::fixed_point};
  CHECK(step_size(msa, 1) == doctest::Approx(0.5));
  CHECK(step_size(msa, 99) == doctest::Approx(0.01));
  CHECK(step_size(floor, 9) == doctest::Approx(0.1));
  CHECK(step_size(floor, 200) == doctest::Approx(0.02));
  CHECK(step_size(fixed, 5) == 1.0);
  CHECK(parse_step_kind(to_string(StepKind::momentum)) == StepKind::momentum);
  CHECK_THROWS_AS(parse_step_kind("newton"), ValidationError);
}

TEST_CASE("relaxed updates") {
  MassDistribution x{{2.0, 2.0}, {1.0}};
  const MassDistribution mapped{{4.0, 0.0}, {1.0}};
  StepCarry carry;
  step_update(StepRule{StepKind::msa}, 1, x, mapped, carry, 0.0);
  CHECK(x.empty[0] == doctest::Approx(3.0));
  CHECK(x.empty[1] == doctest::Approx(1.0));
  CHECK(x.hired[0] == doctest::Approx(1.0));

  // Momentum: omega = b omega_prev + (1 - b)(mapped - x); next = x + psi omega.
  MassDistribution y{{2.0, 2.0}, {1.0}};
  StepCarry mc;
  StepRule mom{StepKind::momentum, 0.0, 0.5, 0.5};
  step_update(mom, 1, y, mapped, mc, 0.0);
  CHECK(y.empty[0] == doctest::Approx(2.0 + 0.5 * 0.5 * 2.0));
  CHECK(y.empty[1] == doctest::Approx(2.0 - 0.5 * 0.5 * 2.0));
  const double w0 = 1.0;  // first omega component
  step_update(mom, 2, y, mapped, mc, 0.0);
  CHECK(y.empty[0] == doctest::Approx(2.5 + 0.5 * (0.5 * w0 + 0.5 * (4.0 - 2.5))));

  // Renormalization and clipping.
  MassDistribution z{{1.0, 1.0}, {1.0}};
  const MassDistribution neg{{-1.0, 3.0}, {2.0}};
  StepCarry nc;
  step_update(StepRule{StepKind::fixed_point}, 1, z, neg, nc, 3.0);
  CHECK(z.empty[0] == 0.0);
  CHECK(z.total() == doctest::Approx(3.0));
}

TEST_CASE("gap is the Euclidean norm of the stacked difference") {
  const MassDistribution a{{1.0, 2.0}, {3.0}};
  const MassDistribution b{{1.0, 5.0}, {7.0}};
  CHECK(gap(a, b) == doctest::Approx(5.0));
  CHECK_THROWS_AS(gap(a, MassDistribution{{1.0}, {}}), DomainError);
}

TEST_CASE("random initial masses") {
  const Model model = fixtures::random_instance(5, 1);
  const auto a = random_masses(model.network, 500.0, 42);
  const auto b = random_masses(model.network, 500.0, 42);
  const auto c = random_masses(model.network, 500.0, 43);
  CHECK(a.total() == doctest::Approx(500.0));
  CHECK(to_state_vector(a) == to_state_vector(b));
  CHECK(to_state_vector(a) != to_state_vector(c));
  for (double v : to_state_vector(a)) CHECK(v >= 0.0);
  CHECK(derive_seed(17, 0) == 17);
  CHECK(derive_seed(17, 1) != derive_seed(17, 2));
}

TEST_CASE("two-link shuttle has a continuum of equilibria") {
  const Model model = fixtures::shuttle_continuum();
  SolverConfig config;
  config.values.tolerance = 1e-13;
  const std::size_t N = 2;
  for (double u21 : {0.2, 0.5, 0.8}) {
    // Link times and the pickup rate on 2->1 depend only on the aggregate masses, so the
    // policies at the all-empty point fix the hired share m * accept on the parallel links.
    const MapOutput probe = fixed_point_map(fixtures::shuttle_point(model, u21), model, config, {}, nullptr, 1e-13);
    CHECK(probe.env.time[0] == doctest::Approx(1.0 / u21));
    CHECK(probe.env.time[2] == doctest::Approx(1.0 / (1.0 - u21)));
    const double f = u21 * (1.0 - u21);
    const double m = std::min(0.5 / f, 1.0 - std::exp(-model.network.link(2).friction * 0.5 / f));
    CHECK(probe.env.match[2] == doctest::Approx(m));
    CHECK(probe.policies.p[0] == doctest::Approx(0.5));
    const double share = m * probe.policies.accept[0 * N + 1];

    const MassDistribution x = fixtures::shuttle_point(model, u21, share);
    CHECK(x.total() == doctest::Approx(1.0));
    const MapOutput out = fixed_point_map(x, model, config, {}, nullptr, 1e-13);
    CHECK(gap(x, out.mapped) <= 1e-8);
  }
}

TEST_CASE("equilibrium on a small instance converges with valid certificates") {
  const Model model = soft_random(5, 1);
  const EquilibriumResult r = solve_equilibrium(model, easy_config());
  REQUIRE(r.converged);
  CHECK(r.residuals.gap <= 1e-6);
  CHECK(r.residuals.within_tolerance);
  CHECK(r.residuals.mass_error <= 1e-9);
  CHECK(r.residuals.bellman <= 1e-8);
  CHECK(r.state.masses.total() == doctest::Approx(model.network.pool_size()));
  CHECK(r.trace.size() == static_cast<std::size_t>(r.iterations));
  CHECK(r.trace.back().gap == r.residuals.gap);
  // The reported masses reproduce themselves under the map.
  const MapOutput out = fixed_point_map(r.state.masses, model, easy_config(), {}, nullptr, 1e-12);
  CHECK(gap(r.state.masses, out.mapped) <= 2e-6);
}

TEST_CASE("non-convergence returns the trace") {
  const Model model = fixtures::random_instance(5, 1);
  SolverConfig c = easy_config();
  c.max_iterations = 3;
  const EquilibriumResult r = solve_equilibrium(model, c);
  CHECK_FALSE(r.converged);
  CHECK(r.iterations == 3);
  CHECK(r.trace.size() == 3);
  CHECK(r.message.find("limit") != std::string::npos);
}

TEST_CASE("multi-start is reproducible and independent of the thread count") {
  const Model model = soft_random(4, 2);
  SolverConfig c = easy_config();
  c.starts = 3;
  c.seed = 5;
  const int before = omp_get_max_threads();
  omp_set_num_threads(1);
  const MultiStartReport one = multi_start(model, c);
  omp_set_num_threads(std::max(2, before));
  const MultiStartReport many = multi_start(model, c);
  omp_set_num_threads(before);
  REQUIRE(one.runs.size() == 3);
  CHECK(one.best_index == many.best_index);
  CHECK(to_state_vector(one.best.state.masses) == to_state_vector(many.best.state.masses));
  CHECK(one.runs[0].seed == 5);
  for (const auto& r : one.runs) CHECK(r.metrics.profit_rate <= one.best.metrics.profit_rate + 1e-9);
}

TEST_CASE("solver configuration validation") {
  SolverConfig c;
  c.tolerance = 0.0;
  CHECK_THROWS_AS(validate(c), ValidationError);
  c = {};
  c.step.floor = 1.5;
  CHECK_THROWS_AS(validate(c), ValidationError);
  c = {};
  c.starts = 0;
  CHECK_THROWS_AS(validate(c), ValidationError);
}
