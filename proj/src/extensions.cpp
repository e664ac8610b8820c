#include "mter/extensions.hpp"

#include "mter/errors.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>

namespace mter {

void validate(const ParticipationParams& params, const Network& network) {
  if (params.potential.size() != network.num_nodes()) throw ValidationError("need one potential pool per node");
  double total = 0.0;
  for (double m : params.potential) {
    if (!(m >= 0.0)) throw ValidationError("potential pools must be nonnegative");
    total += m;
  }
  if (!(total > 0.0)) throw ValidationError("total potential pool must be positive");
  if (!(params.dispersion > 0.0)) throw ValidationError("participation dispersion must be positive");
}

std::vector<double> participation_probabilities(const std::vector<double>& sigma, const ParticipationParams& params) {
  std::vector<double> p(sigma.size());
  for (std::size_t i = 0; i < sigma.size(); ++i) {
    const double s = params.dispersion * (sigma[i] - params.outside_option);
    p[i] = s >= 0.0 ? 1.0 / (1.0 + std::exp(-s)) : std::exp(s) / (1.0 + std::exp(s));
  }
  return p;
}

ParticipationResult solve_participation(const Model& model, const ParticipationParams& params,
                                        const SolverConfig& config) {
  validate(params, model.network);
  auto target = [&params](const ValueFunctions& v) {
    const auto p = participation_probabilities(v.sigma, params);
    double mass = 0.0;
    for (std::size_t i = 0; i < p.size(); ++i) mass += params.potential[i] * p[i];
    return mass;
  };
  MapOptions options;
  options.target_mass = target;

  ParticipationResult out;
  out.equilibrium = config.starts > 1 ? multi_start(model, config, options).best : solve_equilibrium(model, config, options);
  out.probability = participation_probabilities(out.equilibrium.state.values.sigma, params);
  out.participating_mass = target(out.equilibrium.state.values);
  out.rate = out.participating_mass / std::accumulate(params.potential.begin(), params.potential.end(), 0.0);
  return out;
}

EquilibriumResult solve_myopic(const Model& model, const SolverConfig& config) {
  Model myopic = model;
  myopic.smdp.boundary = Boundary::myopic;
  return config.starts > 1 ? multi_start(myopic, config).best : solve_equilibrium(myopic, config);
}

CongestionUnawareResult congestion_unaware_load(const Model& model, const SolverConfig& config,
                                                double phase_two_floor) {
  CongestionUnawareResult out;
  MapOptions planning;
  planning.free_flow_times = true;
  out.planning = config.starts > 1 ? multi_start(model, config, planning).best : solve_equilibrium(model, config, planning);
  if (!out.planning.converged) {
    out.planning.message = "phase 1 (free-flow planning): " + out.planning.message;
    out.loaded = out.planning;
    return out;
  }

  MapOptions frozen;
  frozen.frozen_policies = &out.planning.state.policies;
  SolverConfig loading = config;
  loading.step = {StepKind::msa_floor, phase_two_floor, 0.0, 1.0};
  out.loaded = solve_equilibrium(model, loading, frozen, &out.planning.state.masses);
  out.loaded.state.values = out.planning.state.values;
  if (!out.loaded.converged) out.loaded.message = "phase 2 (frozen-policy loading): " + out.loaded.message;
  return out;
}

std::vector<LinkIndex> cycle_order(const Network& network) {
  const std::size_t N = network.num_nodes();
  for (std::size_t i = 0; i < N; ++i) {
    if (network.outgoing(static_cast<NodeIndex>(i)).size() != 1) {
      throw StructuralError("not a directed cycle: node " + std::to_string(network.node_id(static_cast<NodeIndex>(i))) +
                            " does not have exactly one outgoing link");
    }
  }
  std::vector<LinkIndex> order;
  NodeIndex node = 0;
  do {
    const LinkIndex a = network.outgoing(node).front();
    order.push_back(a);
    node = network.link(a).head;
  } while (node != 0 && order.size() <= N);
  if (order.size() != N || order.size() != network.num_links()) throw StructuralError("not a single directed cycle");
  return order;
}

CycleProblem cycle_problem(const Network& network) {
  CycleProblem p;
  p.total_mass = network.pool_size();
  for (LinkIndex a : cycle_order(network)) {
    p.time.emplace_back([&network, a](double u) { return network.link_time(a, u); });
    p.slope.emplace_back([&network, a](double u) { return network.link_time_slope(a, u); });
  }
  return p;
}

double spread(const std::vector<double>& u, const std::vector<double>& v) {
  double hi = -std::numeric_limits<double>::infinity(), lo = std::numeric_limits<double>::infinity();
  for (std::size_t a = 0; a < u.size(); ++a) {
    const double r = std::log(u[a]) - std::log(v[a]);
    hi = std::max(hi, r);
    lo = std::min(lo, r);
  }
  return hi - lo;
}

std::vector<double> cycle_map(const CycleProblem& problem, const std::vector<double>& u) {
  std::vector<double> t(u.size());
  double total = 0.0;
  for (std::size_t a = 0; a < u.size(); ++a) total += (t[a] = problem.time[a](u[a]));
  for (double& v : t) v *= problem.total_mass / total;
  return t;
}

double cycle_contraction_bound(const CycleProblem& problem) {
  const int G = problem.grid_points;
  double kappa = 0.0;
  for (std::size_t a = 0; a < problem.time.size(); ++a) {
    double previous_flow = 0.0;
    for (int g = 1; g <= G; ++g) {
      const double u = problem.total_mass * g / G;
      const double t = problem.time[a](u);
      const double flow = u / t;
      if (!(flow > previous_flow)) {
        throw ValidationError("u / t(u) is not increasing on link " + std::to_string(a) + " (hypercongested regime)");
      }
      previous_flow = flow;
      kappa = std::max(kappa, u * problem.slope[a](u) / t);
    }
  }
  if (!(kappa < 1.0)) throw ValidationError("elasticity bound u t'(u) / t(u) reaches 1 (hypercongested regime)");
  return kappa;
}

CycleReport solve_cycle(const CycleProblem& problem, double tolerance, std::vector<double> start,
                        long max_iterations) {
  const std::size_t n = problem.time.size();
  if (n == 0 || !(problem.total_mass > 0.0)) throw ValidationError("cycle problem needs links and positive mass");
  CycleReport r;
  r.kappa_hat = cycle_contraction_bound(problem);
  std::vector<double> u = start.empty() ? std::vector<double>(n, problem.total_mass / static_cast<double>(n)) : std::move(start);
  if (u.size() != n) throw ValidationError("start vector has the wrong length");
  for (double v : u) {
    if (!(v > 0.0)) throw ValidationError("cycle start must be interior");
  }
  double previous = 0.0;
  for (long k = 0; k < max_iterations; ++k) {
    std::vector<double> next = cycle_map(problem, u);
    const double d = spread(next, u);
    r.spreads.push_back(d);
    if (k > 0 && previous > 1e-12) {  // below this the ratio is rounding noise
      r.spread_ratios.push_back(d / previous);
      r.empirical_factor = std::max(r.empirical_factor, d / previous);
    }
    previous = d;
    u = std::move(next);
    r.iterations = k + 1;
    if (d <= tolerance) break;
  }
  if (r.spreads.back() > tolerance) throw ConvergenceError("cycle map did not converge", r.spreads.back(), r.iterations);
  r.mass = u;
  r.flow = u.front() / problem.time.front()(u.front());
  return r;
}

}  // namespace mter
