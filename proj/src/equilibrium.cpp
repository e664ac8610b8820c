#include "mter/equilibrium.hpp"

#include "mter/errors.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <exception>
#include <limits>
#include <random>

namespace mter {

std::string to_string(StepKind kind) {
  switch (kind) {
    case StepKind::fixed_point: return "fixed_point";
    case StepKind::msa: return "msa";
    case StepKind::msa_floor: return "msa_floor";
    case StepKind::momentum: return "momentum";
  }
  return "?";
}

StepKind parse_step_kind(const std::string& name) {
  if (name == "fixed_point") return StepKind::fixed_point;
  if (name == "msa") return StepKind::msa;
  if (name == "msa_floor") return StepKind::msa_floor;
  if (name == "momentum") return StepKind::momentum;
  throw ValidationError("unknown step rule '" + name + "'");
}

void validate(const SolverConfig& config) {
  if (!(config.tolerance > 0.0)) throw ValidationError("gap tolerance must be positive");
  if (config.max_iterations < 1) throw ValidationError("max_iterations must be at least 1");
  if (config.step.kind == StepKind::msa_floor && !(config.step.floor > 0.0 && config.step.floor <= 1.0)) {
    throw ValidationError("step floor must lie in (0, 1]");
  }
  if (config.step.kind == StepKind::momentum) {
    if (!(config.step.beta >= 0.0 && config.step.beta < 1.0)) throw ValidationError("momentum b must lie in [0, 1)");
    if (!(config.step.psi > 0.0 && config.step.psi <= 1.0)) throw ValidationError("momentum step must lie in (0, 1]");
  }
  if (config.starts < 1) throw ValidationError("starts must be at least 1");
  if (!(config.values.tolerance > 0.0)) throw ValidationError("value tolerance must be positive");
}

MapOutput fixed_point_map(const MassDistribution& masses, const Model& model, const SolverConfig& config,
                          const MapOptions& options, const ValueFunctions* warm_start, double value_tolerance) {
  const Network& net = model.network;
  MapOutput out;
  out.env = options.free_flow_times ? masses_to_env_free_flow(masses, net) : masses_to_env(masses, net);
  const LinkEnvironment env = out.env.environment();

  if (options.frozen_policies) {
    out.policies = *options.frozen_policies;
    out.values = warm_start ? *warm_start : ValueFunctions::zeros(net);
  } else {
    ValueSolveOptions vo = config.values;
    if (value_tolerance > 0.0) vo.tolerance = value_tolerance;
    try {
      auto solved = solve_values(env, model.smdp, net, model.demand, vo, warm_start);
      out.values = std::move(solved.values);
      out.bellman_residual = solved.residual;
      out.value_iterations = solved.iterations;
    } catch (const ConvergenceError& e) {
      throw ConvergenceError(std::string("value solve: ") + e.what(), e.residual(), e.iterations());
    }
    out.policies = choice_probabilities(out.values, model.smdp, net, model.demand);
  }

  out.target_mass = options.target_mass ? options.target_mass(out.values) : net.pool_size();
  try {
    out.mapped = load_network(out.policies, env, model.demand, net, out.target_mass, config.loading).masses;
  } catch (const NumericalError& e) {
    throw NumericalError(std::string("loading: ") + e.what(), e.residual());
  } catch (const ConvergenceError& e) {
    throw ConvergenceError(std::string("loading: ") + e.what(), e.residual(), e.iterations());
  }
  return out;
}

double gap(const MassDistribution& current, const MassDistribution& mapped) {
  if (current.empty.size() != mapped.empty.size() || current.hired.size() != mapped.hired.size()) {
    throw DomainError("gap: dimension mismatch");
  }
  double s = 0.0;
  for (std::size_t k = 0; k < current.empty.size(); ++k) s += (mapped.empty[k] - current.empty[k]) * (mapped.empty[k] - current.empty[k]);
  for (std::size_t k = 0; k < current.hired.size(); ++k) s += (mapped.hired[k] - current.hired[k]) * (mapped.hired[k] - current.hired[k]);
  return std::sqrt(s);
}

double step_size(const StepRule& rule, long k) {
  switch (rule.kind) {
    case StepKind::fixed_point: return 1.0;
    case StepKind::msa: return 1.0 / static_cast<double>(k + 1);
    case StepKind::msa_floor: return std::max(1.0 / static_cast<double>(k + 1), rule.floor);
    case StepKind::momentum: return rule.psi;
  }
  return 1.0;
}

double step_update(const StepRule& rule, long k, MassDistribution& current, const MassDistribution& mapped,
                   StepCarry& carry, double renormalize_to) {
  const std::size_t L = current.empty.size();
  const std::size_t H = current.hired.size();
  auto cur = [&](std::size_t i) -> double& { return i < L ? current.empty[i] : current.hired[i - L]; };
  auto map = [&](std::size_t i) { return i < L ? mapped.empty[i] : mapped.hired[i - L]; };
  const double s = step_size(rule, k);

  if (rule.kind == StepKind::momentum) {
    if (carry.direction.size() != L + H) carry.direction.assign(L + H, 0.0);
    for (std::size_t i = 0; i < L + H; ++i) {
      carry.direction[i] = rule.beta * carry.direction[i] + (1.0 - rule.beta) * (map(i) - cur(i));
      cur(i) += rule.psi * carry.direction[i];
    }
  } else if (rule.kind == StepKind::fixed_point) {
    current = mapped;
  } else {
    for (std::size_t i = 0; i < L + H; ++i) cur(i) += s * (map(i) - cur(i));
  }

  for (double& v : current.empty) v = std::max(v, 0.0);
  for (double& v : current.hired) v = std::max(v, 0.0);
  if (renormalize_to > 0.0) {
    const double scale = renormalize_to / current.total();
    for (double& v : current.empty) v *= scale;
    for (double& v : current.hired) v *= scale;
  }
  return s;
}

MassDistribution random_masses(const Network& network, double total_mass, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::exponential_distribution<double> draw(1.0);
  MassDistribution m = MassDistribution::zeros(network);
  double total = 0.0;
  for (double& v : m.empty) total += (v = draw(rng));
  for (double& v : m.hired) total += (v = draw(rng));
  for (double& v : m.empty) v *= total_mass / total;
  for (double& v : m.hired) v *= total_mass / total;
  return m;
}

namespace {

double value_scale(const ValueFunctions& v) {
  double s = 1.0;
  for (double x : v.z) s = std::max(s, std::abs(x));
  for (double x : v.w) s = std::max(s, std::abs(x));
  return s;
}

Residuals certify(const MassDistribution& x, const MapOutput& out, double gap_value, double value_tolerance,
                  const Model& model, const SolverConfig& config, const MapOptions& options) {
  const Network& net = model.network;
  Residuals r;
  r.gap = gap_value;
  r.bellman = out.bellman_residual;
  r.flow_balance = flow_balance_residual(x, out.policies, out.env.environment(), model.demand, net);
  const auto u = x.link_mass(net);
  double t_min = std::numeric_limits<double>::infinity();
  for (std::size_t a = 0; a < net.num_links(); ++a) {
    const auto ai = static_cast<LinkIndex>(a);
    const double t = options.free_flow_times ? net.free_flow_time(ai) : net.link_time(ai, u[a]);
    r.time_consistency = std::max(r.time_consistency, std::abs(out.env.time[a] - t));
    const double f = x.empty[a] / out.env.time[a];
    r.match_consistency = std::max(r.match_consistency, std::abs(out.env.match[a] - matching_probability(net.link(ai), f)));
    t_min = std::min(t_min, out.env.time[a]);
  }
  r.mass_error = std::abs(x.total() - out.target_mass);
  double balance_tol = config.balance_tolerance;
  if (balance_tol <= 0.0) {
    balance_tol = 2.0 * std::sqrt(static_cast<double>(net.num_states())) * config.tolerance / t_min;
  }
  r.within_tolerance = r.gap <= config.tolerance && (options.frozen_policies || r.bellman <= value_tolerance) &&
                       r.flow_balance <= balance_tol && r.time_consistency <= 1e-12 && r.match_consistency <= 1e-12;
  return r;
}

}  // namespace

EquilibriumResult solve_equilibrium(const Model& model, const SolverConfig& config, const MapOptions& options,
                                    const MassDistribution* initial) {
  validate(config);
  validate(model.smdp);
  const Network& net = model.network;
  const auto start = std::chrono::steady_clock::now();
  auto seconds = [&] { return std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count(); };

  EquilibriumResult result;
  result.seed = config.seed;
  const double initial_target =
      options.target_mass ? options.target_mass(ValueFunctions::zeros(net)) : net.pool_size();
  MassDistribution x = initial ? *initial : random_masses(net, initial_target, config.seed);
  const double renormalize_to = options.target_mass ? 0.0 : net.pool_size();

  ValueFunctions warm;
  bool have_warm = false;
  double previous_gap = std::numeric_limits<double>::infinity();
  StepCarry carry;
  for (long k = 1;; ++k) {
    double vtol = config.values.tolerance;
    if (have_warm && std::isfinite(previous_gap)) {
      vtol = std::min(vtol, std::max(config.inner_ratio * previous_gap, config.inner_floor * value_scale(warm)));
    }
    MapOutput out = fixed_point_map(x, model, config, options, have_warm ? &warm : nullptr, vtol);
    const double g = gap(x, out.mapped);
    warm = out.values;
    have_warm = true;
    result.iterations = k;

    const bool done = g <= config.tolerance;
    if (done || k >= config.max_iterations) {
      result.trace.push_back({k, g, 0.0, seconds()});
      result.converged = done;
      result.message = done ? "converged" : "reached the iteration limit";
      result.residuals = certify(x, out, g, vtol, model, config, options);
      result.target_mass = out.target_mass;
      result.metrics = compute_metrics(x, out.env, out.policies, model.demand, model.smdp, net);
      result.state = {std::move(x), std::move(out.env), std::move(out.values), std::move(out.policies)};
      break;
    }
    const double s = step_update(config.step, k, x, out.mapped, carry, renormalize_to);
    result.trace.push_back({k, g, s, seconds()});
    previous_gap = g;
  }
  return result;
}

std::uint64_t derive_seed(std::uint64_t root, std::uint64_t k) {
  if (k == 0) return root;
  std::uint64_t z = root + k * 0x9E3779B97F4A7C15ULL;
  z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
  z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
  return z ^ (z >> 31);
}

MultiStartReport multi_start(const Model& model, const SolverConfig& config, const MapOptions& options) {
  validate(config);
  const int n = config.starts;
  MultiStartReport report;
  report.runs.resize(static_cast<std::size_t>(n));
  std::vector<std::exception_ptr> errors(static_cast<std::size_t>(n));

#pragma omp parallel for schedule(dynamic, 1)
  for (int k = 0; k < n; ++k) {
    SolverConfig c = config;
    c.seed = derive_seed(config.seed, static_cast<std::uint64_t>(k));
    try {
      report.runs[static_cast<std::size_t>(k)] = solve_equilibrium(model, c, options);
    } catch (...) {
      errors[static_cast<std::size_t>(k)] = std::current_exception();
    }
  }

  std::ptrdiff_t best = -1;
  for (int k = 0; k < n; ++k) {
    const auto& r = report.runs[static_cast<std::size_t>(k)];
    if (errors[static_cast<std::size_t>(k)] || !r.converged) continue;
    if (best < 0 || r.metrics.profit_rate > report.runs[static_cast<std::size_t>(best)].metrics.profit_rate) best = k;
  }
  if (best < 0) {
    for (int k = 0; k < n; ++k) {
      const auto& r = report.runs[static_cast<std::size_t>(k)];
      if (errors[static_cast<std::size_t>(k)] || r.trace.empty()) continue;
      if (best < 0 || r.residuals.gap < report.runs[static_cast<std::size_t>(best)].residuals.gap) best = k;
    }
  }
  if (best < 0) std::rethrow_exception(errors.front());
  report.best_index = static_cast<std::size_t>(best);
  report.best = report.runs[report.best_index];
  return report;
}

}  // namespace mter
