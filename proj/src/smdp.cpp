#include "mter/smdp.hpp"

#include "mter/errors.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

namespace mter {

namespace {

// Log-sum over the values selected by `get(k)`, k in [0, count).
template <typename Get>
double logsum(std::size_t count, double scale, Get&& get) {
  double top = -std::numeric_limits<double>::infinity();
  for (std::size_t k = 0; k < count; ++k) top = std::max(top, get(k));
  double acc = 0.0;
  for (std::size_t k = 0; k < count; ++k) acc += std::exp(scale * (get(k) - top));
  return top + std::log(acc) / scale;
}

double logistic(double x) { return x >= 0.0 ? 1.0 / (1.0 + std::exp(-x)) : std::exp(x) / (1.0 + std::exp(x)); }

}  // namespace

void validate(const SmdpParams& params) {
  if (!(params.discount_rate > 0.0)) throw ValidationError("discount rate must be positive");
  if (!(params.route_scale > 0.0) || !(params.accept_scale > 0.0)) throw ValidationError("logit scales must be positive");
  if (!(params.empty_cost_per_hour >= 0.0) || !(params.hired_cost_per_hour >= 0.0)) {
    throw ValidationError("cost coefficients must be nonnegative");
  }
}

ValueFunctions ValueFunctions::zeros(const Network& network) {
  const auto n = network.num_nodes();
  return {std::vector<double>(network.num_links(), 0.0), std::vector<double>(network.hired().size(), 0.0),
          std::vector<double>(n, 0.0), std::vector<double>(n * n, 0.0)};
}

double social_surplus(std::span<const double> values, double scale) {
  if (values.empty()) throw DomainError("social_surplus: empty choice set");
  return logsum(values.size(), scale, [&](std::size_t k) { return values[k]; });
}

double social_surplus(double a, double b, double scale) {
  const double top = std::max(a, b);
  return top + std::log1p(std::exp(-scale * std::abs(a - b))) / scale;
}

double empty_cost(const SmdpParams& params, const Link& link, double time) {
  return params.empty_cost_per_hour * time + link.toll;
}

double hired_cost(const SmdpParams& params, const Link& link, double time) {
  return params.hired_cost_per_hour * time + link.toll;
}

void bellman_apply_into(const ValueFunctions& in, ValueFunctions& out, const LinkEnvironment& env,
                        const SmdpParams& params, const Network& network, const DemandModel& demand) {
  const auto num_nodes = network.num_nodes();
  const auto num_links = network.num_links();
  const HiredLayout& layout = network.hired();
  const auto nn = static_cast<std::ptrdiff_t>(num_nodes);
  const auto nl = static_cast<std::ptrdiff_t>(num_links);
  const double route = params.route_scale;
  const bool myopic = params.boundary == Boundary::myopic;

  out.sigma.resize(num_nodes);
  out.tau.resize(num_nodes * num_nodes);
  out.z.resize(num_links);
  out.w.resize(layout.size());

#pragma omp parallel
  {
#pragma omp for schedule(static)
    for (std::ptrdiff_t j = 0; j < nn; ++j) {
      const auto links = network.outgoing(static_cast<NodeIndex>(j));
      out.sigma[static_cast<std::size_t>(j)] =
          logsum(links.size(), route, [&](std::size_t k) { return in.z[static_cast<std::size_t>(links[k])]; });
    }

#pragma omp for schedule(static)
    for (std::ptrdiff_t d = 0; d < nn; ++d) {
      double* tau_d = out.tau.data() + static_cast<std::size_t>(d) * num_nodes;
      for (std::ptrdiff_t j = 0; j < nn; ++j) {
        if (j == d) {
          tau_d[j] = myopic ? 0.0 : out.sigma[static_cast<std::size_t>(d)];
          continue;
        }
        const auto links = network.outgoing(static_cast<NodeIndex>(j));
        tau_d[j] = logsum(links.size(), route, [&](std::size_t k) {
          return in.w[static_cast<std::size_t>(layout.find(links[k], static_cast<NodeIndex>(d)))];
        });
      }
    }

    // Node-level continuation of an empty arrival: (1-m) sigma + m sum_d n G(chi + tau, sigma).
#pragma omp for schedule(static)
    for (std::ptrdiff_t a = 0; a < nl; ++a) {
      const Link& l = network.link(static_cast<LinkIndex>(a));
      const auto ua = static_cast<std::size_t>(a);
      const auto j = static_cast<std::size_t>(l.head);
      const double t = env.time[ua];
      const double sigma_j = out.sigma[j];
      double order_value = 0.0;
      if (env.match[ua] > 0.0) {
        for (std::size_t d = 0; d < num_nodes; ++d) {
          const double share = demand.destination(static_cast<Eigen::Index>(j), static_cast<Eigen::Index>(d));
          if (share == 0.0) continue;
          order_value += share * social_surplus(demand.fare(static_cast<Eigen::Index>(j), static_cast<Eigen::Index>(d)) +
                                                    out.tau[d * num_nodes + j],
                                                sigma_j, params.accept_scale);
        }
      }
      const double continuation = env.match_complement[ua] * sigma_j + env.match[ua] * order_value;
      out.z[ua] = -empty_cost(params, l, t) + std::exp(-params.discount_rate * t) * continuation;
    }

#pragma omp for schedule(static)
    for (std::ptrdiff_t d = 0; d < nn; ++d) {
      const std::size_t begin = layout.block_begin(static_cast<NodeIndex>(d));
      const auto block = layout.block_links(static_cast<NodeIndex>(d));
      const double* tau_d = out.tau.data() + static_cast<std::size_t>(d) * num_nodes;
      for (std::size_t k = 0; k < block.size(); ++k) {
        const auto a = static_cast<std::size_t>(block[k]);
        const Link& l = network.link(block[k]);
        const double t = env.time[a];
        out.w[begin + k] = -hired_cost(params, l, t) + std::exp(-params.discount_rate * t) * tau_d[l.head];
      }
    }
  }
}

ValueFunctions bellman_apply(const ValueFunctions& v, const LinkEnvironment& env, const SmdpParams& params,
                             const Network& network, const DemandModel& demand) {
  ValueFunctions out;
  bellman_apply_into(v, out, env, params, network, demand);
  return out;
}

double sup_distance(const ValueFunctions& a, const ValueFunctions& b) {
  double d = 0.0;
  auto blk = [&](const std::vector<double>& x, const std::vector<double>& y) {
    for (std::size_t k = 0; k < x.size(); ++k) d = std::max(d, std::abs(x[k] - y[k]));
  };
  blk(a.z, b.z);
  blk(a.w, b.w);
  blk(a.sigma, b.sigma);
  blk(a.tau, b.tau);
  return d;
}

double contraction_modulus(const LinkEnvironment& env, const SmdpParams& params) {
  const double t_min = *std::min_element(env.time.begin(), env.time.end());
  return std::exp(-params.discount_rate * t_min);
}

namespace {

double action_residual(const ValueFunctions& a, const ValueFunctions& b) {
  double d = 0.0;
  for (std::size_t k = 0; k < a.z.size(); ++k) d = std::max(d, std::abs(a.z[k] - b.z[k]));
  for (std::size_t k = 0; k < a.w.size(); ++k) d = std::max(d, std::abs(a.w[k] - b.w[k]));
  return d;
}

}  // namespace

ValueSolve solve_values(const LinkEnvironment& env, const SmdpParams& params, const Network& network,
                        const DemandModel& demand, const ValueSolveOptions& options,
                        const ValueFunctions* warm_start) {
  if (!(options.tolerance > 0.0)) throw ValidationError("value-iteration tolerance must be positive");
  ValueSolve result;
  ValueFunctions current = warm_start ? *warm_start : ValueFunctions::zeros(network);
  ValueFunctions next;
  double residual = std::numeric_limits<double>::infinity();
  long it = 0;
  while (it < options.max_iterations) {
    bellman_apply_into(current, next, env, params, network, demand);
    ++it;
    residual = action_residual(next, current);
    std::swap(current, next);
    if (residual <= options.tolerance) break;
  }
  if (residual > options.tolerance) {
    throw ConvergenceError("value iteration did not reach tolerance", residual, it);
  }
  // Leave sigma/tau consistent with the returned z/w.
  bellman_apply_into(current, next, env, params, network, demand);
  current.sigma = std::move(next.sigma);
  current.tau = std::move(next.tau);
  result.values = std::move(current);
  result.iterations = it;
  result.residual = residual;
  return result;
}

Policies choice_probabilities(const ValueFunctions& v, const SmdpParams& params, const Network& network,
                              const DemandModel& demand) {
  const auto num_nodes = network.num_nodes();
  const HiredLayout& layout = network.hired();
  const auto nn = static_cast<std::ptrdiff_t>(num_nodes);
  const double route = params.route_scale;
  Policies pol;
  pol.p.assign(network.num_links(), 0.0);
  pol.q.assign(layout.size(), 0.0);
  pol.accept.assign(num_nodes * num_nodes, 0.0);
  pol.reject.assign(num_nodes * num_nodes, 1.0);

#pragma omp parallel
  {
#pragma omp for schedule(static)
    for (std::ptrdiff_t i = 0; i < nn; ++i) {
      const auto links = network.outgoing(static_cast<NodeIndex>(i));
      double top = -std::numeric_limits<double>::infinity();
      for (LinkIndex a : links) top = std::max(top, v.z[static_cast<std::size_t>(a)]);
      double total = 0.0;
      for (LinkIndex a : links) total += std::exp(route * (v.z[static_cast<std::size_t>(a)] - top));
      for (LinkIndex a : links) {
        pol.p[static_cast<std::size_t>(a)] = std::exp(route * (v.z[static_cast<std::size_t>(a)] - top)) / total;
      }
      for (std::size_t d = 0; d < num_nodes; ++d) {
        if (d == static_cast<std::size_t>(i)) continue;
        const double gain = demand.fare(i, static_cast<Eigen::Index>(d)) +
                            v.tau[d * num_nodes + static_cast<std::size_t>(i)] - v.sigma[static_cast<std::size_t>(i)];
        pol.accept[static_cast<std::size_t>(i) * num_nodes + d] = logistic(params.accept_scale * gain);
        pol.reject[static_cast<std::size_t>(i) * num_nodes + d] = logistic(-params.accept_scale * gain);
      }
    }

#pragma omp for schedule(static)
    for (std::ptrdiff_t d = 0; d < nn; ++d) {
      for (std::ptrdiff_t i = 0; i < nn; ++i) {
        if (i == d) continue;
        const auto links = network.outgoing(static_cast<NodeIndex>(i));
        double top = -std::numeric_limits<double>::infinity();
        for (LinkIndex a : links) {
          top = std::max(top, v.w[static_cast<std::size_t>(layout.find(a, static_cast<NodeIndex>(d)))]);
        }
        double total = 0.0;
        for (LinkIndex a : links) {
          total += std::exp(route * (v.w[static_cast<std::size_t>(layout.find(a, static_cast<NodeIndex>(d)))] - top));
        }
        for (LinkIndex a : links) {
          const auto k = static_cast<std::size_t>(layout.find(a, static_cast<NodeIndex>(d)));
          pol.q[k] = std::exp(route * (v.w[k] - top)) / total;
        }
      }
    }
  }
  return pol;
}

}  // namespace mter
