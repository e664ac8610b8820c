#include "mter/reference.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

namespace mter::reference {

namespace {

double logsum(const std::vector<double>& v, double scale) {
  const double top = *std::max_element(v.begin(), v.end());
  double acc = 0.0;
  for (double x : v) acc += std::exp(scale * (x - top));
  return top + std::log(acc) / scale;
}

}  // namespace

ValueFunctions bellman_apply(const ValueFunctions& v, const LinkEnvironment& env, const SmdpParams& params,
                             const Network& network, const DemandModel& demand) {
  const std::size_t N = network.num_nodes();
  const HiredLayout& layout = network.hired();
  ValueFunctions out = ValueFunctions::zeros(network);

  for (std::size_t j = 0; j < N; ++j) {
    std::vector<double> opts;
    for (LinkIndex a : network.outgoing(static_cast<NodeIndex>(j))) opts.push_back(v.z[static_cast<std::size_t>(a)]);
    out.sigma[j] = logsum(opts, params.route_scale);
  }
  for (std::size_t d = 0; d < N; ++d) {
    for (std::size_t j = 0; j < N; ++j) {
      if (j == d) {
        out.tau[d * N + j] = params.boundary == Boundary::myopic ? 0.0 : out.sigma[d];
        continue;
      }
      std::vector<double> opts;
      for (LinkIndex a : network.outgoing(static_cast<NodeIndex>(j))) {
        opts.push_back(v.w[static_cast<std::size_t>(layout.find(a, static_cast<NodeIndex>(d)))]);
      }
      out.tau[d * N + j] = logsum(opts, params.route_scale);
    }
  }
  for (std::size_t a = 0; a < network.num_links(); ++a) {
    const Link& l = network.link(static_cast<LinkIndex>(a));
    const auto j = static_cast<std::size_t>(l.head);
    const double t = env.time[a];
    const double m = env.match[a];
    double cont = (1.0 - m) * out.sigma[j];
    for (std::size_t d = 0; d < N; ++d) {
      const double n = demand.destination(static_cast<Eigen::Index>(j), static_cast<Eigen::Index>(d));
      if (n == 0.0 || m == 0.0) continue;
      const double take = demand.fare(static_cast<Eigen::Index>(j), static_cast<Eigen::Index>(d)) + out.tau[d * N + j];
      cont += m * n * logsum({take, out.sigma[j]}, params.accept_scale);
    }
    out.z[a] = -(params.empty_cost_per_hour * t + l.toll) + std::exp(-params.discount_rate * t) * cont;
  }
  for (std::size_t k = 0; k < layout.size(); ++k) {
    const auto a = static_cast<std::size_t>(layout.link_of(k));
    const Link& l = network.link(static_cast<LinkIndex>(a));
    const auto d = static_cast<std::size_t>(layout.destination_of(k));
    const double t = env.time[a];
    out.w[k] = -(params.hired_cost_per_hour * t + l.toll) +
               std::exp(-params.discount_rate * t) * out.tau[d * N + static_cast<std::size_t>(l.head)];
  }
  return out;
}

Policies choice_probabilities(const ValueFunctions& v, const SmdpParams& params, const Network& network,
                              const DemandModel& demand) {
  const std::size_t N = network.num_nodes();
  const HiredLayout& layout = network.hired();
  Policies pol;
  pol.p.assign(network.num_links(), 0.0);
  pol.q.assign(layout.size(), 0.0);
  pol.accept.assign(N * N, 0.0);
  pol.reject.assign(N * N, 1.0);
  for (std::size_t i = 0; i < N; ++i) {
    const auto out = network.outgoing(static_cast<NodeIndex>(i));
    std::vector<double> z;
    for (LinkIndex a : out) z.push_back(v.z[static_cast<std::size_t>(a)]);
    const double s = logsum(z, params.route_scale);
    for (LinkIndex a : out) pol.p[static_cast<std::size_t>(a)] = std::exp(params.route_scale * (v.z[static_cast<std::size_t>(a)] - s));
    for (std::size_t d = 0; d < N; ++d) {
      if (d == i) continue;
      const double take = demand.fare(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(d)) + v.tau[d * N + i];
      const double g = logsum({take, v.sigma[i]}, params.accept_scale);
      pol.accept[i * N + d] = std::exp(params.accept_scale * (take - g));
      pol.reject[i * N + d] = std::exp(params.accept_scale * (v.sigma[i] - g));
      std::vector<double> w;
      for (LinkIndex a : out) w.push_back(v.w[static_cast<std::size_t>(layout.find(a, static_cast<NodeIndex>(d)))]);
      const double t = logsum(w, params.route_scale);
      for (std::size_t k = 0; k < out.size(); ++k) {
        pol.q[static_cast<std::size_t>(layout.find(out[k], static_cast<NodeIndex>(d)))] =
            std::exp(params.route_scale * (w[k] - t));
      }
    }
  }
  return pol;
}

}  // namespace mter::reference
