#include "mter/metrics.hpp"

#include <limits>

namespace mter {

MetricsBundle compute_metrics(const MassDistribution& masses, const LinkState& env, const Policies& policies,
                              const DemandModel& demand, const SmdpParams& params, const Network& network) {
  const std::size_t N = network.num_nodes();
  const std::size_t L = network.num_links();
  MetricsBundle m;

  double arrivals = 0.0, served = 0.0, matched = 0.0, weighted_speed = 0.0, fleet = 0.0;
  for (std::size_t a = 0; a < L; ++a) {
    const Link& link = network.link(static_cast<LinkIndex>(a));
    const double t = env.time[a];
    const double f = masses.empty[a] / t;
    const double u = env.mass[a];
    const auto j = static_cast<Eigen::Index>(link.head);
    arrivals += link.arrival_rate;

    if (env.match[a] > 0.0) {
      double accept_share = 0.0, fare = 0.0;
      for (std::size_t d = 0; d < N; ++d) {
        const double n = demand.destination(j, static_cast<Eigen::Index>(d));
        if (n == 0.0) continue;
        const double xi = policies.accept[static_cast<std::size_t>(j) * N + d];
        accept_share += n * xi;
        fare += n * xi * demand.fare(j, static_cast<Eigen::Index>(d));
      }
      const double pickups = f * env.match[a];
      matched += pickups;
      served += pickups * accept_share;
      m.revenue_rate += pickups * fare;
    }

    const double y = u - masses.empty[a];
    m.empty_mass += masses.empty[a];
    m.hired_mass += y;
    m.cost_rate += params.empty_cost_per_hour * masses.empty[a] + params.hired_cost_per_hour * y;
    m.toll_revenue_rate += (u / t) * link.toll;
    weighted_speed += u * link.length_km / t;
    fleet += u;
  }
  m.cost_rate += m.toll_revenue_rate;
  m.profit_rate = m.revenue_rate - m.cost_rate;

  if (arrivals > 0.0) {
    m.fulfillment = served / arrivals;
    m.fulfillment_matched_only = matched / arrivals;
  } else {
    m.no_demand = true;
  }
  if (m.hired_mass > 0.0) {
    m.vacant_hired_ratio = m.empty_mass / m.hired_mass;
  } else {
    m.hired_mass_zero = true;
    m.vacant_hired_ratio = std::numeric_limits<double>::infinity();
  }
  m.avg_speed = fleet > 0.0 ? weighted_speed / fleet : 0.0;
  return m;
}

}  // namespace mter
