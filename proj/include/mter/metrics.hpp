#pragma once

// Steady-state system metrics of a mass distribution under given policies.

#include "mter/loading.hpp"
#include "mter/smdp.hpp"

namespace mter {

struct MetricsBundle {
  double revenue_rate = 0.0;  // $/hour
  double cost_rate = 0.0;     // $/hour, operating cost plus tolls paid
  double profit_rate = 0.0;
  double fulfillment = 1.0;               // matched and accepted / arrivals
  double fulfillment_matched_only = 1.0;  // matched / arrivals
  bool no_demand = false;                 // sum of arrival rates is zero; fulfillment reported as 1
  double vacant_hired_ratio = 0.0;        // +inf when hired mass is zero
  bool hired_mass_zero = false;
  double avg_speed = 0.0;  // km/hour, mass-weighted
  double toll_revenue_rate = 0.0;
  double empty_mass = 0.0;
  double hired_mass = 0.0;
};

MetricsBundle compute_metrics(const MassDistribution& masses, const LinkState& env, const Policies& policies,
                              const DemandModel& demand, const SmdpParams& params, const Network& network);

}  // namespace mter
