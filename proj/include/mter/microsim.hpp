#pragma once

// Agent-level event simulation of vehicles following frozen policies. Used as
// an independent check on the stationary masses from the loading module.

#include "mter/loading.hpp"
#include "mter/smdp.hpp"

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <optional>

namespace mter {

struct SimConfig {
  double horizon = 1e4;  // hours
  double warmup = 1e3;
  int vehicles = 200;
  std::uint64_t seed = 1;
  double total_mass = 0.0;  // masses reported as total_mass x occupancy fraction; 0 = pool size
  std::optional<std::filesystem::path> trajectory;  // CSV time,vehicle,link,status,destination
  int trajectory_vehicles = 5;
};

void validate(const SimConfig& config);

struct SimResult {
  MassDistribution mean;
  MassDistribution standard_error;
  long events = 0;
  double max_fraction_sum_error = 0.0;  // over vehicles, |sum of occupancy fractions - 1|
};

/// Frozen inputs shared by all vehicles.
struct SimInputs {
  const Network& network;
  const DemandModel& demand;
  const LinkEnvironment& env;
  const Policies& policies;
};

/// Parallel over vehicles; each vehicle has its own seeded stream, so the
/// output does not depend on the thread count.
SimResult simulate(const SimInputs& inputs, const SimConfig& config);

/// Occupancy fractions of one vehicle in chain-state order; exposed for the serial reference.
std::vector<double> simulate_vehicle(const SimInputs& inputs, const SimConfig& config, int vehicle, long* events,
                                     std::ostream* trajectory);

/// Mean and standard error over vehicles, reduced in vehicle order.
SimResult summarize_vehicles(const std::vector<std::vector<double>>& fractions, std::size_t num_links,
                             double total_mass);

std::uint64_t vehicle_seed(std::uint64_t root, int vehicle);

}  // namespace mter
