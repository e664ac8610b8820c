#include "mter/reference.hpp"

#include "mter/errors.hpp"

#include <fstream>

namespace mter::reference {

SimResult simulate(const SimInputs& inputs, const SimConfig& config) {
  validate(config);
  std::vector<std::vector<double>> fractions;
  long events = 0;
  std::ofstream traj;
  if (config.trajectory) {
    traj.open(*config.trajectory);
    if (!traj) throw ValidationError("cannot write trajectory file " + config.trajectory->string());
    traj.precision(17);
    traj << "time,vehicle,link,status,destination\n";
  }
  for (int v = 0; v < config.vehicles; ++v) {
    long e = 0;
    const bool dump = config.trajectory && v < config.trajectory_vehicles;
    fractions.push_back(simulate_vehicle(inputs, config, v, &e, dump ? &traj : nullptr));
    events += e;
  }
  const double M = config.total_mass > 0.0 ? config.total_mass : inputs.network.pool_size();
  SimResult r = summarize_vehicles(fractions, inputs.network.num_links(), M);
  r.events = events;
  return r;
}

}  // namespace mter::reference
