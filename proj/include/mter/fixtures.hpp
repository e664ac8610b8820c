#pragma once

// Small hand-built instances used by tests, the acceptance runner, and the CLI.

#include "mter/equilibrium.hpp"

#include <cstdint>

namespace mter::fixtures {

/// Fares from fastest free-flow paths with the given schedule.
Model make_model(NetworkData data, Eigen::MatrixXd destination, const FareSchedule& fares = {},
                 const SmdpParams& smdp = {});

/// Two nodes; two parallel links 1->2 with t = 1/(1-2u) and a return link 2->1 with
/// t = 1/(1-u); unit pool; all passengers arrive at node 1 and travel to node 2.
Model shuttle_continuum(double arrival_rate = 0.5);

/// Feasible point with u(2->1) = u21, all empty, and u(1->2) = (1 - u21) / 2 on each parallel
/// link, of which `hired_share` is hired toward node 2.
MassDistribution shuttle_point(const Model& model, double u21, double hired_share = 0.0);

/// Four-node diamond with a return link, optionally with a near-free 1->2 bridge.
/// Fares follow the fastest free-flow path of the network being built, so the
/// bridge lowers them; `base_fares` keeps the five-link fares instead.
Model braess(bool with_bridge, double pool_size, double arrival_rate, bool base_fares = false);
LinkIndex braess_bridge(const Model& model);

/// Seven-node network with a downtown region (nodes 1-4) and an airport/suburb region (1, 5-7).
Model downtown_airport();

/// Nodes 1..k in a directed ring with the given free-flow times and jam capacity.
Model directed_cycle(const std::vector<double>& free_flow_times, double jam_capacity, double pool_size,
                     double arrival_rate = 0.0);

/// Two nodes joined by one link each way with identical attributes.
Model two_cycle(double free_flow_time, double jam_capacity, double pool_size, double arrival_rate = 0.0);

/// Strongly connected random instance: bidirectional ring plus random chords.
Model random_instance(int nodes, std::uint64_t seed, double pool_size = 500.0);

}  // namespace mter::fixtures
