#pragma once

// Single-threaded reference versions of the parallel kernels. They are written
// straight from the model definitions and kept for cross-checking and benchmarks.

#include "mter/loading.hpp"
#include "mter/microsim.hpp"
#include "mter/smdp.hpp"

#include <Eigen/Dense>

namespace mter::reference {

ValueFunctions bellman_apply(const ValueFunctions& v, const LinkEnvironment& env, const SmdpParams& params,
                             const Network& network, const DemandModel& demand);

Policies choice_probabilities(const ValueFunctions& v, const SmdpParams& params, const Network& network,
                              const DemandModel& demand);

/// Same row layout as mter::build_chain, built row by row.
ChainSpec build_chain(const Policies& policies, const LinkEnvironment& env, const DemandModel& demand,
                      const Network& network);

/// Dense jump matrix of a chain (small instances only).
Eigen::MatrixXd jump_matrix(const ChainSpec& chain);

/// Stationary occupancy from a dense LU solve of the embedded chain, weighted by holding times.
/// Only meaningful when the whole chain is one recurrent class.
std::vector<double> stationary_dense(const ChainSpec& chain);

SimResult simulate(const SimInputs& inputs, const SimConfig& config);

}  // namespace mter::reference
