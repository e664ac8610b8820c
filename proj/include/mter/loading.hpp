#pragma once

// Network loading: the continuous-time Markov chain followed by one vehicle
// under fixed policies, its transient-state pruning, and the stationary mass
// distribution scaled to the pool size.
//
// Chain states are numbered empty-first: state a (< |A|) is an empty vehicle
// on link a, state |A| + k is hired state k of the network's HiredLayout.

#include "mter/network.hpp"
#include "mter/smdp.hpp"

#include <cstdint>
#include <vector>

namespace mter {

struct MassDistribution {
  std::vector<double> empty;  // x, per link
  std::vector<double> hired;  // y, HiredLayout order

  static MassDistribution zeros(const Network& network);
  double total() const;
  /// u_a = x_a + sum_d y_a^d (background excluded).
  std::vector<double> link_mass(const Network& network) const;
};

/// Per-link quantities induced by a mass distribution.
struct LinkState {
  std::vector<double> mass;        // u, fleet only (background enters through t)
  std::vector<double> time;        // t
  std::vector<double> empty_flow;  // f = x / t
  std::vector<double> hired_flow;  // sum_d h^d
  std::vector<double> match;       // m(f)
  std::vector<double> match_complement;

  LinkEnvironment environment() const { return {time, match, match_complement}; }
};

LinkState masses_to_env(const MassDistribution& masses, const Network& network);

/// Environment at free-flow times with matching driven by the given masses' empty flow.
LinkState masses_to_env_free_flow(const MassDistribution& masses, const Network& network);

/// Sparse jump chain: row s lists successor states with jump probabilities;
/// the holding time in s is holding[s]. Generator Q = diag(1/holding)(P - I).
struct ChainSpec {
  std::size_t num_links = 0;
  std::vector<double> holding;
  std::vector<std::size_t> row_begin;  // size num_states + 1
  std::vector<std::int32_t> target;
  std::vector<double> prob;
  std::vector<std::uint8_t> recurrent;  // filled by prune_transient; empty = not yet pruned

  std::size_t num_states() const { return holding.size(); }
  double rate(std::size_t entry, std::size_t row) const { return prob[entry] / holding[row]; }
};

/// Rows in parallel over states. Throws DomainError if any t <= 0.
ChainSpec build_chain(const Policies& policies, const LinkEnvironment& env, const DemandModel& demand,
                      const Network& network);

/// States the structural rules mark transient before any graph search:
/// m == 0 everywhere, a single node receiving positive matching, and
/// destinations with no matched demand.
std::vector<std::uint8_t> structurally_transient(const LinkEnvironment& env, const DemandModel& demand,
                                                 const Network& network);

/// Marks the unique closed communicating class. Structural rules are applied
/// first and cross-checked by a strongly-connected-component sweep.
/// Throws StructuralError if no closed class exists, NumericalError if several do.
void prune_transient(ChainSpec& chain, const LinkEnvironment& env, const DemandModel& demand,
                     const Network& network);

/// Max over states of |inflow - outflow| in vehicles/hour for masses laid out in chain order.
double balance_residual(const ChainSpec& chain, const std::vector<double>& state_mass);

/// ||pi Q||_inf for a probability vector in chain order.
double generator_residual(const ChainSpec& chain, const std::vector<double>& pi);

struct StationaryDiagnostics {
  double generator_residual = 0.0;
  long iterations = 0;  // power iteration / blocked solver only
};

/// Direct sparse LU on the rank-completed generator restricted to the recurrent class.
/// Returns pi in chain order, pruned states exactly zero.
std::vector<double> stationary_direct(const ChainSpec& chain, StationaryDiagnostics* diag = nullptr);

/// Power iteration on the uniformized chain (rate 1.05 x max outflow), from uniform start over all states.
std::vector<double> stationary_power(const ChainSpec& chain, double tolerance = 1e-14, long max_iterations = 50'000'000,
                                     StationaryDiagnostics* diag = nullptr);

enum class LoadingMethod { automatic, direct, power, blocked };

struct LoadingOptions {
  LoadingMethod method = LoadingMethod::automatic;
  std::size_t direct_state_limit = 200'000;
  double residual_limit = 1e-10;  // on ||pi Q||_inf, scaled by max(1, max rate)
};

struct LoadingResult {
  MassDistribution masses;
  StationaryDiagnostics diagnostics;
  LoadingMethod method_used = LoadingMethod::direct;
};

/// Stationary masses normalized to `total_mass`.
LoadingResult load_network(const Policies& policies, const LinkEnvironment& env, const DemandModel& demand,
                           const Network& network, double total_mass, const LoadingOptions& options = {});

/// Destination-blocked exact solve that never forms the full generator: hired
/// flows are eliminated per destination, leaving a chain on empty links.
LoadingResult load_network_blocked(const Policies& policies, const LinkEnvironment& env, const DemandModel& demand,
                                   const Network& network, double total_mass);

std::vector<double> to_state_vector(const MassDistribution& masses);
MassDistribution from_state_vector(const std::vector<double>& v, std::size_t num_links);

/// Flow-conservation residual of the masses under the given policies, vehicles/hour.
double flow_balance_residual(const MassDistribution& masses, const Policies& policies, const LinkEnvironment& env,
                             const DemandModel& demand, const Network& network);

}  // namespace mter
