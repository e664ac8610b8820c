#pragma once

// Relaxed fixed-point iteration on mass distributions:
// masses -> (t, m) -> values -> policies -> stationary masses.

#include "mter/loading.hpp"
#include "mter/metrics.hpp"
#include "mter/smdp.hpp"

#include <cstdint>
#include <functional>
#include <string>
#include <vector>

namespace mter {

/// Everything that defines one equilibrium problem.
struct Model {
  Network network;
  DemandModel demand;
  SmdpParams smdp;
};

enum class StepKind { fixed_point, msa, msa_floor, momentum };

struct StepRule {
  StepKind kind = StepKind::msa_floor;
  double floor = 0.02;   // msa_floor
  double beta = 0.5;     // momentum carry b
  double psi = 1.0;      // momentum step
};

std::string to_string(StepKind kind);
StepKind parse_step_kind(const std::string& name);

struct SolverConfig {
  StepRule step;
  double tolerance = 1e-4;  // l2 gap
  long max_iterations = 3000;
  ValueSolveOptions values;  // inner value iteration; tolerance is tightened as the gap shrinks
  double inner_ratio = 1e-6;      // value tolerance <= inner_ratio * previous gap
  double inner_floor = 1e-12;     // relative to the value scale
  LoadingOptions loading;
  int starts = 1;
  std::uint64_t seed = 1;
  double balance_tolerance = 0.0;  // flow-balance certificate; 0 = derived from the gap tolerance
};

void validate(const SolverConfig& config);

struct TraceRow {
  long iter = 0;
  double gap = 0.0;
  double step = 0.0;
  double seconds = 0.0;
};

struct Residuals {
  double gap = 0.0;
  double bellman = 0.0;           // sup-norm, last value solve
  double flow_balance = 0.0;      // vehicles/hour
  double time_consistency = 0.0;  // max |t - t(u)|
  double match_consistency = 0.0; // max |m - m(f)|
  double mass_error = 0.0;        // |sum(x + y) - target|
  bool within_tolerance = false;
};

struct EquilibriumState {
  MassDistribution masses;
  LinkState env;
  ValueFunctions values;
  Policies policies;
};

struct EquilibriumResult {
  EquilibriumState state;
  std::vector<TraceRow> trace;
  Residuals residuals;
  MetricsBundle metrics;
  bool converged = false;
  long iterations = 0;
  std::uint64_t seed = 0;
  double target_mass = 0.0;
  std::string message;
};

/// Hooks used by the extension modes to alter one stage of the map.
struct MapOptions {
  bool free_flow_times = false;                // t pinned at free flow; m still endogenous
  const Policies* frozen_policies = nullptr;   // skip the value solve
  std::function<double(const ValueFunctions&)> target_mass;  // default: pool size
};

struct MapOutput {
  MassDistribution mapped;
  LinkState env;
  ValueFunctions values;
  Policies policies;
  double target_mass = 0.0;
  double bellman_residual = 0.0;
  long value_iterations = 0;
};

/// One application of the composed map at `masses`.
MapOutput fixed_point_map(const MassDistribution& masses, const Model& model, const SolverConfig& config,
                          const MapOptions& options = {}, const ValueFunctions* warm_start = nullptr,
                          double value_tolerance = 0.0);

/// l2 norm of the stacked difference. Throws DomainError on size mismatch.
double gap(const MassDistribution& current, const MassDistribution& mapped);

struct StepCarry {
  std::vector<double> direction;  // momentum state, stacked (x, y)
};

/// Relaxed update at outer iteration k (1-based). Returns the step size used.
/// Negatives are clipped; if `renormalize_to` > 0 the total is rescaled to it.
double step_update(const StepRule& rule, long k, MassDistribution& current, const MassDistribution& mapped,
                   StepCarry& carry, double renormalize_to);

double step_size(const StepRule& rule, long k);

/// Dirichlet(1) over all states scaled to `total_mass`.
MassDistribution random_masses(const Network& network, double total_mass, std::uint64_t seed);

/// Runs until gap <= tolerance or max_iterations. Never throws on non-convergence;
/// `converged` is false and the trace is kept.
EquilibriumResult solve_equilibrium(const Model& model, const SolverConfig& config, const MapOptions& options = {},
                                    const MassDistribution* initial = nullptr);

struct MultiStartReport {
  EquilibriumResult best;
  std::vector<EquilibriumResult> runs;
  std::size_t best_index = 0;
};

/// Independent starts with seeds derived from config.seed, run concurrently.
/// Picks the converged run with the highest profit rate; when none converged,
/// `best` is the run with the smallest final gap and has converged == false.
/// Rethrows the first error only if every start failed with an exception.
MultiStartReport multi_start(const Model& model, const SolverConfig& config, const MapOptions& options = {});

/// Seed of start k derived from a root seed.
std::uint64_t derive_seed(std::uint64_t root, std::uint64_t k);

}  // namespace mter
