#pragma once

// Variants built on the equilibrium driver: endogenous participation, the
// myopic-driver and congestion-unaware ablations, and the closed-form-free
// solver for single directed cycles.

#include "mter/equilibrium.hpp"

#include <functional>
#include <vector>

namespace mter {

struct ParticipationParams {
  std::vector<double> potential;  // M_i per node
  double dispersion = 0.01;       // zeta
  double outside_option = 0.0;
};

void validate(const ParticipationParams& params, const Network& network);

/// P_i = 1 / (1 + exp(-zeta (sigma_i - outside))).
std::vector<double> participation_probabilities(const std::vector<double>& sigma, const ParticipationParams& params);

struct ParticipationResult {
  EquilibriumResult equilibrium;
  std::vector<double> probability;  // per node, at the reported state
  double participating_mass = 0.0;
  double rate = 0.0;  // participating mass / sum M_i
};

/// Fixed-point loop whose loading target is sum_i M_i P_i(sigma), recomputed every iteration.
ParticipationResult solve_participation(const Model& model, const ParticipationParams& params,
                                        const SolverConfig& config);

/// Same pipeline with tau(d, d) = 0.
EquilibriumResult solve_myopic(const Model& model, const SolverConfig& config);

struct CongestionUnawareResult {
  EquilibriumResult planning;  // phase 1: times pinned at free flow
  EquilibriumResult loaded;    // phase 2: frozen policies, congested times
};

/// Phase 2 relaxes with MSA floored at `phase_two_floor`.
CongestionUnawareResult congestion_unaware_load(const Model& model, const SolverConfig& config,
                                                double phase_two_floor = 0.05);

struct CycleProblem {
  std::vector<std::function<double(double)>> time;   // per link, in cycle order
  std::vector<std::function<double(double)>> slope;
  double total_mass = 0.0;
  int grid_points = 1000;
};

/// Links of `network` in cycle order. Throws StructuralError unless the network is one directed cycle.
std::vector<LinkIndex> cycle_order(const Network& network);
CycleProblem cycle_problem(const Network& network);

/// log(max(u/v) / min(u/v)).
double spread(const std::vector<double>& u, const std::vector<double>& v);

/// Phi_a(u) = M t_a(u_a) / sum t.
std::vector<double> cycle_map(const CycleProblem& problem, const std::vector<double>& u);

/// max over the validation grid of u t'(u) / t(u). Throws ValidationError when u/t(u)
/// is not increasing on the grid or the bound reaches 1.
double cycle_contraction_bound(const CycleProblem& problem);

struct CycleReport {
  std::vector<double> mass;  // u*
  double flow = 0.0;         // rho = u_a / t_a(u_a), common to all links
  double kappa_hat = 0.0;
  std::vector<double> spreads;       // D(u^{k+1}, u^k)
  std::vector<double> spread_ratios; // successive spread ratios
  double empirical_factor = 0.0;     // max spread ratio
  long iterations = 0;
};

/// Iterates Phi from `start` (uniform if empty) until the spread between iterates <= tolerance.
CycleReport solve_cycle(const CycleProblem& problem, double tolerance = 1e-13, std::vector<double> start = {},
                        long max_iterations = 1'000'000);

}  // namespace mter
