#pragma once

// Reduced-state expected Bellman system for a single vehicle and the logit
// choice probabilities derived from it.
//
// Storage follows the network's HiredLayout: hired action values w and hired
// link-choice probabilities q exist only for pairs (a, d) with a not leaving d.
// Node-by-destination tables (tau, accept/reject) are dense, row-major in the
// first index given in the accessor name.

#include "mter/network.hpp"

#include <optional>
#include <span>
#include <vector>

namespace mter {

enum class Boundary {
  forward_looking,  // tau(d, d) = sigma(d)
  myopic,           // tau(d, d) = 0
};

struct SmdpParams {
  double discount_rate = 0.1;     // 1/hour
  double route_scale = 10.0;      // logit scale for link choice
  double accept_scale = 10.0;     // logit scale for order acceptance
  double empty_cost_per_hour = 6.0;
  double hired_cost_per_hour = 6.0;
  Boundary boundary = Boundary::forward_looking;
};

void validate(const SmdpParams& params);

/// Per-link travel time and matching probability the SMDP is solved against.
struct LinkEnvironment {
  std::vector<double> time;
  std::vector<double> match;
  std::vector<double> match_complement;  // 1 - match, accurate near match = 1
};

struct ValueFunctions {
  std::vector<double> z;      // per link, empty
  std::vector<double> w;      // per hired state (HiredLayout order)
  std::vector<double> sigma;  // per node, empty
  std::vector<double> tau;    // [d * |N| + j]; tau(d, d) is the boundary value

  static ValueFunctions zeros(const Network& network);
  double tau_at(std::size_t num_nodes, NodeIndex node, NodeIndex dest) const {
    return tau[static_cast<std::size_t>(dest) * num_nodes + static_cast<std::size_t>(node)];
  }
};

struct Policies {
  std::vector<double> p;       // per link: empty link choice at the tail node
  std::vector<double> q;       // per hired state: hired link choice at the tail node
  std::vector<double> accept;  // [i * |N| + d]
  std::vector<double> reject;  // 1 - accept, accurate near accept = 1
};

/// Log-sum social surplus (1/scale) ln sum exp(scale v), max-shifted. Throws DomainError on empty input.
double social_surplus(std::span<const double> values, double scale);
double social_surplus(double a, double b, double scale);

/// Cost of entering link a: coefficient * t plus toll.
double empty_cost(const SmdpParams& params, const Link& link, double time);
double hired_cost(const SmdpParams& params, const Link& link, double time);

/// One application of the expected Bellman operator. Parallel over destinations.
ValueFunctions bellman_apply(const ValueFunctions& v, const LinkEnvironment& env, const SmdpParams& params,
                             const Network& network, const DemandModel& demand);

/// In-place variant reusing `out`'s storage; `in` and `out` must not alias.
void bellman_apply_into(const ValueFunctions& in, ValueFunctions& out, const LinkEnvironment& env,
                        const SmdpParams& params, const Network& network, const DemandModel& demand);

/// Sup-norm distance over all four value blocks.
double sup_distance(const ValueFunctions& a, const ValueFunctions& b);

/// e^{-beta * min_a t_a}: the Bellman operator's contraction modulus.
double contraction_modulus(const LinkEnvironment& env, const SmdpParams& params);

struct ValueSolveOptions {
  double tolerance = 1e-8;  // sup-norm Bellman residual
  long max_iterations = 1'000'000;
};

struct ValueSolve {
  ValueFunctions values;
  long iterations = 0;
  double residual = 0.0;
};

/// Value iteration until ||Lambda v - v||_inf <= tolerance. Throws ConvergenceError.
ValueSolve solve_values(const LinkEnvironment& env, const SmdpParams& params, const Network& network,
                        const DemandModel& demand, const ValueSolveOptions& options = {},
                        const ValueFunctions* warm_start = nullptr);

/// Logit link-choice and acceptance probabilities implied by `v`.
Policies choice_probabilities(const ValueFunctions& v, const SmdpParams& params, const Network& network,
                              const DemandModel& demand);

}  // namespace mter
