#pragma once

#include "mter/equilibrium.hpp"
#include "mter/fixtures.hpp"

#include <filesystem>
#include <random>
#include <string>

namespace mter::testing {

inline std::filesystem::path data_dir() { return MTER_DATA_DIR; }

inline std::filesystem::path scratch_dir(const std::string& name) {
  auto p = std::filesystem::temp_directory_path() / ("mter_test_" + name);
  std::filesystem::remove_all(p);
  std::filesystem::create_directories(p);
  return p;
}

/// Random but feasible (t, m): t between t0 and 3 t0, m in [0, 1) with some exact zeros.
inline LinkEnvironment random_env(const Network& net, std::mt19937_64& rng, double zero_share = 0.2) {
  std::uniform_real_distribution<double> U(0.0, 1.0);
  LinkEnvironment env;
  for (std::size_t a = 0; a < net.num_links(); ++a) {
    env.time.push_back(net.free_flow_time(static_cast<LinkIndex>(a)) * (1.0 + 2.0 * U(rng)));
    const double m = U(rng) < zero_share ? 0.0 : 0.95 * U(rng);
    env.match.push_back(m);
    env.match_complement.push_back(1.0 - m);
  }
  return env;
}

inline ValueFunctions random_values(const Network& net, std::mt19937_64& rng, double scale = 50.0) {
  std::uniform_real_distribution<double> U(-scale, scale);
  ValueFunctions v = ValueFunctions::zeros(net);
  for (double& x : v.z) x = U(rng);
  for (double& x : v.w) x = U(rng);
  for (double& x : v.sigma) x = U(rng);
  for (double& x : v.tau) x = U(rng);
  return v;
}

/// Environment at the masses' own congestion.
inline LinkEnvironment env_at(const MassDistribution& m, const Network& net) { return masses_to_env(m, net).environment(); }

inline double max_abs_diff(const std::vector<double>& a, const std::vector<double>& b) {
  double d = 0.0;
  for (std::size_t k = 0; k < a.size(); ++k) d = std::max(d, std::abs(a[k] - b[k]));
  return d;
}

}  // namespace mter::testing
