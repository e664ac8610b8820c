#pragma once

// Run configuration: a flat key = value text file (with # comments) plus
// command-line overrides. Every key has a documented default, so the
// effective configuration can be echoed in full and replayed.

#include "mter/equilibrium.hpp"
#include "mter/extensions.hpp"
#include "mter/microsim.hpp"
#include "mter/tntp.hpp"

#include <filesystem>
#include <map>
#include <string>
#include <vector>

namespace mter {

class RunConfig {
 public:
  RunConfig();  // all defaults

  static RunConfig from_file(const std::filesystem::path& path);

  /// Unknown keys throw ValidationError. Path-valued keys are resolved against `base_dir` when relative.
  void set(const std::string& key, const std::string& value, const std::filesystem::path& base_dir = {});
  /// "key=value".
  void set_assignment(const std::string& assignment);

  const std::string& get(const std::string& key) const;
  double number(const std::string& key) const;
  long integer(const std::string& key) const;
  bool flag(const std::string& key) const;
  std::vector<double> numbers(const std::string& key) const;  // comma-separated
  bool has_value(const std::string& key) const { return !get(key).empty(); }

  const std::map<std::string, std::string>& values() const { return values_; }

  static const std::vector<std::pair<std::string, std::string>>& defaults();

 private:
  std::map<std::string, std::string> values_;
};

/// Model plus the pieces of configuration the modes need.
struct Scenario {
  Model model;
  SolverConfig solver;
  ParticipationParams participation;
  SimConfig sim;
  ParseReport report;  // for file-based networks
};

/// Builds and validates the scenario. Throws ParseError / ValidationError / StructuralError.
Scenario load_scenario(const RunConfig& config);

SolverConfig solver_config(const RunConfig& config);

/// Sets toll on every link entering `zone` (external node ids) from outside it,
/// or on every link whose head is in the zone when `include_internal`.
void apply_cordon(NetworkData& data, const std::vector<std::int64_t>& zone, double toll, bool include_internal = false);

}  // namespace mter
