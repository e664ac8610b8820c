#pragma once

// result.json and the CSV side outputs.

#include "mter/config.hpp"
#include "mter/equilibrium.hpp"
#include "mter/extensions.hpp"
#include "mter/metrics.hpp"

#include <json.hpp>

#include <filesystem>
#include <string>
#include <vector>

namespace mter {

nlohmann::json metrics_to_json(const MetricsBundle& m);
MetricsBundle metrics_from_json(const nlohmann::json& j);

nlohmann::json network_to_json(const Network& network);

/// Full equilibrium record: masses, per-link state, policies, values, metrics,
/// residuals, seed, and the complete configuration echo.
nlohmann::json result_to_json(const std::string& mode, const EquilibriumResult& result, const Model& model,
                              const RunConfig& config);

void write_json(const std::filesystem::path& path, const nlohmann::json& j);
nlohmann::json read_json(const std::filesystem::path& path);

void write_trace_csv(const std::filesystem::path& path, const std::vector<TraceRow>& trace);
void write_metrics_csv(const std::filesystem::path& path, const MetricsBundle& m);

struct StoredResult {
  RunConfig config;
  MassDistribution masses;
  std::vector<double> accept;  // [i * |N| + d]
  MetricsBundle metrics;
  nlohmann::json raw;
};

StoredResult read_result(const std::filesystem::path& path);

/// Rebuilds the network from the configuration echo and recomputes the metrics
/// from the stored masses and acceptance probabilities.
MetricsBundle recompute_metrics(const StoredResult& stored);

/// Writes delta_links.csv (a minus b per link) and delta_metrics.csv.
/// Throws StructuralError naming the first differing links when the networks differ.
void compare_results(const nlohmann::json& a, const nlohmann::json& b, const std::filesystem::path& out_dir);

}  // namespace mter
