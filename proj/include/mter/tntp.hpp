#pragma once

// Readers for the transportation-test-problem text formats (link and trips
// files) plus the small CSV side files used for arrival-rate overrides and tolls.

#include "mter/network.hpp"

#include <filesystem>

namespace mter {

enum class TimeUnit { hours, minutes };
enum class JamCapacitySource { geometry, file };
enum class LengthSource { free_flow, file };

struct ParseOptions {
  TimeUnit time_unit = TimeUnit::minutes;
  JamCapacitySource jam_capacity = JamCapacitySource::geometry;
  LengthSource length = LengthSource::free_flow;
  double file_length_to_km = 1.0;  // scale applied to the file's length column
  double lanes = 2.0;
  double vehicle_length_m = 6.0;
  double free_flow_speed_mph = 40.0;
  double friction = 0.8;
  double pool_size = 20000.0;
};

struct ParseReport {
  std::size_t nodes = 0;
  std::size_t links = 0;
  std::size_t od_pairs = 0;  // off-diagonal pairs with positive demand
  double total_demand = 0.0;
};

/// One data row of a link file, before unit conversion.
struct LinkRow {
  std::int64_t tail = 0;
  std::int64_t head = 0;
  double capacity = 0.0;
  double length = 0.0;
  double free_flow_time = 0.0;
  double background = 0.0;
  std::size_t line = 0;
};

struct LinkFile {
  std::size_t declared_nodes = 0;  // from <NUMBER OF NODES>, 0 if absent
  std::vector<LinkRow> rows;
};

LinkFile read_link_file(const std::filesystem::path& path);

/// Dense OD matrix (origin x destination, per hour) indexed like `node_ids`.
Eigen::MatrixXd read_trips_file(const std::filesystem::path& path, std::span<const std::int64_t> node_ids);

struct ParsedNetwork {
  NetworkData data;  // arrival rates already derived from the trips file
  Eigen::MatrixXd od;
  Eigen::MatrixXd destination;
  ParseReport report;
};

/// Builds network data from a link file (attributes converted per `options`)
/// without demand.
NetworkData network_from_link_file(const LinkFile& file, const ParseOptions& options);

ParsedNetwork parse_network(const std::filesystem::path& link_file, const std::filesystem::path& trips_file,
                            const ParseOptions& options);

/// CSV `link_id,lambda,gamma`; overrides arrival rate and friction per link.
void apply_lambda_override(const std::filesystem::path& path, NetworkData& data);

/// CSV `link_id,toll_dollars`.
void apply_tolls(const std::filesystem::path& path, NetworkData& data);

}  // namespace mter
