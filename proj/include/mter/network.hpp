#pragma once

#include <Eigen/Dense>

#include <cstddef>
#include <cstdint>
#include <functional>
#include <optional>
#include <span>
#include <string>
#include <vector>

namespace mter {

using NodeIndex = std::int32_t;
using LinkIndex = std::int32_t;

inline constexpr double kKmPerMile = 1.609344;

/// One directed road link. Node references are dense internal indices.
struct Link {
  std::int64_t id = 0;          // external id (1-based row in the link file)
  NodeIndex tail = -1;
  NodeIndex head = -1;
  double free_flow_time = 0.0;  // hours
  double jam_capacity = 0.0;    // vehicles
  double length_km = 0.0;
  double arrival_rate = 0.0;    // passengers/hour, realized at the head node
  double friction = 0.8;        // matching friction
  double toll = 0.0;            // dollars per entry
  double background = 0.0;      // vehicles added to the link mass
};

/// Replaces the linear travel-time law on a single link.
struct TravelTimeCurve {
  std::function<double(double)> time;
  std::function<double(double)> slope;
};

/// Plain description of a network; validated when a Network is built from it.
struct NetworkData {
  std::vector<std::int64_t> node_ids;
  std::vector<Link> links;
  double pool_size = 0.0;
  std::vector<std::optional<TravelTimeCurve>> curves;  // empty, or one entry per link
};

/// Compressed index over hired states (a, d), which exist only when link a
/// does not leave d. Storage is blocked by destination.
class HiredLayout {
 public:
  HiredLayout() = default;
  HiredLayout(std::size_t num_nodes, std::span<const Link> links);

  std::size_t size() const { return link_of_.size(); }
  std::size_t num_nodes() const { return offsets_.empty() ? 0 : offsets_.size() - 1; }
  std::size_t block_begin(NodeIndex d) const { return offsets_[static_cast<std::size_t>(d)]; }
  std::size_t block_end(NodeIndex d) const { return offsets_[static_cast<std::size_t>(d) + 1]; }
  std::span<const LinkIndex> block_links(NodeIndex d) const {
    return {link_of_.data() + block_begin(d), block_end(d) - block_begin(d)};
  }

  /// Flat index of (a, d), or -1 when a leaves d.
  std::ptrdiff_t find(LinkIndex a, NodeIndex d) const {
    const auto pos = position_[static_cast<std::size_t>(d) * num_links_ + static_cast<std::size_t>(a)];
    return pos < 0 ? -1 : static_cast<std::ptrdiff_t>(block_begin(d)) + pos;
  }
  /// Flat index of (a, d); throws std::out_of_range for an undefined pair.
  std::size_t at(LinkIndex a, NodeIndex d) const;

  LinkIndex link_of(std::size_t k) const { return link_of_[k]; }
  NodeIndex destination_of(std::size_t k) const { return dest_of_[k]; }

 private:
  std::size_t num_links_ = 0;
  std::vector<std::size_t> offsets_;
  std::vector<LinkIndex> link_of_;
  std::vector<NodeIndex> dest_of_;
  std::vector<std::int32_t> position_;
};

/// Immutable directed road network with vehicle pool size.
class Network {
 public:
  explicit Network(NetworkData data);

  std::size_t num_nodes() const { return data_.node_ids.size(); }
  std::size_t num_links() const { return data_.links.size(); }
  double pool_size() const { return data_.pool_size; }

  const Link& link(LinkIndex a) const { return data_.links[static_cast<std::size_t>(a)]; }
  std::span<const Link> links() const { return data_.links; }
  std::span<const LinkIndex> outgoing(NodeIndex i) const;
  std::span<const LinkIndex> incoming(NodeIndex i) const;

  std::int64_t node_id(NodeIndex i) const { return data_.node_ids[static_cast<std::size_t>(i)]; }
  /// Internal index of an external node id; throws StructuralError if unknown.
  NodeIndex node_index(std::int64_t id) const;
  std::optional<LinkIndex> find_link(std::int64_t tail_id, std::int64_t head_id) const;

  /// Congested travel time t_a(u), honouring a custom curve if one is set.
  double link_time(LinkIndex a, double mass) const;
  double link_time_slope(LinkIndex a, double mass) const;
  double free_flow_time(LinkIndex a) const { return link_time(a, 0.0); }
  bool has_curve(LinkIndex a) const;

  const HiredLayout& hired() const { return hired_; }
  std::size_t num_states() const { return num_links() + hired_.size(); }

  bool strongly_connected() const { return strongly_connected_; }
  const std::vector<std::string>& warnings() const { return warnings_; }

  const NetworkData& data() const { return data_; }

 private:
  NetworkData data_;
  std::vector<std::size_t> out_offsets_, in_offsets_;
  std::vector<LinkIndex> out_links_, in_links_;
  HiredLayout hired_;
  bool strongly_connected_ = false;
  std::vector<std::string> warnings_;
};

/// Destination probabilities n(i, d) and fares chi(i, d), both |N| x |N|.
struct DemandModel {
  Eigen::MatrixXd destination;
  Eigen::MatrixXd fare;
};

/// Throws ValidationError unless every row with incoming demand is a simplex with a zero diagonal.
void validate_demand(const Network& network, const DemandModel& demand);

// Exogenous response functions.
double travel_time(const Link& link, double mass);
double travel_time_slope(const Link& link, double mass);
double matching_probability(const Link& link, double empty_flow);
/// 1 - m computed without cancellation.
double matching_complement(const Link& link, double empty_flow);

struct DerivedDemand {
  std::vector<double> arrival_rate;  // per link
  Eigen::MatrixXd destination;
};

/// Splits each node's origin total uniformly over its incoming links.
DerivedDemand derive_demand(const Eigen::MatrixXd& od, const Network& network);

/// Copy of `data` with per-link arrival rates replaced.
NetworkData with_arrival_rates(NetworkData data, std::span<const double> rates);

struct FareSchedule {
  double free_flow_speed_mph = 40.0;
  double base = 3.0;
  double per_unit = 0.70;
  double unit_miles = 0.2;
};

double fare_for_time(double hours, const FareSchedule& schedule);

/// All-pairs fastest free-flow times (hours); +inf where unreachable.
Eigen::MatrixXd free_flow_path_times(const Network& network);

/// chi(j, d) from fastest free-flow path distance. Pairs with positive demand must be reachable.
Eigen::MatrixXd compute_fares(const Network& network, const Eigen::MatrixXd& destination,
                              const FareSchedule& schedule);

}  // namespace mter
