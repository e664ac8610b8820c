#include "mter/network.hpp"

#include "mter/errors.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <queue>
#include <sstream>
#include <unordered_map>

namespace mter {

namespace {

void build_adjacency(std::size_t num_nodes, std::span<const Link> links, bool by_tail,
                     std::vector<std::size_t>& offsets, std::vector<LinkIndex>& out) {
  offsets.assign(num_nodes + 1, 0);
  for (const Link& l : links) ++offsets[static_cast<std::size_t>(by_tail ? l.tail : l.head) + 1];
  for (std::size_t i = 0; i < num_nodes; ++i) offsets[i + 1] += offsets[i];
  out.assign(links.size(), 0);
  std::vector<std::size_t> fill(offsets.begin(), offsets.end() - 1);
  for (std::size_t a = 0; a < links.size(); ++a) {
    const auto node = static_cast<std::size_t>(by_tail ? links[a].tail : links[a].head);
    out[fill[node]++] = static_cast<LinkIndex>(a);
  }
}

std::vector<char> reach(std::size_t n, NodeIndex root, const std::vector<std::size_t>& offsets,
                        const std::vector<LinkIndex>& adj, std::span<const Link> links, bool forward) {
  std::vector<char> seen(n, 0);
  std::vector<NodeIndex> stack{root};
  seen[static_cast<std::size_t>(root)] = 1;
  while (!stack.empty()) {
    const NodeIndex i = stack.back();
    stack.pop_back();
    for (std::size_t k = offsets[static_cast<std::size_t>(i)]; k < offsets[static_cast<std::size_t>(i) + 1]; ++k) {
      const Link& l = links[static_cast<std::size_t>(adj[k])];
      const NodeIndex j = forward ? l.head : l.tail;
      if (!seen[static_cast<std::size_t>(j)]) {
        seen[static_cast<std::size_t>(j)] = 1;
        stack.push_back(j);
      }
    }
  }
  return seen;
}

}  // namespace

HiredLayout::HiredLayout(std::size_t num_nodes, std::span<const Link> links) : num_links_(links.size()) {
  offsets_.assign(num_nodes + 1, 0);
  position_.assign(num_nodes * num_links_, -1);
  for (std::size_t d = 0; d < num_nodes; ++d) {
    std::int32_t pos = 0;
    for (std::size_t a = 0; a < num_links_; ++a) {
      if (links[a].tail == static_cast<NodeIndex>(d)) continue;
      position_[d * num_links_ + a] = pos++;
      link_of_.push_back(static_cast<LinkIndex>(a));
      dest_of_.push_back(static_cast<NodeIndex>(d));
    }
    offsets_[d + 1] = offsets_[d] + static_cast<std::size_t>(pos);
  }
}

std::size_t HiredLayout::at(LinkIndex a, NodeIndex d) const {
  const auto k = find(a, d);
  if (k < 0) {
    throw std::out_of_range("hired state undefined: link " + std::to_string(a) +
                            " leaves destination " + std::to_string(d));
  }
  return static_cast<std::size_t>(k);
}

Network::Network(NetworkData data) : data_(std::move(data)) {
  const std::size_t n = data_.node_ids.size();
  if (n == 0) throw StructuralError("network has no nodes");
  if (data_.links.empty()) throw StructuralError("network has no links");
  if (!(data_.pool_size > 0.0)) throw ValidationError("pool size M must be positive");
  if (!data_.curves.empty() && data_.curves.size() != data_.links.size()) {
    throw ValidationError("travel-time curve list must be empty or match the link count");
  }

  for (std::size_t a = 0; a < data_.links.size(); ++a) {
    const Link& l = data_.links[a];
    const std::string where = "link " + std::to_string(l.id);
    if (l.tail < 0 || l.head < 0 || static_cast<std::size_t>(l.tail) >= n ||
        static_cast<std::size_t>(l.head) >= n) {
      throw StructuralError(where + ": dangling node reference");
    }
    if (l.tail == l.head) throw StructuralError(where + ": self-loop");
    if (!(l.free_flow_time > 0.0)) throw ValidationError(where + ": free-flow time must be positive");
    if (!(l.jam_capacity > 0.0)) throw ValidationError(where + ": jam capacity must be positive");
    if (!(l.arrival_rate >= 0.0)) throw ValidationError(where + ": arrival rate must be nonnegative");
    if (!(l.friction > 0.0)) throw ValidationError(where + ": friction must be positive");
    if (!(l.toll >= 0.0)) throw ValidationError(where + ": toll must be nonnegative");
    if (!(l.background >= 0.0)) throw ValidationError(where + ": background mass must be nonnegative");
  }

  build_adjacency(n, data_.links, true, out_offsets_, out_links_);
  build_adjacency(n, data_.links, false, in_offsets_, in_links_);
  for (std::size_t i = 0; i < n; ++i) {
    if (out_offsets_[i + 1] == out_offsets_[i]) {
      throw StructuralError("node " + std::to_string(data_.node_ids[i]) + " has no outgoing link");
    }
    if (in_offsets_[i + 1] == in_offsets_[i]) {
      throw StructuralError("node " + std::to_string(data_.node_ids[i]) + " has no incoming link");
    }
  }
  for (std::size_t a = 0; a < data_.links.size(); ++a) {
    if (!(link_time(static_cast<LinkIndex>(a), 0.0) > 0.0)) {
      throw ValidationError("link " + std::to_string(data_.links[a].id) + ": free-flow time must be positive");
    }
  }

  const auto fwd = reach(n, 0, out_offsets_, out_links_, data_.links, true);
  const auto bwd = reach(n, 0, in_offsets_, in_links_, data_.links, false);
  strongly_connected_ = std::all_of(fwd.begin(), fwd.end(), [](char c) { return c != 0; }) &&
                        std::all_of(bwd.begin(), bwd.end(), [](char c) { return c != 0; });
  if (!strongly_connected_) warnings_.emplace_back("network is not strongly connected");

  hired_ = HiredLayout(n, data_.links);
}

std::span<const LinkIndex> Network::outgoing(NodeIndex i) const {
  const auto k = static_cast<std::size_t>(i);
  return {out_links_.data() + out_offsets_[k], out_offsets_[k + 1] - out_offsets_[k]};
}

std::span<const LinkIndex> Network::incoming(NodeIndex i) const {
  const auto k = static_cast<std::size_t>(i);
  return {in_links_.data() + in_offsets_[k], in_offsets_[k + 1] - in_offsets_[k]};
}

NodeIndex Network::node_index(std::int64_t id) const {
  const auto it = std::find(data_.node_ids.begin(), data_.node_ids.end(), id);
  if (it == data_.node_ids.end()) throw StructuralError("unknown node id " + std::to_string(id));
  return static_cast<NodeIndex>(it - data_.node_ids.begin());
}

std::optional<LinkIndex> Network::find_link(std::int64_t tail_id, std::int64_t head_id) const {
  const NodeIndex i = node_index(tail_id);
  const NodeIndex j = node_index(head_id);
  for (LinkIndex a : outgoing(i)) {
    if (link(a).head == j) return a;
  }
  return std::nullopt;
}

bool Network::has_curve(LinkIndex a) const {
  return !data_.curves.empty() && data_.curves[static_cast<std::size_t>(a)].has_value();
}

double Network::link_time(LinkIndex a, double mass) const {
  if (has_curve(a)) return data_.curves[static_cast<std::size_t>(a)]->time(mass + link(a).background);
  return travel_time(link(a), mass);
}

double Network::link_time_slope(LinkIndex a, double mass) const {
  if (has_curve(a)) return data_.curves[static_cast<std::size_t>(a)]->slope(mass + link(a).background);
  return travel_time_slope(link(a), mass);
}

void validate_demand(const Network& network, const DemandModel& demand) {
  const auto n = static_cast<Eigen::Index>(network.num_nodes());
  if (demand.destination.rows() != n || demand.destination.cols() != n) {
    throw ValidationError("destination matrix must be |N| x |N|");
  }
  if (demand.fare.rows() != n || demand.fare.cols() != n) throw ValidationError("fare matrix must be |N| x |N|");
  for (Eigen::Index i = 0; i < n; ++i) {
    double inflow = 0.0;
    for (LinkIndex a : network.incoming(static_cast<NodeIndex>(i))) inflow += network.link(a).arrival_rate;
    if (demand.destination(i, i) != 0.0) {
      throw ValidationError("destination probability n(i,i) must be zero at node " +
                            std::to_string(network.node_id(static_cast<NodeIndex>(i))));
    }
    if ((demand.destination.row(i).array() < 0.0).any()) {
      throw ValidationError("negative destination probability");
    }
    if (inflow > 0.0 && std::abs(demand.destination.row(i).sum() - 1.0) > 1e-9) {
      throw ValidationError("destination probabilities at node " +
                            std::to_string(network.node_id(static_cast<NodeIndex>(i))) + " do not sum to one");
    }
  }
  if (!demand.fare.allFinite()) throw ValidationError("fares must be finite");
}

double travel_time(const Link& link, double mass) {
  if (mass < 0.0) throw DomainError("travel_time: negative link mass");
  return link.free_flow_time * (1.0 + (mass + link.background) / link.jam_capacity);
}

double travel_time_slope(const Link& link, double mass) {
  if (mass < 0.0) throw DomainError("travel_time_slope: negative link mass");
  return link.free_flow_time / link.jam_capacity;
}

double matching_probability(const Link& link, double empty_flow) {
  if (empty_flow < 0.0) throw DomainError("matching_probability: negative empty flow");
  if (link.arrival_rate == 0.0) return 0.0;
  if (empty_flow == 0.0) return 1.0;
  const double ratio = link.arrival_rate / empty_flow;
  return std::min(ratio, -std::expm1(-link.friction * ratio));
}

double matching_complement(const Link& link, double empty_flow) {
  if (empty_flow < 0.0) throw DomainError("matching_complement: negative empty flow");
  if (link.arrival_rate == 0.0) return 1.0;
  if (empty_flow == 0.0) return 0.0;
  const double ratio = link.arrival_rate / empty_flow;
  const double friction_term = -std::expm1(-link.friction * ratio);
  return ratio < friction_term ? 1.0 - ratio : std::exp(-link.friction * ratio);
}

DerivedDemand derive_demand(const Eigen::MatrixXd& od, const Network& network) {
  const auto n = static_cast<Eigen::Index>(network.num_nodes());
  if (od.rows() != n || od.cols() != n) throw ValidationError("OD matrix must be |N| x |N|");
  if ((od.array() < 0.0).any()) throw ValidationError("OD matrix has a negative entry");

  DerivedDemand out;
  out.arrival_rate.assign(network.num_links(), 0.0);
  out.destination = Eigen::MatrixXd::Zero(n, n);
  for (Eigen::Index j = 0; j < n; ++j) {
    double origin_total = 0.0;
    for (Eigen::Index d = 0; d < n; ++d) {
      if (d != j) origin_total += od(j, d);
    }
    const auto in = network.incoming(static_cast<NodeIndex>(j));
    if (origin_total > 0.0) {
      if (in.empty()) {
        throw StructuralError("node " + std::to_string(network.node_id(static_cast<NodeIndex>(j))) +
                              " has demand but no incoming links");
      }
      const double share = origin_total / static_cast<double>(in.size());
      for (LinkIndex a : in) out.arrival_rate[static_cast<std::size_t>(a)] += share;
      for (Eigen::Index d = 0; d < n; ++d) {
        if (d != j) out.destination(j, d) = od(j, d) / origin_total;
      }
    } else if (n > 1) {
      for (Eigen::Index d = 0; d < n; ++d) {
        if (d != j) out.destination(j, d) = 1.0 / static_cast<double>(n - 1);
      }
    }
  }
  return out;
}

NetworkData with_arrival_rates(NetworkData data, std::span<const double> rates) {
  if (rates.size() != data.links.size()) throw ValidationError("arrival-rate vector length mismatch");
  for (std::size_t a = 0; a < rates.size(); ++a) data.links[a].arrival_rate = rates[a];
  return data;
}

double fare_for_time(double hours, const FareSchedule& schedule) {
  const double miles = hours * schedule.free_flow_speed_mph;
  return schedule.base + schedule.per_unit * (miles / schedule.unit_miles);
}

Eigen::MatrixXd free_flow_path_times(const Network& network) {
  const auto n = network.num_nodes();
  const double inf = std::numeric_limits<double>::infinity();
  Eigen::MatrixXd times = Eigen::MatrixXd::Constant(static_cast<Eigen::Index>(n), static_cast<Eigen::Index>(n), inf);
  using Entry = std::pair<double, NodeIndex>;
  std::vector<double> dist(n);
  for (std::size_t s = 0; s < n; ++s) {
    std::fill(dist.begin(), dist.end(), inf);
    std::priority_queue<Entry, std::vector<Entry>, std::greater<>> heap;
    dist[s] = 0.0;
    heap.emplace(0.0, static_cast<NodeIndex>(s));
    while (!heap.empty()) {
      const auto [d, i] = heap.top();
      heap.pop();
      if (d > dist[static_cast<std::size_t>(i)]) continue;
      for (LinkIndex a : network.outgoing(i)) {
        const NodeIndex j = network.link(a).head;
        const double cand = d + network.free_flow_time(a);
        if (cand < dist[static_cast<std::size_t>(j)]) {
          dist[static_cast<std::size_t>(j)] = cand;
          heap.emplace(cand, j);
        }
      }
    }
    for (std::size_t j = 0; j < n; ++j) times(static_cast<Eigen::Index>(s), static_cast<Eigen::Index>(j)) = dist[j];
  }
  return times;
}

Eigen::MatrixXd compute_fares(const Network& network, const Eigen::MatrixXd& destination,
                              const FareSchedule& schedule) {
  const Eigen::MatrixXd times = free_flow_path_times(network);
  const auto n = times.rows();
  Eigen::MatrixXd fares(n, n);
  for (Eigen::Index j = 0; j < n; ++j) {
    for (Eigen::Index d = 0; d < n; ++d) {
      if (std::isfinite(times(j, d))) {
        fares(j, d) = fare_for_time(times(j, d), schedule);
        continue;
      }
      if (destination(j, d) > 0.0) {
        std::ostringstream msg;
        msg << "destination " << network.node_id(static_cast<NodeIndex>(d)) << " unreachable from node "
            << network.node_id(static_cast<NodeIndex>(j)) << " but has positive demand";
        throw StructuralError(msg.str());
      }
      fares(j, d) = schedule.base;  // never realized: n(j,d) = 0
    }
  }
  return fares;
}

}  // namespace mter
