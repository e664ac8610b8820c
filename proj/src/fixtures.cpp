#include "mter/fixtures.hpp"

#include "mter/errors.hpp"

#include <random>
#include <set>

namespace mter::fixtures {

namespace {

Link make_link(std::int64_t id, NodeIndex tail, NodeIndex head, double fft, double capacity, double lambda = 0.0) {
  Link l;
  l.id = id;
  l.tail = tail;
  l.head = head;
  l.free_flow_time = fft;
  l.jam_capacity = capacity;
  l.length_km = fft * 40.0 * kKmPerMile;
  l.arrival_rate = lambda;
  return l;
}

}  // namespace

Model make_model(NetworkData data, Eigen::MatrixXd destination, const FareSchedule& fares, const SmdpParams& smdp) {
  Network network(std::move(data));
  Eigen::MatrixXd fare = compute_fares(network, destination, fares);
  DemandModel demand{std::move(destination), std::move(fare)};
  validate_demand(network, demand);
  return Model{std::move(network), std::move(demand), smdp};
}

Model shuttle_continuum(double arrival_rate) {
  NetworkData d;
  d.node_ids = {1, 2};
  d.pool_size = 1.0;
  d.links = {make_link(1, 0, 1, 1.0, 1.0), make_link(2, 0, 1, 1.0, 1.0), make_link(3, 1, 0, 1.0, 1.0, arrival_rate)};
  TravelTimeCurve parallel{[](double u) { return 1.0 / (1.0 - 2.0 * u); },
                           [](double u) { return 2.0 / ((1.0 - 2.0 * u) * (1.0 - 2.0 * u)); }};
  TravelTimeCurve back{[](double u) { return 1.0 / (1.0 - u); }, [](double u) { return 1.0 / ((1.0 - u) * (1.0 - u)); }};
  d.curves = {parallel, parallel, back};
  Eigen::MatrixXd n = Eigen::MatrixXd::Zero(2, 2);
  n(0, 1) = 1.0;
  return make_model(std::move(d), std::move(n));
}

MassDistribution shuttle_point(const Model& model, double u21, double hired_share) {
  if (!(u21 > 0.0 && u21 < 1.0)) throw DomainError("u21 must lie in (0, 1)");
  if (!(hired_share >= 0.0 && hired_share <= 1.0)) throw DomainError("hired_share must lie in [0, 1]");
  MassDistribution m = MassDistribution::zeros(model.network);
  const double u12 = (1.0 - u21) / 2.0;
  m.empty = {(1.0 - hired_share) * u12, (1.0 - hired_share) * u12, u21};
  const HiredLayout& h = model.network.hired();
  for (LinkIndex a : {LinkIndex{0}, LinkIndex{1}}) m.hired[static_cast<std::size_t>(h.at(a, 1))] = hired_share * u12;
  return m;
}

Model braess(bool with_bridge, double pool_size, double arrival_rate, bool base_fares) {
  NetworkData d;
  d.node_ids = {0, 1, 2, 3};
  d.pool_size = pool_size;
  d.links = {make_link(1, 0, 1, 0.009, 150.0), make_link(2, 1, 3, 0.012, 200.0), make_link(3, 0, 2, 0.012, 200.0),
             make_link(4, 2, 3, 0.009, 200.0), make_link(5, 3, 0, 0.012, 200.0, arrival_rate)};
  Eigen::MatrixXd n = Eigen::MatrixXd::Zero(4, 4);
  n(0, 3) = 1.0;
  const Eigen::MatrixXd fares5 = compute_fares(Network(d), n, FareSchedule{});
  if (with_bridge) d.links.push_back(make_link(6, 1, 2, 1e-4, 1e12));
  Network network(std::move(d));
  DemandModel demand{n, base_fares ? fares5 : compute_fares(network, n, FareSchedule{})};
  validate_demand(network, demand);
  return Model{std::move(network), std::move(demand), SmdpParams{}};
}

LinkIndex braess_bridge(const Model& model) {
  const auto a = model.network.find_link(1, 2);
  if (!a) throw StructuralError("network has no bridge link");
  return *a;
}

Model downtown_airport() {
  NetworkData d;
  d.node_ids = {1, 2, 3, 4, 5, 6, 7};
  d.pool_size = 18000.0;
  struct Pair {
    int a, b;
    double km, hours;
  };
  const Pair pairs[] = {{1, 2, 15, 0.3}, {1, 5, 15, 0.3}, {2, 3, 5, 0.1}, {2, 4, 5, 0.1},
                        {3, 4, 5, 0.1},  {5, 6, 5, 0.1},  {5, 7, 5, 0.1}, {6, 7, 5, 0.1}};
  const std::set<int> outer = {1, 5, 6, 7};
  std::int64_t id = 1;
  for (const Pair& p : pairs) {
    const double lambda = outer.count(p.a) && outer.count(p.b) ? 1000.0 : 5000.0;
    for (int dir = 0; dir < 2; ++dir) {
      const int tail = dir == 0 ? p.a : p.b;
      const int head = dir == 0 ? p.b : p.a;
      Link l = make_link(id++, tail - 1, head - 1, p.hours, 0.0, lambda);
      l.length_km = p.km;
      l.jam_capacity = 2.0 * p.km * 1000.0 / 6.0;
      d.links.push_back(l);
    }
  }
  Eigen::MatrixXd n = Eigen::MatrixXd::Zero(7, 7);
  n(0, 1) = 0.5, n(0, 4) = 0.5;
  n(1, 0) = 0.1, n(1, 2) = 0.9;
  n(2, 3) = 1.0;
  n(3, 1) = 1.0;
  n(4, 0) = 0.1, n(4, 5) = 0.9;
  n(5, 6) = 1.0;
  n(6, 4) = 1.0;
  // Every link runs at 50 km/h, so distance-based fares equal time-based fares at that speed.
  FareSchedule fares;
  fares.free_flow_speed_mph = 50.0 / kKmPerMile;
  return make_model(std::move(d), std::move(n), fares);
}

Model directed_cycle(const std::vector<double>& free_flow_times, double jam_capacity, double pool_size,
                     double arrival_rate) {
  const auto k = static_cast<NodeIndex>(free_flow_times.size());
  NetworkData d;
  d.pool_size = pool_size;
  for (NodeIndex i = 0; i < k; ++i) d.node_ids.push_back(i + 1);
  for (NodeIndex i = 0; i < k; ++i) {
    d.links.push_back(make_link(i + 1, i, (i + 1) % k, free_flow_times[static_cast<std::size_t>(i)], jam_capacity, arrival_rate));
  }
  Eigen::MatrixXd n = Eigen::MatrixXd::Zero(k, k);
  for (NodeIndex i = 0; i < k; ++i) {
    for (NodeIndex j = 0; j < k; ++j) {
      if (i != j) n(i, j) = 1.0 / (k - 1);
    }
  }
  return make_model(std::move(d), std::move(n));
}

Model two_cycle(double free_flow_time, double jam_capacity, double pool_size, double arrival_rate) {
  return directed_cycle({free_flow_time, free_flow_time}, jam_capacity, pool_size, arrival_rate);
}

Model random_instance(int nodes, std::uint64_t seed, double pool_size) {
  if (nodes < 2) throw ValidationError("random instance needs at least two nodes");
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> U(0.0, 1.0);
  NetworkData d;
  d.pool_size = pool_size;
  for (int i = 0; i < nodes; ++i) d.node_ids.push_back(i + 1);
  std::set<std::pair<int, int>> used;
  std::int64_t id = 1;
  auto add = [&](int a, int b) {
    if (a == b || !used.insert({a, b}).second) return;
    const double fft = 0.1 + 0.4 * U(rng);
    const double capacity = 50.0 + 150.0 * U(rng);
    const double lambda = 300.0 * U(rng);
    d.links.push_back(make_link(id++, a, b, fft, capacity, lambda));
  };
  for (int i = 0; i < nodes; ++i) {
    add(i, (i + 1) % nodes);
    add((i + 1) % nodes, i);
  }
  for (int c = 0; c < nodes / 2; ++c) {
    const int a = static_cast<int>(U(rng) * nodes);
    const int b = static_cast<int>(U(rng) * nodes);
    add(a, b);
  }

  Eigen::MatrixXd n = Eigen::MatrixXd::Zero(nodes, nodes);
  std::exponential_distribution<double> E(1.0);
  for (int i = 0; i < nodes; ++i) {
    double total = 0.0;
    for (int j = 0; j < nodes; ++j) {
      if (i != j) total += (n(i, j) = E(rng));
    }
    n.row(i) /= total;
  }
  return make_model(std::move(d), std::move(n));
}

}  // namespace mter::fixtures
