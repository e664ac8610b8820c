#include "mter/microsim.hpp"

#include "mter/equilibrium.hpp"
#include "mter/errors.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <random>
#include <sstream>

namespace mter {

void validate(const SimConfig& config) {
  if (!(config.warmup >= 0.0) || !(config.horizon > config.warmup)) throw ValidationError("need horizon > warmup >= 0");
  if (config.vehicles < 1) throw ValidationError("need at least one vehicle");
}

std::uint64_t vehicle_seed(std::uint64_t root, int vehicle) {
  return derive_seed(root, static_cast<std::uint64_t>(vehicle) + 1);
}

namespace {

// Index drawn from weights w(0..n-1) summing to ~1.
template <typename Weight>
std::size_t draw(std::size_t n, double u, Weight&& w) {
  double acc = 0.0;
  for (std::size_t k = 0; k + 1 < n; ++k) {
    acc += w(k);
    if (u < acc) return k;
  }
  return n - 1;
}

}  // namespace

std::vector<double> simulate_vehicle(const SimInputs& in, const SimConfig& config, int vehicle, long* events,
                                     std::ostream* trajectory) {
  const Network& net = in.network;
  const std::size_t N = net.num_nodes();
  const std::size_t L = net.num_links();
  const HiredLayout& layout = net.hired();
  std::mt19937_64 rng(vehicle_seed(config.seed, vehicle));
  std::uniform_real_distribution<double> unif(0.0, 1.0);

  std::vector<double> occupancy(L + layout.size(), 0.0);
  LinkIndex link = static_cast<LinkIndex>(std::min<std::size_t>(static_cast<std::size_t>(unif(rng) * static_cast<double>(L)), L - 1));
  NodeIndex dest = -1;  // -1 while empty
  double clock = 0.0;
  long count = 0;

  auto choose_empty = [&](NodeIndex i) {
    const auto out = net.outgoing(i);
    return out[draw(out.size(), unif(rng), [&](std::size_t k) { return in.policies.p[static_cast<std::size_t>(out[k])]; })];
  };
  auto choose_hired = [&](NodeIndex i, NodeIndex d) {
    const auto out = net.outgoing(i);
    return out[draw(out.size(), unif(rng), [&](std::size_t k) {
      return in.policies.q[static_cast<std::size_t>(layout.find(out[k], d))];
    })];
  };

  while (clock < config.horizon) {
    const double t = in.env.time[static_cast<std::size_t>(link)];
    const std::size_t state = dest < 0 ? static_cast<std::size_t>(link) : L + static_cast<std::size_t>(layout.find(link, dest));
    if (trajectory) {
      *trajectory << clock << ',' << vehicle << ',' << net.link(link).id << ',' << (dest < 0 ? "empty" : "hired") << ','
                  << (dest < 0 ? std::string() : std::to_string(net.node_id(dest))) << '\n';
    }
    const double lo = std::max(clock, config.warmup);
    const double hi = std::min(clock + t, config.horizon);
    if (hi > lo) occupancy[state] += hi - lo;
    clock += t;
    ++count;

    const NodeIndex i = net.link(link).head;
    if (dest >= 0) {
      if (i == dest) {
        dest = -1;
        link = choose_empty(i);
      } else {
        link = choose_hired(i, dest);
      }
      continue;
    }
    const double m = in.env.match[static_cast<std::size_t>(link)];
    if (m > 0.0 && unif(rng) < m) {
      const auto row = static_cast<Eigen::Index>(i);
      const auto d = static_cast<NodeIndex>(
          draw(N, unif(rng), [&](std::size_t k) { return in.demand.destination(row, static_cast<Eigen::Index>(k)); }));
      if (d != i && unif(rng) < in.policies.accept[static_cast<std::size_t>(i) * N + static_cast<std::size_t>(d)]) {
        dest = d;
        link = choose_hired(i, d);
        continue;
      }
    }
    link = choose_empty(i);
  }

  const double window = config.horizon - config.warmup;
  for (double& v : occupancy) v /= window;
  if (events) *events = count;
  return occupancy;
}

SimResult summarize_vehicles(const std::vector<std::vector<double>>& fractions, std::size_t num_links,
                             double total_mass) {
  const std::size_t S = fractions.front().size();
  const double V = static_cast<double>(fractions.size());
  std::vector<double> mean(S, 0.0), se(S, 0.0);
  SimResult r;
  for (const auto& f : fractions) {
    double sum = 0.0;
    for (std::size_t s = 0; s < S; ++s) {
      mean[s] += f[s];
      sum += f[s];
    }
    r.max_fraction_sum_error = std::max(r.max_fraction_sum_error, std::abs(sum - 1.0));
  }
  for (double& v : mean) v /= V;
  for (const auto& f : fractions) {
    for (std::size_t s = 0; s < S; ++s) se[s] += (f[s] - mean[s]) * (f[s] - mean[s]);
  }
  for (std::size_t s = 0; s < S; ++s) {
    se[s] = fractions.size() > 1 ? std::sqrt(se[s] / (V - 1.0) / V) : 0.0;
    mean[s] *= total_mass;
    se[s] *= total_mass;
  }
  r.mean = from_state_vector(mean, num_links);
  r.standard_error = from_state_vector(se, num_links);
  return r;
}

SimResult simulate(const SimInputs& inputs, const SimConfig& config) {
  validate(config);
  const int V = config.vehicles;
  std::vector<std::vector<double>> fractions(static_cast<std::size_t>(V));
  std::vector<long> events(static_cast<std::size_t>(V), 0);
  std::vector<std::string> dumps(static_cast<std::size_t>(config.trajectory ? std::min(V, config.trajectory_vehicles) : 0));

#pragma omp parallel for schedule(dynamic, 4)
  for (int v = 0; v < V; ++v) {
    std::ostringstream os;
    const bool dump = static_cast<std::size_t>(v) < dumps.size();
    if (dump) os.precision(17);
    fractions[static_cast<std::size_t>(v)] =
        simulate_vehicle(inputs, config, v, &events[static_cast<std::size_t>(v)], dump ? &os : nullptr);
    if (dump) dumps[static_cast<std::size_t>(v)] = os.str();
  }

  const double M = config.total_mass > 0.0 ? config.total_mass : inputs.network.pool_size();
  SimResult r = summarize_vehicles(fractions, inputs.network.num_links(), M);
  for (long e : events) r.events += e;
  if (config.trajectory) {
    std::ofstream out(*config.trajectory);
    if (!out) throw ValidationError("cannot write trajectory file " + config.trajectory->string());
    out << "time,vehicle,link,status,destination\n";
    for (const auto& d : dumps) out << d;
  }
  return r;
}

}  // namespace mter
