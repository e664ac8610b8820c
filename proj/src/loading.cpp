#include "mter/loading.hpp"

#include "mter/errors.hpp"

#include <Eigen/Sparse>
#include <Eigen/SparseLU>

#include <algorithm>
#include <cmath>
#include <numeric>
#include <stdexcept>

namespace mter {

MassDistribution MassDistribution::zeros(const Network& network) {
  return {std::vector<double>(network.num_links(), 0.0), std::vector<double>(network.hired().size(), 0.0)};
}

double MassDistribution::total() const {
  return std::accumulate(empty.begin(), empty.end(), 0.0) + std::accumulate(hired.begin(), hired.end(), 0.0);
}

std::vector<double> MassDistribution::link_mass(const Network& network) const {
  std::vector<double> u = empty;
  const HiredLayout& layout = network.hired();
  for (std::size_t k = 0; k < hired.size(); ++k) u[static_cast<std::size_t>(layout.link_of(k))] += hired[k];
  return u;
}

namespace {

LinkState make_state(const MassDistribution& masses, const Network& network, bool free_flow) {
  const std::size_t L = network.num_links();
  if (masses.empty.size() != L || masses.hired.size() != network.hired().size()) {
    throw ValidationError("mass distribution does not match the network");
  }
  LinkState s;
  s.mass = masses.link_mass(network);
  s.time.resize(L);
  s.empty_flow.resize(L);
  s.hired_flow.assign(L, 0.0);
  s.match.resize(L);
  s.match_complement.resize(L);
  for (std::size_t a = 0; a < L; ++a) {
    const auto ai = static_cast<LinkIndex>(a);
    const double u = std::max(s.mass[a], 0.0);
    s.time[a] = free_flow ? network.free_flow_time(ai) : network.link_time(ai, u);
    s.empty_flow[a] = std::max(masses.empty[a], 0.0) / s.time[a];
    s.match[a] = matching_probability(network.link(ai), s.empty_flow[a]);
    s.match_complement[a] = matching_complement(network.link(ai), s.empty_flow[a]);
  }
  const HiredLayout& layout = network.hired();
  for (std::size_t k = 0; k < masses.hired.size(); ++k) {
    const auto a = static_cast<std::size_t>(layout.link_of(k));
    s.hired_flow[a] += masses.hired[k] / s.time[a];
  }
  return s;
}

// Probability that an empty vehicle arriving at node i through link a' stays
// empty: unmatched, or matched and rejecting.
std::vector<double> rejection_mass(const Policies& policies, const DemandModel& demand, std::size_t num_nodes) {
  std::vector<double> out(num_nodes, 0.0);
  for (std::size_t i = 0; i < num_nodes; ++i) {
    for (std::size_t d = 0; d < num_nodes; ++d) {
      const double n = demand.destination(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(d));
      if (n > 0.0) out[i] += n * policies.reject[i * num_nodes + d];
    }
  }
  return out;
}

void check_times(const LinkEnvironment& env) {
  for (double t : env.time) {
    if (!(t > 0.0) || !std::isfinite(t)) throw DomainError("travel time must be positive and finite");
  }
}

}  // namespace

LinkState masses_to_env(const MassDistribution& masses, const Network& network) {
  return make_state(masses, network, false);
}

LinkState masses_to_env_free_flow(const MassDistribution& masses, const Network& network) {
  return make_state(masses, network, true);
}

ChainSpec build_chain(const Policies& policies, const LinkEnvironment& env, const DemandModel& demand,
                      const Network& network) {
  check_times(env);
  const std::size_t N = network.num_nodes();
  const std::size_t L = network.num_links();
  const HiredLayout& layout = network.hired();
  const std::size_t S = L + layout.size();
  const std::vector<double> reject = rejection_mass(policies, demand, N);

  ChainSpec chain;
  chain.num_links = L;
  chain.holding.resize(S);

  // Upper bound on row length, then fill in parallel, then compact.
  std::vector<std::size_t> bound(S + 1, 0);
  std::vector<std::size_t> dest_count(N, 0);
  for (std::size_t i = 0; i < N; ++i) {
    for (std::size_t d = 0; d < N; ++d) {
      if (demand.destination(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(d)) > 0.0) ++dest_count[i];
    }
  }
  for (std::size_t s = 0; s < S; ++s) {
    const LinkIndex a = s < L ? static_cast<LinkIndex>(s) : layout.link_of(s - L);
    const NodeIndex i = network.link(a).head;
    const std::size_t deg = network.outgoing(i).size();
    bound[s + 1] = s < L ? deg * (1 + dest_count[static_cast<std::size_t>(i)]) : deg;
  }
  std::partial_sum(bound.begin(), bound.end(), bound.begin());
  std::vector<std::int32_t> target(bound[S]);
  std::vector<double> prob(bound[S]);
  std::vector<std::size_t> used(S, 0);

  const auto ns = static_cast<std::ptrdiff_t>(S);
#pragma omp parallel for schedule(dynamic, 256)
  for (std::ptrdiff_t ss = 0; ss < ns; ++ss) {
    const auto s = static_cast<std::size_t>(ss);
    std::size_t pos = bound[s];
    auto emit = [&](std::size_t to, double p) {
      if (p > 0.0) {
        target[pos] = static_cast<std::int32_t>(to);
        prob[pos] = p;
        ++pos;
      }
    };
    if (s < L) {
      const auto a1 = static_cast<LinkIndex>(s);
      const NodeIndex i = network.link(a1).head;
      const auto ui = static_cast<std::size_t>(i);
      chain.holding[s] = env.time[s];
      const double m = env.match[s];
      const double stay = env.match_complement[s] + m * reject[ui];
      for (LinkIndex a : network.outgoing(i)) emit(static_cast<std::size_t>(a), stay * policies.p[static_cast<std::size_t>(a)]);
      if (m > 0.0) {
        for (std::size_t d = 0; d < N; ++d) {
          const double n = demand.destination(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(d));
          if (n == 0.0 || d == ui) continue;
          const double hire = m * n * policies.accept[ui * N + d];
          for (LinkIndex a : network.outgoing(i)) {
            const auto k = static_cast<std::size_t>(layout.find(a, static_cast<NodeIndex>(d)));
            emit(L + k, hire * policies.q[k]);
          }
        }
      }
    } else {
      const std::size_t k1 = s - L;
      const LinkIndex a1 = layout.link_of(k1);
      const NodeIndex d = layout.destination_of(k1);
      const NodeIndex i = network.link(a1).head;
      chain.holding[s] = env.time[static_cast<std::size_t>(a1)];
      if (i == d) {
        for (LinkIndex a : network.outgoing(i)) emit(static_cast<std::size_t>(a), policies.p[static_cast<std::size_t>(a)]);
      } else {
        for (LinkIndex a : network.outgoing(i)) {
          const auto k = static_cast<std::size_t>(layout.find(a, d));
          emit(L + k, policies.q[k]);
        }
      }
    }
    used[s] = pos - bound[s];
  }

  chain.row_begin.assign(S + 1, 0);
  for (std::size_t s = 0; s < S; ++s) chain.row_begin[s + 1] = chain.row_begin[s] + used[s];
  chain.target.resize(chain.row_begin[S]);
  chain.prob.resize(chain.row_begin[S]);
  for (std::size_t s = 0; s < S; ++s) {
    std::copy_n(target.begin() + static_cast<std::ptrdiff_t>(bound[s]), used[s],
                chain.target.begin() + static_cast<std::ptrdiff_t>(chain.row_begin[s]));
    std::copy_n(prob.begin() + static_cast<std::ptrdiff_t>(bound[s]), used[s],
                chain.prob.begin() + static_cast<std::ptrdiff_t>(chain.row_begin[s]));
  }
  return chain;
}

std::vector<std::uint8_t> structurally_transient(const LinkEnvironment& env, const DemandModel& demand,
                                                 const Network& network) {
  const std::size_t N = network.num_nodes();
  const std::size_t L = network.num_links();
  const HiredLayout& layout = network.hired();
  std::vector<std::uint8_t> transient(L + layout.size(), 0);

  // Matching mass arriving at each node, and matched demand per destination.
  std::vector<double> node_match(N, 0.0);
  for (std::size_t a = 0; a < L; ++a) node_match[static_cast<std::size_t>(network.link(static_cast<LinkIndex>(a)).head)] += env.match[a];
  std::vector<double> dest_match(N, 0.0);
  std::size_t matching_nodes = 0;
  NodeIndex only_node = -1;
  for (std::size_t i = 0; i < N; ++i) {
    if (node_match[i] <= 0.0) continue;
    ++matching_nodes;
    only_node = static_cast<NodeIndex>(i);
    for (std::size_t d = 0; d < N; ++d) {
      dest_match[d] += node_match[i] * demand.destination(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(d));
    }
  }
  for (std::size_t k = 0; k < layout.size(); ++k) {
    const NodeIndex d = layout.destination_of(k);
    const bool none = matching_nodes == 0;
    const bool single = matching_nodes == 1 && d == only_node;
    const bool no_demand = dest_match[static_cast<std::size_t>(d)] <= 0.0;
    if (none || single || no_demand) transient[L + k] = 1;
  }
  return transient;
}

namespace {

// Iterative Tarjan; returns component id per state and the component count.
std::vector<std::int32_t> strongly_connected(const ChainSpec& chain, std::int32_t& count) {
  const std::size_t S = chain.num_states();
  std::vector<std::int32_t> index(S, -1), low(S, 0), comp(S, -1);
  std::vector<std::uint8_t> on_stack(S, 0);
  std::vector<std::int32_t> stack;
  std::vector<std::pair<std::int32_t, std::size_t>> call;
  std::int32_t next = 0;
  count = 0;
  for (std::size_t root = 0; root < S; ++root) {
    if (index[root] >= 0) continue;
    call.emplace_back(static_cast<std::int32_t>(root), chain.row_begin[root]);
    index[root] = low[root] = next++;
    stack.push_back(static_cast<std::int32_t>(root));
    on_stack[root] = 1;
    while (!call.empty()) {
      auto& [v, pos] = call.back();
      const auto uv = static_cast<std::size_t>(v);
      if (pos < chain.row_begin[uv + 1]) {
        const auto w = static_cast<std::size_t>(chain.target[pos++]);
        if (index[w] < 0) {
          index[w] = low[w] = next++;
          stack.push_back(static_cast<std::int32_t>(w));
          on_stack[w] = 1;
          call.emplace_back(static_cast<std::int32_t>(w), chain.row_begin[w]);
        } else if (on_stack[w]) {
          low[uv] = std::min(low[uv], index[w]);
        }
        continue;
      }
      if (low[uv] == index[uv]) {
        std::int32_t w;
        do {
          w = stack.back();
          stack.pop_back();
          on_stack[static_cast<std::size_t>(w)] = 0;
          comp[static_cast<std::size_t>(w)] = count;
        } while (w != v);
        ++count;
      }
      const std::int32_t done = v;
      call.pop_back();
      if (!call.empty()) {
        const auto parent = static_cast<std::size_t>(call.back().first);
        low[parent] = std::min(low[parent], low[static_cast<std::size_t>(done)]);
      }
    }
  }
  return comp;
}

}  // namespace

void prune_transient(ChainSpec& chain, const LinkEnvironment& env, const DemandModel& demand,
                     const Network& network) {
  const std::size_t S = chain.num_states();
  const auto rule = structurally_transient(env, demand, network);

  std::int32_t count = 0;
  const auto comp = strongly_connected(chain, count);
  std::vector<std::uint8_t> closed(static_cast<std::size_t>(count), 1);
  for (std::size_t s = 0; s < S; ++s) {
    for (std::size_t e = chain.row_begin[s]; e < chain.row_begin[s + 1]; ++e) {
      if (comp[static_cast<std::size_t>(chain.target[e])] != comp[s]) closed[static_cast<std::size_t>(comp[s])] = 0;
    }
  }
  const auto closed_count = std::count(closed.begin(), closed.end(), std::uint8_t{1});
  if (closed_count == 0) throw StructuralError("chain has no closed communicating class");
  if (closed_count > 1) {
    throw NumericalError("chain has " + std::to_string(closed_count) + " closed classes; stationary masses are not unique",
                         static_cast<double>(closed_count));
  }
  chain.recurrent.assign(S, 0);
  for (std::size_t s = 0; s < S; ++s) {
    chain.recurrent[s] = closed[static_cast<std::size_t>(comp[s])];
    if (chain.recurrent[s] && rule[s]) {
      throw std::logic_error("state marked transient by a structural rule lies in the recurrent class");
    }
  }
}

double generator_residual(const ChainSpec& chain, const std::vector<double>& pi) {
  const std::size_t S = chain.num_states();
  std::vector<double> r(S, 0.0);
  for (std::size_t s = 0; s < S; ++s) {
    const double out = pi[s] / chain.holding[s];
    r[s] -= out;
    for (std::size_t e = chain.row_begin[s]; e < chain.row_begin[s + 1]; ++e) r[static_cast<std::size_t>(chain.target[e])] += out * chain.prob[e];
  }
  double m = 0.0;
  for (double v : r) m = std::max(m, std::abs(v));
  return m;
}

double balance_residual(const ChainSpec& chain, const std::vector<double>& state_mass) {
  return generator_residual(chain, state_mass);
}

namespace {

double max_rate(const ChainSpec& chain) {
  double m = 0.0;
  for (double t : chain.holding) m = std::max(m, 1.0 / t);
  return m;
}

}  // namespace

std::vector<double> stationary_direct(const ChainSpec& chain, StationaryDiagnostics* diag) {
  const std::size_t S = chain.num_states();
  if (chain.recurrent.size() != S) throw std::logic_error("stationary_direct: chain not pruned");
  std::vector<std::int32_t> local(S, -1);
  std::vector<std::size_t> global;
  for (std::size_t s = 0; s < S; ++s) {
    if (chain.recurrent[s]) {
      local[s] = static_cast<std::int32_t>(global.size());
      global.push_back(s);
    }
  }
  const auto n = static_cast<Eigen::Index>(global.size());
  const Eigen::Index last = n - 1;

  // Transposed generator on the recurrent class, last balance row replaced by sum(pi) = 1.
  std::vector<Eigen::Triplet<double>> trip;
  trip.reserve(chain.target.size() + 2 * global.size());
  for (Eigen::Index c = 0; c < n; ++c) {
    const std::size_t s = global[static_cast<std::size_t>(c)];
    const double out = 1.0 / chain.holding[s];
    if (c != last) trip.emplace_back(c, c, -out);
    for (std::size_t e = chain.row_begin[s]; e < chain.row_begin[s + 1]; ++e) {
      const Eigen::Index r = local[static_cast<std::size_t>(chain.target[e])];
      if (r != last) trip.emplace_back(r, c, out * chain.prob[e]);
    }
    trip.emplace_back(last, c, 1.0);
  }
  Eigen::SparseMatrix<double> A(n, n);
  A.setFromTriplets(trip.begin(), trip.end());
  A.makeCompressed();
  Eigen::SparseLU<Eigen::SparseMatrix<double>, Eigen::COLAMDOrdering<int>> lu;
  lu.compute(A);
  if (lu.info() != Eigen::Success) throw NumericalError("sparse LU of the generator failed: " + lu.lastErrorMessage(), 0.0);
  Eigen::VectorXd b = Eigen::VectorXd::Zero(n);
  b(last) = 1.0;
  Eigen::VectorXd x = lu.solve(b);
  // One step of iterative refinement.
  const Eigen::VectorXd r = b - A * x;
  x += lu.solve(r);

  std::vector<double> pi(S, 0.0);
  for (Eigen::Index c = 0; c < n; ++c) pi[global[static_cast<std::size_t>(c)]] = std::max(x(c), 0.0);
  const double total = std::accumulate(pi.begin(), pi.end(), 0.0);
  for (double& v : pi) v /= total;

  const double res = generator_residual(chain, pi);
  if (diag) {
    diag->generator_residual = res;
    diag->iterations = 0;
  }
  if (!std::isfinite(res) || res > 1e-10 * std::max(1.0, max_rate(chain))) {
    throw NumericalError("stationary solve residual too large", res);
  }
  return pi;
}

std::vector<double> stationary_power(const ChainSpec& chain, double tolerance, long max_iterations,
                                     StationaryDiagnostics* diag) {
  const std::size_t S = chain.num_states();
  const double uniform_rate = 1.05 * max_rate(chain);
  std::vector<double> pi(S, 1.0 / static_cast<double>(S)), next(S);
  long it = 0;
  double change = 1.0;
  while (it < max_iterations) {
    std::fill(next.begin(), next.end(), 0.0);
    for (std::size_t s = 0; s < S; ++s) {
      const double leave = pi[s] / (chain.holding[s] * uniform_rate);
      next[s] += pi[s] - leave;
      for (std::size_t e = chain.row_begin[s]; e < chain.row_begin[s + 1]; ++e) {
        next[static_cast<std::size_t>(chain.target[e])] += leave * chain.prob[e];
      }
    }
    const double total = std::accumulate(next.begin(), next.end(), 0.0);
    change = 0.0;
    for (std::size_t s = 0; s < S; ++s) {
      next[s] /= total;
      change += std::abs(next[s] - pi[s]);
    }
    std::swap(pi, next);
    ++it;
    if (change <= tolerance) break;
  }
  if (diag) {
    diag->iterations = it;
    diag->generator_residual = generator_residual(chain, pi);
  }
  if (change > tolerance) throw ConvergenceError("power iteration did not converge", change, it);
  return pi;
}

std::vector<double> to_state_vector(const MassDistribution& masses) {
  std::vector<double> v = masses.empty;
  v.insert(v.end(), masses.hired.begin(), masses.hired.end());
  return v;
}

MassDistribution from_state_vector(const std::vector<double>& v, std::size_t num_links) {
  MassDistribution m;
  m.empty.assign(v.begin(), v.begin() + static_cast<std::ptrdiff_t>(num_links));
  m.hired.assign(v.begin() + static_cast<std::ptrdiff_t>(num_links), v.end());
  return m;
}

LoadingResult load_network(const Policies& policies, const LinkEnvironment& env, const DemandModel& demand,
                           const Network& network, double total_mass, const LoadingOptions& options) {
  LoadingMethod method = options.method;
  if (method == LoadingMethod::automatic) {
    method = network.num_states() <= options.direct_state_limit ? LoadingMethod::direct : LoadingMethod::blocked;
  }
  if (method == LoadingMethod::blocked) return load_network_blocked(policies, env, demand, network, total_mass);

  ChainSpec chain = build_chain(policies, env, demand, network);
  LoadingResult result;
  result.method_used = method;
  std::vector<double> pi;
  if (method == LoadingMethod::direct) {
    prune_transient(chain, env, demand, network);
    pi = stationary_direct(chain, &result.diagnostics);
  } else {
    pi = stationary_power(chain, 1e-14, 50'000'000, &result.diagnostics);
  }
  for (double& v : pi) v *= total_mass;
  result.masses = from_state_vector(pi, network.num_links());
  return result;
}

LoadingResult load_network_blocked(const Policies& policies, const LinkEnvironment& env, const DemandModel& demand,
                                   const Network& network, double total_mass) {
  check_times(env);
  const std::size_t N = network.num_nodes();
  const std::size_t L = network.num_links();
  const HiredLayout& layout = network.hired();
  const std::vector<double> reject = rejection_mass(policies, demand, N);
  const auto nn = static_cast<std::ptrdiff_t>(N);

  // Pickup coefficient for an empty vehicle on a' (head i) toward d: m' n ξ.
  auto pickup = [&](std::size_t a1, std::size_t i, std::size_t d) {
    return env.match[a1] * demand.destination(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(d)) *
           policies.accept[i * N + d];
  };
  // Destinations that can receive a hired vehicle at all.
  std::vector<std::uint8_t> active(N, 0);
  for (std::size_t a = 0; a < L; ++a) {
    if (env.match[a] <= 0.0) continue;
    const auto i = static_cast<std::size_t>(network.link(static_cast<LinkIndex>(a)).head);
    for (std::size_t d = 0; d < N; ++d) {
      if (d != i && pickup(a, i, d) > 0.0) active[d] = 1;
    }
  }

  // I - P_dd on destination d's hired block (local indices), transposed on request.
  auto block_matrix = [&](NodeIndex d, bool transpose) {
    const std::size_t begin = layout.block_begin(d);
    const auto n = static_cast<Eigen::Index>(layout.block_end(d) - begin);
    std::vector<Eigen::Triplet<double>> trip;
    for (Eigen::Index r = 0; r < n; ++r) {
      trip.emplace_back(r, r, 1.0);
      const LinkIndex a1 = layout.link_of(begin + static_cast<std::size_t>(r));
      const NodeIndex i = network.link(a1).head;
      if (i == d) continue;
      for (LinkIndex a : network.outgoing(i)) {
        const auto k = static_cast<std::size_t>(layout.find(a, d));
        const auto c = static_cast<Eigen::Index>(k - begin);
        if (transpose) trip.emplace_back(c, r, -policies.q[k]);
        else trip.emplace_back(r, c, -policies.q[k]);
      }
    }
    Eigen::SparseMatrix<double> B(n, n);
    B.setFromTriplets(trip.begin(), trip.end());
    B.makeCompressed();
    return B;
  };

  // Censored chain on empty links: S = P_EE + sum_d G_d (I - P_dd)^{-1} R_d.
  Eigen::MatrixXd S = Eigen::MatrixXd::Zero(static_cast<Eigen::Index>(L), static_cast<Eigen::Index>(L));
  for (std::size_t a1 = 0; a1 < L; ++a1) {
    const NodeIndex i = network.link(static_cast<LinkIndex>(a1)).head;
    const double stay = env.match_complement[a1] + env.match[a1] * reject[static_cast<std::size_t>(i)];
    for (LinkIndex a : network.outgoing(i)) S(static_cast<Eigen::Index>(a1), a) += stay * policies.p[static_cast<std::size_t>(a)];
  }
  bool failed = false;
#pragma omp parallel
  {
    Eigen::MatrixXd local_S = Eigen::MatrixXd::Zero(S.rows(), S.cols());
#pragma omp for schedule(dynamic)
    for (std::ptrdiff_t dd = 0; dd < nn; ++dd) {
      const auto d = static_cast<NodeIndex>(dd);
      if (!active[static_cast<std::size_t>(dd)]) continue;
      const std::size_t begin = layout.block_begin(d);
      const auto n = static_cast<Eigen::Index>(layout.block_end(d) - begin);
      const auto exits = network.outgoing(d);
      Eigen::SparseLU<Eigen::SparseMatrix<double>, Eigen::COLAMDOrdering<int>> lu(block_matrix(d, false));
      if (lu.info() != Eigen::Success) {
#pragma omp atomic write
        failed = true;
        continue;
      }
      Eigen::MatrixXd R = Eigen::MatrixXd::Zero(n, static_cast<Eigen::Index>(exits.size()));
      for (Eigen::Index r = 0; r < n; ++r) {
        if (network.link(layout.link_of(begin + static_cast<std::size_t>(r))).head != d) continue;
        for (std::size_t j = 0; j < exits.size(); ++j) R(r, static_cast<Eigen::Index>(j)) = policies.p[static_cast<std::size_t>(exits[j])];
      }
      const Eigen::MatrixXd Y = lu.solve(R);
      Eigen::VectorXd v(static_cast<Eigen::Index>(exits.size()));
      for (std::size_t i = 0; i < N; ++i) {
        if (static_cast<NodeIndex>(i) == d) continue;
        v.setZero();
        for (LinkIndex a : network.outgoing(static_cast<NodeIndex>(i))) {
          const auto k = static_cast<std::size_t>(layout.find(a, d));
          v += policies.q[k] * Y.row(static_cast<Eigen::Index>(k - begin)).transpose();
        }
        for (LinkIndex a1 : network.incoming(static_cast<NodeIndex>(i))) {
          const double c = pickup(static_cast<std::size_t>(a1), i, static_cast<std::size_t>(d));
          if (c == 0.0) continue;
          for (std::size_t j = 0; j < exits.size(); ++j) local_S(a1, exits[j]) += c * v(static_cast<Eigen::Index>(j));
        }
      }
    }
#pragma omp critical
    S += local_S;
  }
  if (failed) throw NumericalError("hired-block factorization failed", 0.0);

  const auto Le = static_cast<Eigen::Index>(L);
  Eigen::MatrixXd A = (Eigen::MatrixXd::Identity(Le, Le) - S).transpose();
  A.row(Le - 1).setOnes();
  Eigen::VectorXd b = Eigen::VectorXd::Zero(Le);
  b(Le - 1) = 1.0;
  const Eigen::PartialPivLU<Eigen::MatrixXd> dense_lu(A);
  Eigen::VectorXd phi = dense_lu.solve(b);
  phi += dense_lu.solve(b - A * phi);
  for (Eigen::Index a = 0; a < Le; ++a) phi(a) = std::max(phi(a), 0.0);

  // Hired exit flows per destination from the empty flows.
  std::vector<double> hired_flow(layout.size(), 0.0);
#pragma omp parallel for schedule(dynamic)
  for (std::ptrdiff_t dd = 0; dd < nn; ++dd) {
    const auto d = static_cast<NodeIndex>(dd);
    if (!active[static_cast<std::size_t>(dd)]) continue;
    const std::size_t begin = layout.block_begin(d);
    const auto n = static_cast<Eigen::Index>(layout.block_end(d) - begin);
    Eigen::VectorXd rhs = Eigen::VectorXd::Zero(n);
    for (std::size_t i = 0; i < N; ++i) {
      if (static_cast<NodeIndex>(i) == d) continue;
      double in = 0.0;
      for (LinkIndex a1 : network.incoming(static_cast<NodeIndex>(i))) {
        in += phi(a1) * pickup(static_cast<std::size_t>(a1), i, static_cast<std::size_t>(d));
      }
      if (in == 0.0) continue;
      for (LinkIndex a : network.outgoing(static_cast<NodeIndex>(i))) {
        const auto k = static_cast<std::size_t>(layout.find(a, d));
        rhs(static_cast<Eigen::Index>(k - begin)) += in * policies.q[k];
      }
    }
    Eigen::SparseLU<Eigen::SparseMatrix<double>, Eigen::COLAMDOrdering<int>> lu(block_matrix(d, true));
    const Eigen::VectorXd h = lu.solve(rhs);
    for (Eigen::Index r = 0; r < n; ++r) hired_flow[begin + static_cast<std::size_t>(r)] = std::max(h(r), 0.0);
  }

  LoadingResult result;
  result.method_used = LoadingMethod::blocked;
  MassDistribution& m = result.masses;
  m.empty.resize(L);
  m.hired.resize(layout.size());
  for (std::size_t a = 0; a < L; ++a) m.empty[a] = phi(static_cast<Eigen::Index>(a)) * env.time[a];
  for (std::size_t k = 0; k < layout.size(); ++k) m.hired[k] = hired_flow[k] * env.time[static_cast<std::size_t>(layout.link_of(k))];
  const double scale = total_mass / m.total();
  for (double& v : m.empty) v *= scale;
  for (double& v : m.hired) v *= scale;

  const double res = flow_balance_residual(m, policies, env, demand, network);
  result.diagnostics.generator_residual = res / total_mass;
  if (!std::isfinite(res) || res > 1e-8 * total_mass * std::max(1.0, 1.0 / *std::min_element(env.time.begin(), env.time.end()))) {
    throw NumericalError("blocked loading residual too large", res);
  }
  return result;
}

double flow_balance_residual(const MassDistribution& masses, const Policies& policies, const LinkEnvironment& env,
                             const DemandModel& demand, const Network& network) {
  const std::size_t N = network.num_nodes();
  const std::size_t L = network.num_links();
  const HiredLayout& layout = network.hired();
  const std::vector<double> reject = rejection_mass(policies, demand, N);
  std::vector<double> f(L), h(layout.size());
  for (std::size_t a = 0; a < L; ++a) f[a] = masses.empty[a] / env.time[a];
  for (std::size_t k = 0; k < layout.size(); ++k) h[k] = masses.hired[k] / env.time[static_cast<std::size_t>(layout.link_of(k))];

  double worst = 0.0;
  const auto nn = static_cast<std::ptrdiff_t>(N);
#pragma omp parallel for reduction(max : worst) schedule(dynamic)
  for (std::ptrdiff_t ii = 0; ii < nn; ++ii) {
    const auto i = static_cast<NodeIndex>(ii);
    const auto ui = static_cast<std::size_t>(ii);
    // Empty arrivals staying empty plus drop-offs at i.
    double to_empty = 0.0;
    for (LinkIndex a1 : network.incoming(i)) {
      const auto u1 = static_cast<std::size_t>(a1);
      to_empty += f[u1] * (env.match_complement[u1] + env.match[u1] * reject[ui]);
      const auto k = layout.find(a1, i);
      if (k >= 0) to_empty += h[static_cast<std::size_t>(k)];
    }
    for (LinkIndex a : network.outgoing(i)) {
      worst = std::max(worst, std::abs(to_empty * policies.p[static_cast<std::size_t>(a)] - f[static_cast<std::size_t>(a)]));
    }
    for (std::size_t d = 0; d < N; ++d) {
      if (d == ui) continue;
      double to_hired = 0.0;
      const double n = demand.destination(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(d));
      for (LinkIndex a1 : network.incoming(i)) {
        const auto u1 = static_cast<std::size_t>(a1);
        if (n > 0.0) to_hired += f[u1] * env.match[u1] * n * policies.accept[ui * N + d];
        const auto k = layout.find(a1, static_cast<NodeIndex>(d));
        if (k >= 0) to_hired += h[static_cast<std::size_t>(k)];
      }
      for (LinkIndex a : network.outgoing(i)) {
        const auto k = static_cast<std::size_t>(layout.find(a, static_cast<NodeIndex>(d)));
        worst = std::max(worst, std::abs(to_hired * policies.q[k] - h[k]));
      }
    }
  }
  return worst;
}

}  // namespace mter
