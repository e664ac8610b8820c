#include "mter/reference.hpp"

#include "mter/errors.hpp"

#include <Eigen/LU>

#include <cmath>
#include <map>

namespace mter::reference {

ChainSpec build_chain(const Policies& policies, const LinkEnvironment& env, const DemandModel& demand,
                      const Network& network) {
  const std::size_t N = network.num_nodes();
  const std::size_t L = network.num_links();
  const HiredLayout& layout = network.hired();
  ChainSpec chain;
  chain.num_links = L;
  chain.row_begin.push_back(0);

  auto push_row = [&](const std::map<std::size_t, double>& row, double holding) {
    if (!(holding > 0.0) || !std::isfinite(holding)) throw DomainError("travel time must be positive and finite");
    chain.holding.push_back(holding);
    for (const auto& [to, p] : row) {
      if (p > 0.0) {
        chain.target.push_back(static_cast<std::int32_t>(to));
        chain.prob.push_back(p);
      }
    }
    chain.row_begin.push_back(chain.target.size());
  };

  for (std::size_t a = 0; a < L; ++a) {
    const auto i = network.link(static_cast<LinkIndex>(a)).head;
    const auto ui = static_cast<std::size_t>(i);
    const double m = env.match[a];
    std::map<std::size_t, double> row;
    double stay = 1.0 - m;
    for (std::size_t d = 0; d < N; ++d) {
      const double n = demand.destination(static_cast<Eigen::Index>(ui), static_cast<Eigen::Index>(d));
      if (n == 0.0) continue;
      if (d == ui) {
        stay += m * n;
        continue;
      }
      stay += m * n * policies.reject[ui * N + d];
      for (LinkIndex b : network.outgoing(i)) {
        const auto k = static_cast<std::size_t>(layout.find(b, static_cast<NodeIndex>(d)));
        row[L + k] += m * n * policies.accept[ui * N + d] * policies.q[k];
      }
    }
    for (LinkIndex b : network.outgoing(i)) row[static_cast<std::size_t>(b)] += stay * policies.p[static_cast<std::size_t>(b)];
    push_row(row, env.time[a]);
  }
  for (std::size_t k = 0; k < layout.size(); ++k) {
    const LinkIndex a = layout.link_of(k);
    const NodeIndex d = layout.destination_of(k);
    const NodeIndex i = network.link(a).head;
    std::map<std::size_t, double> row;
    for (LinkIndex b : network.outgoing(i)) {
      if (i == d) {
        row[static_cast<std::size_t>(b)] += policies.p[static_cast<std::size_t>(b)];
      } else {
        const auto kb = static_cast<std::size_t>(layout.find(b, d));
        row[L + kb] += policies.q[kb];
      }
    }
    push_row(row, env.time[static_cast<std::size_t>(a)]);
  }
  return chain;
}

Eigen::MatrixXd jump_matrix(const ChainSpec& chain) {
  const auto S = static_cast<Eigen::Index>(chain.num_states());
  Eigen::MatrixXd P = Eigen::MatrixXd::Zero(S, S);
  for (std::size_t s = 0; s < chain.num_states(); ++s) {
    for (std::size_t e = chain.row_begin[s]; e < chain.row_begin[s + 1]; ++e) {
      P(static_cast<Eigen::Index>(s), chain.target[e]) += chain.prob[e];
    }
  }
  return P;
}

std::vector<double> stationary_dense(const ChainSpec& chain) {
  // Embedded-chain stationary vector nu (nu P = nu, sum nu = 1), then pi ~ nu * holding.
  const Eigen::MatrixXd P = jump_matrix(chain);
  const auto S = P.rows();
  Eigen::MatrixXd A = P.transpose() - Eigen::MatrixXd::Identity(S, S);
  A.row(S - 1).setOnes();
  Eigen::VectorXd b = Eigen::VectorXd::Zero(S);
  b(S - 1) = 1.0;
  const Eigen::VectorXd nu = A.fullPivLu().solve(b);
  std::vector<double> pi(static_cast<std::size_t>(S));
  double total = 0.0;
  for (Eigen::Index s = 0; s < S; ++s) total += pi[static_cast<std::size_t>(s)] = nu(s) * chain.holding[static_cast<std::size_t>(s)];
  for (double& v : pi) v /= total;
  return pi;
}

}  // namespace mter::reference
