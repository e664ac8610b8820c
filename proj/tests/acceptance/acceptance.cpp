#include "mter/config.hpp"
#include "mter/errors.hpp"
#include "mter/fixtures.hpp"
#include "mter/reference.hpp"

#include <CLI11.hpp>

#include <chrono>
#include <cmath>
#include <filesystem>
#include <functional>
#include <iomanip>
#include <iostream>
#include <numeric>
#include <random>
#include <sstream>

using namespace mter;
namespace fs = std::filesystem;

namespace {

struct Outcome {
  bool pass = false;
  std::string detail;
};

struct Criterion {
  int id;
  std::string name;
  std::function<Outcome()> run;
};

fs::path source_dir() { return MTER_SOURCE_DIR; }
fs::path data_dir() { return MTER_DATA_DIR; }

std::string fmt(double v, int digits = 6) {
  std::ostringstream s;
  s << std::setprecision(digits) << v;
  return s.str();
}

double seconds_since(std::chrono::steady_clock::time_point t0) {
  return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
}

Scenario sioux_falls(const std::string& file = "siouxfalls.cfg") {
  return load_scenario(RunConfig::from_file(source_dir() / "configs" / file));
}

EquilibriumResult solve(const Model& model, const SolverConfig& c) {
  return c.starts > 1 ? multi_start(model, c).best : solve_equilibrium(model, c);
}

double max_abs_diff(const std::vector<double>& a, const std::vector<double>& b) {
  double d = 0.0;
  for (std::size_t k = 0; k < a.size(); ++k) d = std::max(d, std::abs(a[k] - b[k]));
  return d;
}

LinkEnvironment random_env(const Network& net, std::mt19937_64& rng) {
  std::uniform_real_distribution<double> U(0.0, 1.0);
  LinkEnvironment env;
  for (std::size_t a = 0; a < net.num_links(); ++a) {
    env.time.push_back(net.free_flow_time(static_cast<LinkIndex>(a)) * (1.0 + 2.0 * U(rng)));
    const double m = U(rng) < 0.2 ? 0.0 : 0.95 * U(rng);
    env.match.push_back(m);
    env.match_complement.push_back(1.0 - m);
  }
  return env;
}

ValueFunctions random_values(const Network& net, std::mt19937_64& rng) {
  std::uniform_real_distribution<double> U(-100.0, 100.0);
  ValueFunctions v = ValueFunctions::zeros(net);
  for (double& x : v.z) x = U(rng);
  for (double& x : v.w) x = U(rng);
  return v;
}

Outcome bellman_contraction() {
  const Scenario s = sioux_falls();
  const Model& m = s.model;
  std::mt19937_64 rng(1);
  const LinkEnvironment env = random_env(m.network, rng);
  const double t_min = *std::min_element(env.time.begin(), env.time.end());
  const double modulus = std::exp(-m.smdp.discount_rate * t_min);
  double worst = 0.0;
  int violations = 0;
  for (int k = 0; k < 100; ++k) {
    const ValueFunctions v = random_values(m.network, rng), w = random_values(m.network, rng);
    const ValueFunctions Lv = bellman_apply(v, env, m.smdp, m.network, m.demand);
    const ValueFunctions Lw = bellman_apply(w, env, m.smdp, m.network, m.demand);
    const double before = std::max(max_abs_diff(v.z, w.z), max_abs_diff(v.w, w.w));
    const double after = std::max(max_abs_diff(Lv.z, Lw.z), max_abs_diff(Lv.w, Lw.w));
    worst = std::max(worst, after / before);
    if (after > modulus * before * (1.0 + 1e-12)) ++violations;
  }
  return {violations == 0, "100 pairs, worst ratio " + fmt(worst) + " vs exp(-beta t_min) = " + fmt(modulus) + ", " +
                               std::to_string(violations) + " violations"};
}

double fd(const std::function<double(double)>& g, double x) {
  const double h = 1e-6;
  return (g(x + h) - g(x - h)) / (2.0 * h);
}

Outcome wdz_derivatives() {
  const Scenario s = sioux_falls();
  const Model& m = s.model;
  const Network& net = m.network;
  std::mt19937_64 rng(2);
  const LinkEnvironment env = random_env(net, rng);
  const ValueFunctions v = solve_values(env, m.smdp, net, m.demand).values;
  const Policies pol = choice_probabilities(v, m.smdp, net, m.demand);
  const std::size_t N = net.num_nodes();
  double worst_fd = 0.0, worst_sum = 0.0;
  long checked = 0;
  auto check_block = [&](const std::vector<double>& vals, const std::vector<double>& probs, double scale) {
    double sum = 0.0;
    for (std::size_t k = 0; k < vals.size(); ++k) {
      auto g = [&](double x) {
        auto c = vals;
        c[k] = x;
        return social_surplus(c, scale);
      };
      worst_fd = std::max(worst_fd, std::abs(fd(g, vals[k]) - probs[k]));
      sum += probs[k];
      ++checked;
    }
    worst_sum = std::max(worst_sum, std::abs(sum - 1.0));
  };
  for (std::size_t i = 0; i < N; ++i) {
    const auto out = net.outgoing(static_cast<NodeIndex>(i));
    std::vector<double> z, p;
    for (LinkIndex a : out) {
      z.push_back(v.z[static_cast<std::size_t>(a)]);
      p.push_back(pol.p[static_cast<std::size_t>(a)]);
    }
    check_block(z, p, m.smdp.route_scale);
    for (std::size_t d = 0; d < N; ++d) {
      if (d == i) continue;
      std::vector<double> w, q;
      for (LinkIndex a : out) {
        const auto k = static_cast<std::size_t>(net.hired().find(a, static_cast<NodeIndex>(d)));
        w.push_back(v.w[k]);
        q.push_back(pol.q[k]);
      }
      check_block(w, q, m.smdp.route_scale);
      const double take = m.demand.fare(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(d)) + v.tau[d * N + i];
      check_block({take, v.sigma[i]}, {pol.accept[i * N + d], pol.reject[i * N + d]}, m.smdp.accept_scale);
    }
  }
  return {worst_fd <= 1e-6 && worst_sum <= 1e-12, std::to_string(checked) + " probabilities, max |fd - p| " +
                                                     fmt(worst_fd, 3) + ", max simplex error " + fmt(worst_sum, 3)};
}

Outcome loading_oracles() {
  bool pass = true;
  std::ostringstream detail;
  const std::pair<int, std::uint64_t> instances[] = {{4, 11}, {5, 12}, {6, 13}};
  for (const auto& [nodes, seed] : instances) {
    const Model model = fixtures::random_instance(nodes, seed, 100.0);
    const Network& net = model.network;
    std::mt19937_64 rng(seed);
    const LinkEnvironment env = random_env(net, rng);
    const ValueFunctions v = solve_values(env, model.smdp, net, model.demand).values;
    const Policies pol = choice_probabilities(v, model.smdp, net, model.demand);
    const LoadingResult load = load_network(pol, env, model.demand, net, net.pool_size());
    const auto lv = to_state_vector(load.masses);

    // Independent route: power iteration on the reference chain assembly.
    const ChainSpec chain = reference::build_chain(pol, env, model.demand, net);
    std::vector<double> power = stationary_power(chain, 1e-15);
    for (double& x : power) x *= net.pool_size();
    double scale = 0.0;
    for (double x : power) scale = std::max(scale, std::abs(x));
    const double rel = max_abs_diff(lv, power) / scale;

    SimConfig sc;
    sc.horizon = 1e4;
    sc.warmup = 500.0;
    sc.vehicles = 200;
    sc.seed = seed;
    const SimResult sim = simulate({net, model.demand, env, pol}, sc);
    const auto mv = to_state_vector(sim.mean), sv = to_state_vector(sim.standard_error);
    std::size_t outside = 0;
    double worst_z = 0.0;
    for (std::size_t k = 0; k < lv.size(); ++k) {
      const double diff = std::abs(mv[k] - lv[k]);
      // States the simulation never visits have zero standard error.
      const double floor = 1e-6 * net.pool_size();
      if (diff > 3.0 * sv[k] + floor) ++outside;
      if (sv[k] > 0.0) worst_z = std::max(worst_z, diff / sv[k]);
    }
    pass = pass && outside == 0 && rel <= 1e-8;
    detail << nodes << " nodes: " << lv.size() << " states, " << outside << " outside 3 SE (max z " << fmt(worst_z, 3)
           << "), power rel " << fmt(rel, 3) << "; ";
  }
  return {pass, detail.str()};
}

Outcome shuttle_continuum() {
  const Model model = fixtures::shuttle_continuum();
  SolverConfig config;
  config.values.tolerance = 1e-13;
  const std::size_t N = model.network.num_nodes();
  double worst = 0.0;
  for (double u21 : {0.2, 0.5, 0.8}) {
    // The all-empty point fixes t, m and the policies; its hired split m * accept is the equilibrium one.
    const MapOutput probe = fixed_point_map(fixtures::shuttle_point(model, u21), model, config, {}, nullptr, 1e-13);
    const double share = probe.env.match[2] * probe.policies.accept[0 * N + 1];
    const MassDistribution x = fixtures::shuttle_point(model, u21, share);
    const MapOutput out = fixed_point_map(x, model, config, {}, nullptr, 1e-13);
    worst = std::max(worst, gap(x, out.mapped));
  }
  return {worst <= 1e-8, "max fixed-point residual " + fmt(worst, 3) + " over u21 in {0.2, 0.5, 0.8}"};
}

// Largest u in [0, hi] with u / t(u) <= rho.
double mass_at_flow(const std::function<double(double)>& t, double rho, double hi) {
  double lo = 0.0;
  for (int k = 0; k < 200; ++k) {
    const double mid = 0.5 * (lo + hi);
    (mid / t(mid) <= rho ? lo : hi) = mid;
  }
  return 0.5 * (lo + hi);
}

Outcome cycle_uniqueness() {
  const Model model = fixtures::directed_cycle({0.2, 0.35, 0.5, 0.3}, 40.0, 60.0);
  const CycleProblem p = cycle_problem(model.network);
  const double kappa = cycle_contraction_bound(p);

  double lo = 0.0, hi = 1.0;
  auto total = [&](double rho) {
    double s = 0.0;
    for (const auto& t : p.time) s += mass_at_flow(t, rho, p.total_mass);
    return s;
  };
  while (total(hi) < p.total_mass) hi *= 2.0;
  for (int k = 0; k < 200; ++k) {
    const double mid = 0.5 * (lo + hi);
    (total(mid) < p.total_mass ? lo : hi) = mid;
  }
  std::vector<double> oracle;
  for (const auto& t : p.time) oracle.push_back(mass_at_flow(t, 0.5 * (lo + hi), p.total_mass));

  std::mt19937_64 rng(5);
  std::exponential_distribution<double> E(1.0);
  std::vector<std::vector<double>> solutions;
  double worst_ratio = 0.0;
  bool ratios_ok = true;
  for (int s = 0; s < 3; ++s) {
    std::vector<double> u0(p.time.size());
    double sum = 0.0;
    for (double& v : u0) sum += (v = E(rng));
    for (double& v : u0) v *= p.total_mass / sum;
    const CycleReport r = solve_cycle(p, 1e-13, u0);
    for (double ratio : r.spread_ratios) {
      worst_ratio = std::max(worst_ratio, ratio);
      if (ratio > kappa + 1e-9) ratios_ok = false;
    }
    solutions.push_back(r.mass);
  }
  double spread_starts = 0.0;
  for (const auto& s : solutions) spread_starts = std::max(spread_starts, max_abs_diff(s, solutions[0]));
  const double vs_oracle = max_abs_diff(solutions[0], oracle);
  return {kappa < 1.0 && ratios_ok && spread_starts <= 1e-8 && vs_oracle <= 1e-10,
          "kappa_hat " + fmt(kappa) + ", max spread ratio " + fmt(worst_ratio) + ", starts differ by " +
              fmt(spread_starts, 3) + ", vs bisection oracle " + fmt(vs_oracle, 3)};
}

Outcome sioux_falls_convergence() {
  Scenario s = sioux_falls();
  const auto t0 = std::chrono::steady_clock::now();
  const EquilibriumResult r = solve_equilibrium(s.model, s.solver);
  return {r.converged && r.residuals.gap < 1e-4 && r.iterations <= 3000,
          std::to_string(r.iterations) + " iterations, gap " + fmt(r.residuals.gap, 3) + ", " +
              fmt(seconds_since(t0), 4) + " s"};
}

Outcome toll_ablation() {
  Scenario s = sioux_falls("siouxfalls_cordon.cfg");
  const EquilibriumResult aware = solve_equilibrium(s.model, s.solver);
  const CongestionUnawareResult unaware = congestion_unaware_load(s.model, s.solver);
  const double a = aware.metrics.toll_revenue_rate, u = unaware.loaded.metrics.toll_revenue_rate;
  const double pct = 100.0 * (a - u) / u;
  const bool ok = aware.converged && unaware.loaded.converged;
  return {ok && a > u, "toll revenue aware " + fmt(a) + " /hr, unaware " + fmt(u) + " /hr, difference " + fmt(pct, 4) +
                           "%" + (ok ? "" : " (a run did not converge)")};
}

Outcome myopic_ablation() {
  const Model model = fixtures::downtown_airport();
  SolverConfig c;
  c.step.kind = StepKind::momentum;
  c.step.beta = 0.9;
  c.step.psi = 0.02;
  c.tolerance = 1e-4;
  c.max_iterations = 5000;
  const EquilibriumResult fwd = solve_equilibrium(model, c);
  const EquilibriumResult myo = solve_myopic(model, c);
  auto downtown = [&](const EquilibriumResult& r) {
    double mass = 0.0;
    for (std::size_t a = 0; a < model.network.num_links(); ++a) {
      const Link& l = model.network.link(static_cast<LinkIndex>(a));
      if (l.tail <= 3 && l.head <= 3) mass += r.state.env.mass[a];
    }
    return mass;
  };
  const double f = downtown(fwd), m = downtown(myo);
  const bool ok = fwd.converged && myo.converged;
  return {ok && f > m, "downtown mass forward-looking " + fmt(f) + ", myopic " + fmt(m) +
                           (ok ? "" : " (a run did not converge)")};
}

Outcome braess_sign() {
  const SolverConfig c = solver_config(RunConfig{});
  std::ostringstream detail;
  bool weak = true, strict = false, ok = true;
  const std::vector<double> pools{100, 200, 300, 400, 500, 600, 700, 800, 900, 1000};
  for (double pool : pools) {
    const EquilibriumResult base = solve(fixtures::braess(false, pool, 400.0), c);
    const EquilibriumResult bridged = solve(fixtures::braess(true, pool, 400.0), c);
    ok = ok && base.converged && bridged.converged;
    const double dp = bridged.metrics.profit_rate - base.metrics.profit_rate;
    const double ds = bridged.metrics.avg_speed - base.metrics.avg_speed;
    weak = weak && dp <= 0.0 && ds <= 0.0;
    if (pool == pools.back()) strict = dp < 0.0 && ds < 0.0;
    detail << "M=" << pool << ": dprofit " << fmt(dp, 4) << ", dspeed " << fmt(ds, 4) << "; ";
  }
  return {ok && weak && strict, detail.str() + (ok ? "" : "(a run did not converge)")};
}

Outcome participation_monotone() {
  const RunConfig base = RunConfig::from_file(source_dir() / "configs" / "siouxfalls.cfg");
  auto run = [&](const std::string& key, const std::string& value) {
    RunConfig c = base;
    c.set(key, value);
    const Scenario s = load_scenario(c);
    return solve_participation(s.model, s.participation, s.solver);
  };
  std::ostringstream detail;
  bool ok = true, converged = true;
  auto sweep = [&](const std::string& key, const std::vector<std::string>& values, int direction) {
    double prev = direction > 0 ? -1.0 : 2.0;
    detail << key << ":";
    for (const auto& v : values) {
      const auto t0 = std::chrono::steady_clock::now();
      const ParticipationResult r = run(key, v);
      converged = converged && r.equilibrium.converged;
      if (direction > 0 ? r.rate < prev : r.rate > prev) ok = false;
      prev = r.rate;
      detail << ' ' << v << "->" << fmt(r.rate, 5);
      if (key == "participation_total" && v == "20000") {
        detail << " (" << r.equilibrium.iterations << " it, gap " << fmt(r.equilibrium.residuals.gap, 3) << ", "
               << fmt(seconds_since(t0), 4) << " s)";
      }
    }
    detail << "; ";
  };
  sweep("participation_total", {"10000", "15000", "20000", "25000", "30000"}, -1);
  sweep("friction", {"0.4", "0.6", "0.8", "1.0", "1.2"}, +1);
  return {ok && converged, detail.str() + (converged ? "" : "(a run did not converge)")};
}

Outcome fulfillment_asymptote() {
  double worst = 0.0;
  for (double gamma : {0.2, 0.5, 0.8, 1.0, 1.5}) {
    for (double lambda : {1.0, 100.0, 5000.0}) {
      Link l;
      l.arrival_rate = lambda;
      l.friction = gamma;
      const double f = 1e4 * lambda;
      const double fulfillment = f * matching_probability(l, f) / lambda;
      worst = std::max(worst, std::abs(fulfillment - std::min(1.0, gamma)) / std::min(1.0, gamma));
    }
  }
  return {worst <= 0.01, "max relative deviation from min(1, gamma) " + fmt(worst, 3)};
}

Outcome chicago_smoke() {
  const fs::path dir = data_dir() / "chicagosketch";
  const fs::path net = dir / "ChicagoSketch_net.tntp", trips = dir / "ChicagoSketch_trips.tntp";
  if (!fs::exists(net) || !fs::exists(trips)) return {false, "missing " + net.string() + " or " + trips.string()};
  RunConfig c;
  c.set("network", net.string());
  c.set("trips", trips.string());
  c.set("max_iterations", "3");
  c.set("starts", "1");
  const Scenario s = load_scenario(c);
  const bool counts = s.report.nodes == 933 && s.report.links == 2950 && s.report.od_pairs == 142890;
  const EquilibriumResult r = solve_equilibrium(s.model, s.solver);
  return {counts && r.iterations == 3, std::to_string(s.report.nodes) + " nodes, " + std::to_string(s.report.links) +
                                           " links, " + std::to_string(s.report.od_pairs) + " OD pairs, " +
                                           std::to_string(r.iterations) + " iterations"};
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"acceptance checks"};
  std::vector<int> only;
  app.add_option("--only", only, "criterion numbers to run");
  CLI11_PARSE(app, argc, argv);

  const std::vector<Criterion> criteria{
      {1, "Bellman contraction", bellman_contraction},
      {2, "log-sum derivatives", wdz_derivatives},
      {3, "loading vs simulation and power iteration", loading_oracles},
      {4, "shuttle continuum", shuttle_continuum},
      {5, "directed cycle uniqueness", cycle_uniqueness},
      {6, "Sioux Falls convergence", sioux_falls_convergence},
      {7, "toll ablation sign", toll_ablation},
      {8, "myopic ablation sign", myopic_ablation},
      {9, "Braess sign", braess_sign},
      {10, "participation monotonicity", participation_monotone},
      {11, "fulfillment asymptote", fulfillment_asymptote},
      {12, "Chicago sketch ingestion", chicago_smoke},
  };
  int failed = 0;
  for (const auto& c : criteria) {
    if (!only.empty() && std::find(only.begin(), only.end(), c.id) == only.end()) continue;
    Outcome o;
    const auto t0 = std::chrono::steady_clock::now();
    try {
      o = c.run();
    } catch (const std::exception& e) {
      o = {false, std::string("error: ") + e.what()};
    }
    if (!o.pass) ++failed;
    std::cout << (o.pass ? "PASS" : "FAIL") << " criterion " << c.id << " (" << c.name << "): " << o.detail << " ["
              << fmt(seconds_since(t0), 3) << " s]" << std::endl;
  }
  return failed == 0 ? 0 : 1;
}
