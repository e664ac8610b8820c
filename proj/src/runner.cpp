#include "mter/runner.hpp"

#include "mter/errors.hpp"
#include "mter/result_io.hpp"

#include <omp.h>

#include <cmath>
#include <cstdlib>
#include <fstream>
#include <iomanip>
#include <ostream>
#include <random>
#include <sstream>

namespace mter {

using nlohmann::json;

namespace {

std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t");
  if (b == std::string::npos) return {};
  return s.substr(b, s.find_last_not_of(" \t") - b + 1);
}

EquilibriumResult solve_any(const Model& model, const SolverConfig& solver, std::ostream* log, const std::string& label) {
  EquilibriumResult r;
  if (solver.starts > 1) {
    const MultiStartReport rep = multi_start(model, solver);
    if (log) {
      for (std::size_t k = 0; k < rep.runs.size(); ++k) {
        const auto& run = rep.runs[k];
        *log << label << " start " << k << ": seed " << run.seed << ", " << run.iterations << " iterations, gap "
             << run.residuals.gap << ", profit " << run.metrics.profit_rate << (run.converged ? "" : " (not converged)")
             << '\n';
      }
    }
    r = rep.best;
  } else {
    r = solve_equilibrium(model, solver);
  }
  if (log) *log << label << ": " << r.message << " after " << r.iterations << " iterations, gap " << r.residuals.gap << '\n';
  return r;
}

void write_standard(const std::filesystem::path& dir, const json& j, const EquilibriumResult& r) {
  std::filesystem::create_directories(dir);
  write_json(dir / "result.json", j);
  write_trace_csv(dir / "trace.csv", r.trace);
  write_metrics_csv(dir / "metrics.csv", r.metrics);
}

int solve_mode(const Scenario& s, const RunConfig& config, const std::filesystem::path& out, std::ostream& log) {
  const EquilibriumResult r = solve_any(s.model, s.solver, &log, "solve");
  write_standard(out, result_to_json("solve", r, s.model, config), r);
  return r.converged ? kExitOk : kExitNotConverged;
}

int participation_mode(const Scenario& s, const RunConfig& config, const std::filesystem::path& out, std::ostream& log) {
  const ParticipationResult p = solve_participation(s.model, s.participation, s.solver);
  log << "participation: " << p.equilibrium.message << ", rate " << p.rate << '\n';
  json j = result_to_json("participation", p.equilibrium, s.model, config);
  j["participation"] = {{"rate", p.rate},
                        {"participating_mass", p.participating_mass},
                        {"probability", p.probability},
                        {"potential", s.participation.potential}};
  write_standard(out, j, p.equilibrium);
  return p.equilibrium.converged ? kExitOk : kExitNotConverged;
}

int ablation_baseline(const Scenario& s, const RunConfig& config, const std::filesystem::path& out, std::ostream& log,
                      const json& variant, const std::string& note) {
  if (!config.flag("compare_baseline")) return kExitOk;
  const EquilibriumResult base = solve_any(s.model, s.solver, &log, "baseline");
  const json bj = result_to_json("solve", base, s.model, config);
  write_standard(out / "baseline", bj, base);
  compare_results(bj, variant, out);
  log << "wrote delta_links.csv and delta_metrics.csv (" << note << ")\n";
  return base.converged ? kExitOk : kExitNotConverged;
}

int myopic_mode(const Scenario& s, const RunConfig& config, const std::filesystem::path& out, std::ostream& log) {
  Model myopic = s.model;
  myopic.smdp.boundary = Boundary::myopic;
  const EquilibriumResult r = solve_any(myopic, s.solver, &log, "myopic");
  RunConfig echo = config;
  echo.set("boundary", "myopic");
  const json j = result_to_json("myopic", r, myopic, echo);
  write_standard(out, j, r);
  const int base = ablation_baseline(s, config, out, log, j, "forward-looking minus myopic");
  return r.converged && base == kExitOk ? kExitOk : kExitNotConverged;
}

int unaware_mode(const Scenario& s, const RunConfig& config, const std::filesystem::path& out, std::ostream& log) {
  const CongestionUnawareResult cu = congestion_unaware_load(s.model, s.solver, config.number("unaware_floor"));
  log << "congestion-unaware: planning " << cu.planning.message << " (" << cu.planning.iterations
      << " iterations), loading " << cu.loaded.message << " (" << cu.loaded.iterations << " iterations)\n";
  json j = result_to_json("congestion-unaware", cu.loaded, s.model, config);
  j["planning"] = {{"converged", cu.planning.converged},
                   {"iterations", cu.planning.iterations},
                   {"gap", cu.planning.residuals.gap},
                   {"metrics", metrics_to_json(cu.planning.metrics)}};
  write_standard(out, j, cu.loaded);
  write_trace_csv(out / "planning_trace.csv", cu.planning.trace);
  const int base = ablation_baseline(s, config, out, log, j, "congestion-aware minus congestion-unaware");
  if (config.flag("compare_baseline")) {
    const json bj = read_json(out / "baseline" / "result.json");
    const double aware = bj.at("metrics").at("toll_revenue_rate").get<double>();
    const double unaware = cu.loaded.metrics.toll_revenue_rate;
    if (unaware > 0.0) log << "toll revenue: aware " << aware << ", unaware " << unaware << ", difference "
                           << 100.0 * (aware - unaware) / unaware << "%\n";
  }
  return cu.loaded.converged && base == kExitOk ? kExitOk : kExitNotConverged;
}

int cycle_mode(const Scenario& s, const RunConfig& config, const std::filesystem::path& out, std::ostream& log) {
  const Network& net = s.model.network;
  const CycleProblem problem = cycle_problem(net);
  const auto order = cycle_order(net);
  const double tol = config.number("cycle_tolerance");
  CycleReport report = solve_cycle(problem, tol);

  // Extra random interior starts, reported for the uniqueness check.
  json starts = json::array();
  std::mt19937_64 rng(static_cast<std::uint64_t>(config.integer("seed")));
  std::exponential_distribution<double> E(1.0);
  for (int k = 1; k < s.solver.starts; ++k) {
    std::vector<double> u0(order.size());
    double total = 0.0;
    for (double& v : u0) total += (v = E(rng));
    for (double& v : u0) v *= problem.total_mass / total;
    const CycleReport rk = solve_cycle(problem, tol, u0);
    double diff = 0.0;
    for (std::size_t a = 0; a < u0.size(); ++a) diff = std::max(diff, std::abs(rk.mass[a] - report.mass[a]));
    starts.push_back({{"start", u0}, {"mass", rk.mass}, {"max_abs_difference", diff}, {"iterations", rk.iterations}});
  }

  std::vector<std::int64_t> ids;
  for (LinkIndex a : order) ids.push_back(net.link(a).id);
  json j{{"format", "mter-cycle"},
         {"mode", "cycle"},
         {"converged", true},
         {"config", json(config.values())},
         {"link_ids", ids},
         {"mass", report.mass},
         {"flow", report.flow},
         {"kappa_hat", report.kappa_hat},
         {"empirical_factor", report.empirical_factor},
         {"iterations", report.iterations},
         {"spreads", report.spreads},
         {"additional_starts", starts}};
  std::filesystem::create_directories(out);
  write_json(out / "result.json", j);
  std::vector<TraceRow> trace;
  for (std::size_t k = 0; k < report.spreads.size(); ++k) trace.push_back({static_cast<long>(k + 1), report.spreads[k], 1.0, 0.0});
  write_trace_csv(out / "trace.csv", trace);
  log << "cycle: rho " << report.flow << ", kappa_hat " << report.kappa_hat << ", empirical factor "
      << report.empirical_factor << ", " << report.iterations << " iterations\n";
  return kExitOk;
}

int microsim_mode(const Scenario& s, const RunConfig& config, const std::filesystem::path& out, std::ostream& log) {
  SolverConfig solver = s.solver;
  solver.starts = 1;
  const EquilibriumResult eq = solve_equilibrium(s.model, solver);
  const Network& net = s.model.network;
  const LinkEnvironment env = eq.state.env.environment();
  const auto loaded = load_network(eq.state.policies, env, s.model.demand, net, net.pool_size(), solver.loading).masses;

  SimConfig sim = s.sim;
  sim.total_mass = net.pool_size();
  std::filesystem::create_directories(out);
  if (config.flag("trajectory")) sim.trajectory = out / "trajectory.csv";
  const SimResult r = simulate({net, s.model.demand, env, eq.state.policies}, sim);

  const auto lv = to_state_vector(loaded);
  const auto mv = to_state_vector(r.mean);
  const auto sv = to_state_vector(r.standard_error);
  const HiredLayout& layout = net.hired();
  std::ofstream csv(out / "microsim.csv");
  csv << std::setprecision(17) << "link_id,status,destination,loading,simulated,standard_error,z\n";
  double max_z = 0.0;
  std::size_t within = 0, compared = 0;
  for (std::size_t k = 0; k < lv.size(); ++k) {
    const bool hired = k >= net.num_links();
    const LinkIndex a = hired ? layout.link_of(k - net.num_links()) : static_cast<LinkIndex>(k);
    const double z = sv[k] > 0.0 ? (mv[k] - lv[k]) / sv[k] : 0.0;
    csv << net.link(a).id << ',' << (hired ? "hired" : "empty") << ','
        << (hired ? std::to_string(net.node_id(layout.destination_of(k - net.num_links()))) : std::string()) << ','
        << lv[k] << ',' << mv[k] << ',' << sv[k] << ',' << z << '\n';
    if (sv[k] > 0.0) {
      ++compared;
      if (std::abs(z) <= 3.0) ++within;
      max_z = std::max(max_z, std::abs(z));
    }
  }
  json j = result_to_json("microsim-validate", eq, s.model, config);
  j["microsim"] = {{"events", r.events},
                   {"vehicles", sim.vehicles},
                   {"horizon", sim.horizon},
                   {"warmup", sim.warmup},
                   {"states_compared", compared},
                   {"states_within_3se", within},
                   {"max_abs_z", max_z}};
  write_standard(out, j, eq);
  log << "microsim: " << within << " of " << compared << " states within 3 standard errors (max |z| " << max_z << ")\n";
  return kExitOk;
}

int sweep_mode(const Scenario&, const RunConfig& config, const std::filesystem::path& out, std::ostream& log) {
  const SweepSpec spec = parse_sweep(config.get("sweep"));
  const std::string mode = config.get("sweep_mode");
  if (mode != "solve" && mode != "participation") throw ValidationError("sweep_mode must be solve or participation");
  // Validate every point before running any.
  std::vector<Scenario> points;
  for (const auto& v : spec.values) {
    RunConfig c = config;
    c.set(spec.param, v);
    points.push_back(load_scenario(c));
    points.back().solver.starts = points.back().solver.starts;  // per-point multi-start as configured
  }
  struct Row {
    double profit = 0, fulfillment = 0, ratio = 0, speed = 0, participation = NAN;
    bool converged = false;
  };
  std::vector<Row> rows(points.size());
#pragma omp parallel for schedule(dynamic, 1)
  for (std::size_t k = 0; k < points.size(); ++k) {
    const Scenario& p = points[k];
    EquilibriumResult r;
    Row row;
    if (mode == "participation") {
      const ParticipationResult pr = solve_participation(p.model, p.participation, p.solver);
      r = pr.equilibrium;
      row.participation = pr.rate;
    } else {
      r = solve_any(p.model, p.solver, nullptr, "");
    }
    row.profit = r.metrics.profit_rate;
    row.fulfillment = r.metrics.fulfillment;
    row.ratio = r.metrics.vacant_hired_ratio;
    row.speed = r.metrics.avg_speed;
    row.converged = r.converged;
    rows[k] = row;
  }
  std::filesystem::create_directories(out);
  std::ofstream csv(out / "sweep.csv");
  csv << std::setprecision(17) << "param_value,profit,fulfillment,vh_ratio,avg_speed,participation\n";
  bool all = true;
  for (std::size_t k = 0; k < rows.size(); ++k) {
    const Row& r = rows[k];
    csv << spec.values[k] << ',' << r.profit << ',' << r.fulfillment << ',' << r.ratio << ',' << r.speed << ',';
    if (!std::isnan(r.participation)) csv << r.participation;
    csv << '\n';
    all = all && r.converged;
    log << spec.param << " = " << spec.values[k] << ": profit " << r.profit << (r.converged ? "" : " (not converged)") << '\n';
  }
  write_json(out / "result.json", json{{"format", "mter-sweep"}, {"mode", "sweep"}, {"param", spec.param},
                                       {"values", spec.values}, {"all_converged", all}, {"config", json(config.values())}});
  return all ? kExitOk : kExitNotConverged;
}

}  // namespace

const std::vector<std::string>& run_modes() {
  static const std::vector<std::string> m = {"solve", "participation", "myopic", "congestion-unaware",
                                             "cycle", "microsim-validate", "sweep"};
  return m;
}

SweepSpec parse_sweep(const std::string& text) {
  const auto colon = text.find(':');
  if (colon == std::string::npos) throw ValidationError("sweep must look like 'param: v1, v2, ...'");
  SweepSpec s;
  s.param = trim(text.substr(0, colon));
  std::stringstream ss(text.substr(colon + 1));
  for (std::string tok; std::getline(ss, tok, ',');) {
    if (!trim(tok).empty()) s.values.push_back(trim(tok));
  }
  if (s.param.empty() || s.values.empty()) throw ValidationError("sweep needs a parameter and at least one value");
  RunConfig probe;
  probe.get(s.param);  // unknown keys throw
  return s;
}

int run_mode(const std::string& mode, const RunConfig& config, const std::filesystem::path& out_dir, std::ostream& log) {
  const Scenario s = load_scenario(config);
  for (const auto& w : s.model.network.warnings()) log << "warning: " << w << '\n';
  if (mode == "solve") return solve_mode(s, config, out_dir, log);
  if (mode == "participation") return participation_mode(s, config, out_dir, log);
  if (mode == "myopic") return myopic_mode(s, config, out_dir, log);
  if (mode == "congestion-unaware") return unaware_mode(s, config, out_dir, log);
  if (mode == "cycle") return cycle_mode(s, config, out_dir, log);
  if (mode == "microsim-validate") return microsim_mode(s, config, out_dir, log);
  if (mode == "sweep") return sweep_mode(s, config, out_dir, log);
  throw ValidationError("unknown mode '" + mode + "'");
}

int run_compare(const std::filesystem::path& a, const std::filesystem::path& b, const std::filesystem::path& out_dir,
                std::ostream& log) {
  const json ja = read_json(a);
  const json jb = read_json(b);
  compare_results(ja, jb, out_dir);
  log << "wrote " << (out_dir / "delta_links.csv").string() << " and delta_metrics.csv\n";
  return kExitOk;
}

void apply_thread_cap() {
  if (const char* env = std::getenv("MTER_NUM_THREADS")) {
    const int n = std::atoi(env);
    if (n > 0) omp_set_num_threads(n);
  }
}

}  // namespace mter
