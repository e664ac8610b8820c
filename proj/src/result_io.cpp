#include "mter/result_io.hpp"

#include "mter/errors.hpp"

#include <cmath>
#include <fstream>
#include <iomanip>
#include <limits>

namespace mter {

using nlohmann::json;

namespace {

json finite_or_null(double v) { return std::isfinite(v) ? json(v) : json(nullptr); }

double number_or_inf(const json& j) { return j.is_null() ? std::numeric_limits<double>::infinity() : j.get<double>(); }

std::ofstream open_out(const std::filesystem::path& path) {
  std::ofstream out(path);
  if (!out) throw ValidationError("cannot write " + path.string());
  out << std::setprecision(17);
  return out;
}

}  // namespace

json metrics_to_json(const MetricsBundle& m) {
  return json{{"revenue_rate", m.revenue_rate},
              {"cost_rate", m.cost_rate},
              {"profit_rate", m.profit_rate},
              {"fulfillment", m.fulfillment},
              {"fulfillment_matched_only", m.fulfillment_matched_only},
              {"no_demand", m.no_demand},
              {"vacant_hired_ratio", finite_or_null(m.vacant_hired_ratio)},
              {"hired_mass_zero", m.hired_mass_zero},
              {"avg_speed", m.avg_speed},
              {"toll_revenue_rate", m.toll_revenue_rate},
              {"empty_mass", m.empty_mass},
              {"hired_mass", m.hired_mass}};
}

MetricsBundle metrics_from_json(const json& j) {
  MetricsBundle m;
  m.revenue_rate = j.at("revenue_rate").get<double>();
  m.cost_rate = j.at("cost_rate").get<double>();
  m.profit_rate = j.at("profit_rate").get<double>();
  m.fulfillment = j.at("fulfillment").get<double>();
  m.fulfillment_matched_only = j.at("fulfillment_matched_only").get<double>();
  m.no_demand = j.at("no_demand").get<bool>();
  m.vacant_hired_ratio = number_or_inf(j.at("vacant_hired_ratio"));
  m.hired_mass_zero = j.at("hired_mass_zero").get<bool>();
  m.avg_speed = j.at("avg_speed").get<double>();
  m.toll_revenue_rate = j.at("toll_revenue_rate").get<double>();
  m.empty_mass = j.at("empty_mass").get<double>();
  m.hired_mass = j.at("hired_mass").get<double>();
  return m;
}

json network_to_json(const Network& network) {
  json links = json::array();
  for (const Link& l : network.links()) {
    links.push_back({{"id", l.id}, {"tail", network.node_id(l.tail)}, {"head", network.node_id(l.head)}, {"toll", l.toll}});
  }
  json nodes = json::array();
  for (std::size_t i = 0; i < network.num_nodes(); ++i) nodes.push_back(network.node_id(static_cast<NodeIndex>(i)));
  return json{{"nodes", nodes}, {"links", links}, {"pool_size", network.pool_size()}};
}

json result_to_json(const std::string& mode, const EquilibriumResult& r, const Model& model, const RunConfig& config) {
  const Network& net = model.network;
  const HiredLayout& layout = net.hired();
  const EquilibriumState& s = r.state;
  json j;
  j["format"] = "mter-result";
  j["version"] = 1;
  j["mode"] = mode;
  j["converged"] = r.converged;
  j["message"] = r.message;
  j["iterations"] = r.iterations;
  j["seed"] = r.seed;
  j["target_mass"] = r.target_mass;
  j["config"] = json(config.values());
  j["network"] = network_to_json(net);

  std::vector<double> hired_per_link(net.num_links(), 0.0);
  for (std::size_t k = 0; k < layout.size(); ++k) hired_per_link[static_cast<std::size_t>(layout.link_of(k))] += s.masses.hired[k];
  j["links"] = {{"mass", s.env.mass},           {"empty_mass", s.masses.empty}, {"hired_mass", hired_per_link},
                {"time", s.env.time},           {"empty_flow", s.env.empty_flow}, {"hired_flow", s.env.hired_flow},
                {"match", s.env.match},         {"p", s.policies.p}};

  std::vector<std::int64_t> link_ids(layout.size()), dest_ids(layout.size());
  for (std::size_t k = 0; k < layout.size(); ++k) {
    link_ids[k] = net.link(layout.link_of(k)).id;
    dest_ids[k] = net.node_id(layout.destination_of(k));
  }
  j["hired_states"] = {{"link", link_ids}, {"destination", dest_ids}, {"mass", s.masses.hired}, {"q", s.policies.q}};

  const std::size_t N = net.num_nodes();
  json accept = json::array();
  for (std::size_t i = 0; i < N; ++i) {
    accept.push_back(std::vector<double>(s.policies.accept.begin() + static_cast<std::ptrdiff_t>(i * N),
                                         s.policies.accept.begin() + static_cast<std::ptrdiff_t>((i + 1) * N)));
  }
  j["policies"] = {{"accept", accept}};
  j["values"] = {{"sigma", s.values.sigma}, {"z", s.values.z}};
  j["metrics"] = metrics_to_json(r.metrics);
  j["residuals"] = {{"gap", r.residuals.gap},
                    {"bellman", r.residuals.bellman},
                    {"flow_balance", r.residuals.flow_balance},
                    {"time_consistency", r.residuals.time_consistency},
                    {"match_consistency", r.residuals.match_consistency},
                    {"mass_error", r.residuals.mass_error},
                    {"within_tolerance", r.residuals.within_tolerance}};
  j["trace_summary"] = {{"rows", r.trace.size()},
                        {"final_gap", r.trace.empty() ? 0.0 : r.trace.back().gap},
                        {"seconds", r.trace.empty() ? 0.0 : r.trace.back().seconds}};
  return j;
}

void write_json(const std::filesystem::path& path, const json& j) {
  std::ofstream out(path);
  if (!out) throw ValidationError("cannot write " + path.string());
  out << j.dump(1) << '\n';
}

json read_json(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ParseError(path.string(), 0, "cannot open file");
  try {
    return json::parse(in);
  } catch (const json::parse_error& e) {
    throw ParseError(path.string(), 0, e.what());
  }
}

void write_trace_csv(const std::filesystem::path& path, const std::vector<TraceRow>& trace) {
  auto out = open_out(path);
  out << "iter,gap,step,seconds\n";
  for (const TraceRow& r : trace) out << r.iter << ',' << r.gap << ',' << r.step << ',' << r.seconds << '\n';
}

void write_metrics_csv(const std::filesystem::path& path, const MetricsBundle& m) {
  auto out = open_out(path);
  out << "revenue_rate,cost_rate,profit_rate,fulfillment,fulfillment_matched_only,vacant_hired_ratio,avg_speed,"
         "toll_revenue_rate,empty_mass,hired_mass\n";
  out << m.revenue_rate << ',' << m.cost_rate << ',' << m.profit_rate << ',' << m.fulfillment << ','
      << m.fulfillment_matched_only << ',' << m.vacant_hired_ratio << ',' << m.avg_speed << ',' << m.toll_revenue_rate
      << ',' << m.empty_mass << ',' << m.hired_mass << '\n';
}

StoredResult read_result(const std::filesystem::path& path) {
  StoredResult s;
  s.raw = read_json(path);
  try {
    if (s.raw.at("format") != "mter-result") throw ParseError(path.string(), 0, "not a result file");
    for (const auto& [k, v] : s.raw.at("config").items()) s.config.set(k, v.get<std::string>());
    s.masses.empty = s.raw.at("links").at("empty_mass").get<std::vector<double>>();
    s.masses.hired = s.raw.at("hired_states").at("mass").get<std::vector<double>>();
    for (const auto& row : s.raw.at("policies").at("accept")) {
      for (const auto& v : row) s.accept.push_back(v.get<double>());
    }
    s.metrics = metrics_from_json(s.raw.at("metrics"));
  } catch (const json::exception& e) {
    throw ParseError(path.string(), 0, e.what());
  }
  return s;
}

MetricsBundle recompute_metrics(const StoredResult& stored) {
  const Scenario scenario = load_scenario(stored.config);
  const Network& net = scenario.model.network;
  if (stored.masses.empty.size() != net.num_links() || stored.masses.hired.size() != net.hired().size()) {
    throw StructuralError("stored masses do not match the rebuilt network");
  }
  const LinkState env = masses_to_env(stored.masses, net);
  Policies policies;
  policies.accept = stored.accept;
  return compute_metrics(stored.masses, env, policies, scenario.model.demand, scenario.model.smdp, net);
}

void compare_results(const json& a, const json& b, const std::filesystem::path& out_dir) {
  const json& la = a.at("network").at("links");
  const json& lb = b.at("network").at("links");
  std::string diff;
  const std::size_t n = std::min(la.size(), lb.size());
  for (std::size_t k = 0; k < n && diff.size() < 400; ++k) {
    if (la[k].at("id") != lb[k].at("id") || la[k].at("tail") != lb[k].at("tail") || la[k].at("head") != lb[k].at("head")) {
      diff += " link " + la[k].at("id").dump() + " (" + la[k].at("tail").dump() + "->" + la[k].at("head").dump() +
              ") vs " + lb[k].at("id").dump() + " (" + lb[k].at("tail").dump() + "->" + lb[k].at("head").dump() + ");";
    }
  }
  if (la.size() != lb.size()) {
    diff += " link counts " + std::to_string(la.size()) + " vs " + std::to_string(lb.size()) + ";";
  }
  if (!diff.empty()) throw StructuralError("results are on different networks:" + diff);

  std::filesystem::create_directories(out_dir);
  {
    auto out = open_out(out_dir / "delta_links.csv");
    out << "link_id,tail,head,mass_a,mass_b,delta_mass,empty_a,empty_b,delta_empty,time_a,time_b,delta_time\n";
    const json& A = a.at("links");
    const json& B = b.at("links");
    for (std::size_t k = 0; k < n; ++k) {
      const double ma = A.at("mass")[k], mb = B.at("mass")[k];
      const double ea = A.at("empty_mass")[k], eb = B.at("empty_mass")[k];
      const double ta = A.at("time")[k], tb = B.at("time")[k];
      out << la[k].at("id").get<std::int64_t>() << ',' << la[k].at("tail").get<std::int64_t>() << ','
          << la[k].at("head").get<std::int64_t>() << ',' << ma << ',' << mb << ',' << ma - mb << ',' << ea << ',' << eb
          << ',' << ea - eb << ',' << ta << ',' << tb << ',' << ta - tb << '\n';
    }
  }
  {
    auto out = open_out(out_dir / "delta_metrics.csv");
    out << "metric,a,b,delta,ratio\n";
    for (const char* key : {"revenue_rate", "cost_rate", "profit_rate", "fulfillment", "fulfillment_matched_only",
                            "vacant_hired_ratio", "avg_speed", "toll_revenue_rate", "empty_mass", "hired_mass"}) {
      const double va = number_or_inf(a.at("metrics").at(key));
      const double vb = number_or_inf(b.at("metrics").at(key));
      const double ratio = vb != 0.0 ? va / vb : std::numeric_limits<double>::quiet_NaN();
      out << key << ',' << va << ',' << vb << ',' << va - vb << ',' << ratio << '\n';
    }
  }
}

}  // namespace mter
