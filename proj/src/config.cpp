#include "mter/config.hpp"

#include "mter/errors.hpp"
#include "mter/fixtures.hpp"
#include "mter/tntp.hpp"

#include <algorithm>
#include <charconv>
#include <fstream>
#include <set>
#include <sstream>

namespace mter {

namespace {

const std::set<std::string> kPathKeys = {"network", "trips", "lambda_override", "tolls"};

std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r\n");
  if (b == std::string::npos) return {};
  const auto e = s.find_last_not_of(" \t\r\n");
  return s.substr(b, e - b + 1);
}

double parse_double(const std::string& key, const std::string& text) {
  double v = 0.0;
  const std::string t = trim(text);
  const auto [ptr, ec] = std::from_chars(t.data(), t.data() + t.size(), v);
  if (t.empty() || ec != std::errc() || ptr != t.data() + t.size()) {
    throw ValidationError("config key '" + key + "' expects a number, got '" + text + "'");
  }
  return v;
}

}  // namespace

const std::vector<std::pair<std::string, std::string>>& RunConfig::defaults() {
  static const std::vector<std::pair<std::string, std::string>> d = {
      // network source: either files or a built-in fixture
      {"network", ""},
      {"trips", ""},
      {"lambda_override", ""},
      {"tolls", ""},
      {"fixture", ""},  // braess | braess_bridge | downtown_airport | shuttle | cycle3 | two_cycle | random
      {"fixture_nodes", "5"},
      {"fixture_seed", "1"},
      {"fixture_arrival_rate", "400"},
      {"braess_base_fares", "false"},
      {"time_unit", "minutes"},
      {"jam_capacity", "geometry"},
      {"length", "free_flow"},
      {"length_to_km", "1"},
      {"lanes", "2"},
      {"vehicle_length_m", "6"},
      {"free_flow_speed_mph", "40"},
      {"cordon_nodes", ""},
      {"cordon_toll", "2"},
      {"cordon_rule", "entering"},  // entering: tail outside, head inside; inbound: any link with head inside
      // model
      {"pool_size", ""},  // empty: fixture default, 20000 for file networks
      {"friction", ""},   // empty: fixture default, 0.8 for file networks
      {"discount_rate", "0.1"},
      {"logit_scale", "10"},
      {"route_scale", ""},
      {"accept_scale", ""},
      {"empty_cost", "6"},
      {"hired_cost", "6"},
      {"boundary", "forward_looking"},
      {"fare_base", "3"},
      {"fare_per_unit", "0.70"},
      {"fare_unit_miles", "0.2"},
      // solver
      {"step_rule", "msa_floor"},
      {"step_floor", "0.02"},
      {"momentum_b", "0.5"},
      {"momentum_psi", "1"},
      {"tolerance", "1e-4"},
      {"max_iterations", "3000"},
      {"value_tolerance", "1e-8"},
      {"starts", "3"},
      {"seed", "1"},
      {"loading_method", "auto"},
      {"direct_state_limit", "200000"},
      {"unaware_floor", "0.05"},
      {"compare_baseline", "true"},
      // participation
      {"participation_total", ""},  // empty: pool size
      {"participation_dispersion", "0.01"},
      {"outside_option", "0"},
      // cycle
      {"cycle_tolerance", "1e-13"},
      // simulation
      {"sim_horizon", "10000"},
      {"sim_warmup", "1000"},
      {"sim_vehicles", "200"},
      {"sim_seed", ""},  // empty: seed
      {"trajectory", "false"},
      {"trajectory_vehicles", "5"},
      // sweep: "param: v1, v2, ..."
      {"sweep", ""},
      {"sweep_mode", "solve"},
  };
  return d;
}

RunConfig::RunConfig() {
  for (const auto& [k, v] : defaults()) values_[k] = v;
}

void RunConfig::set(const std::string& key, const std::string& value, const std::filesystem::path& base_dir) {
  const std::string k = trim(key);
  auto it = values_.find(k);
  if (it == values_.end()) throw ValidationError("unknown config key '" + k + "'");
  std::string v = trim(value);
  if (kPathKeys.count(k) && !v.empty()) {
    std::filesystem::path p(v);
    if (p.is_relative() && !base_dir.empty()) p = base_dir / p;
    v = std::filesystem::absolute(p).lexically_normal().string();
  }
  it->second = v;
}

void RunConfig::set_assignment(const std::string& assignment) {
  const auto eq = assignment.find('=');
  if (eq == std::string::npos) throw ValidationError("expected key=value, got '" + assignment + "'");
  set(assignment.substr(0, eq), assignment.substr(eq + 1), std::filesystem::current_path());
}

RunConfig RunConfig::from_file(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ParseError(path.string(), 0, "cannot open config file");
  RunConfig c;
  const auto base = std::filesystem::absolute(path).parent_path();
  std::string raw;
  std::size_t line = 0;
  while (std::getline(in, raw)) {
    ++line;
    const auto hash = raw.find('#');
    const std::string s = trim(hash == std::string::npos ? raw : raw.substr(0, hash));
    if (s.empty()) continue;
    const auto eq = s.find('=');
    if (eq == std::string::npos) throw ParseError(path.string(), line, "expected key = value");
    try {
      c.set(s.substr(0, eq), s.substr(eq + 1), base);
    } catch (const ValidationError& e) {
      throw ParseError(path.string(), line, e.what());
    }
  }
  return c;
}

const std::string& RunConfig::get(const std::string& key) const {
  auto it = values_.find(key);
  if (it == values_.end()) throw ValidationError("unknown config key '" + key + "'");
  return it->second;
}

double RunConfig::number(const std::string& key) const { return parse_double(key, get(key)); }

long RunConfig::integer(const std::string& key) const {
  const double v = number(key);
  if (v != static_cast<double>(static_cast<long>(v))) throw ValidationError("config key '" + key + "' expects an integer");
  return static_cast<long>(v);
}

bool RunConfig::flag(const std::string& key) const {
  const std::string& v = get(key);
  if (v == "true" || v == "1" || v == "yes") return true;
  if (v == "false" || v == "0" || v == "no") return false;
  throw ValidationError("config key '" + key + "' expects true/false, got '" + v + "'");
}

std::vector<double> RunConfig::numbers(const std::string& key) const {
  std::vector<double> out;
  std::stringstream ss(get(key));
  for (std::string tok; std::getline(ss, tok, ',');) {
    if (!trim(tok).empty()) out.push_back(parse_double(key, tok));
  }
  return out;
}

SolverConfig solver_config(const RunConfig& c) {
  SolverConfig s;
  s.step.kind = parse_step_kind(c.get("step_rule"));
  s.step.floor = c.number("step_floor");
  s.step.beta = c.number("momentum_b");
  s.step.psi = c.number("momentum_psi");
  s.tolerance = c.number("tolerance");
  s.max_iterations = c.integer("max_iterations");
  s.values.tolerance = c.number("value_tolerance");
  s.starts = static_cast<int>(c.integer("starts"));
  s.seed = static_cast<std::uint64_t>(c.integer("seed"));
  const std::string& method = c.get("loading_method");
  if (method == "auto") s.loading.method = LoadingMethod::automatic;
  else if (method == "direct") s.loading.method = LoadingMethod::direct;
  else if (method == "power") s.loading.method = LoadingMethod::power;
  else if (method == "blocked") s.loading.method = LoadingMethod::blocked;
  else throw ValidationError("unknown loading_method '" + method + "'");
  s.loading.direct_state_limit = static_cast<std::size_t>(c.integer("direct_state_limit"));
  validate(s);
  return s;
}

void apply_cordon(NetworkData& data, const std::vector<std::int64_t>& zone, double toll, bool include_internal) {
  if (!(toll >= 0.0)) throw ValidationError("cordon toll must be nonnegative");
  std::set<NodeIndex> inside;
  for (std::int64_t id : zone) {
    auto it = std::find(data.node_ids.begin(), data.node_ids.end(), id);
    if (it == data.node_ids.end()) throw StructuralError("cordon node " + std::to_string(id) + " not in network");
    inside.insert(static_cast<NodeIndex>(it - data.node_ids.begin()));
  }
  for (Link& l : data.links) {
    if (inside.count(l.head) && (include_internal || !inside.count(l.tail))) l.toll = toll;
  }
}

namespace {

Model fixture_model(const RunConfig& c) {
  const std::string& name = c.get("fixture");
  const double lambda = c.number("fixture_arrival_rate");
  const double pool = c.has_value("pool_size") ? c.number("pool_size") : 0.0;
  if (name == "braess" || name == "braess_bridge") return fixtures::braess(name == "braess_bridge", pool > 0 ? pool : 300.0, lambda, c.flag("braess_base_fares"));
  if (name == "downtown_airport") return fixtures::downtown_airport();
  if (name == "shuttle") return fixtures::shuttle_continuum();
  if (name == "cycle3") return fixtures::directed_cycle({0.1, 0.2, 0.3}, 100.0, 60.0);
  if (name == "two_cycle") return fixtures::two_cycle(0.2, 100.0, 100.0);
  if (name == "random") {
    return fixtures::random_instance(static_cast<int>(c.integer("fixture_nodes")),
                                     static_cast<std::uint64_t>(c.integer("fixture_seed")));
  }
  throw ValidationError("unknown fixture '" + name + "'");
}

}  // namespace

Scenario load_scenario(const RunConfig& c) {
  SmdpParams smdp;
  smdp.discount_rate = c.number("discount_rate");
  smdp.route_scale = c.has_value("route_scale") ? c.number("route_scale") : c.number("logit_scale");
  smdp.accept_scale = c.has_value("accept_scale") ? c.number("accept_scale") : c.number("logit_scale");
  smdp.empty_cost_per_hour = c.number("empty_cost");
  smdp.hired_cost_per_hour = c.number("hired_cost");
  const std::string& boundary = c.get("boundary");
  if (boundary == "forward_looking") smdp.boundary = Boundary::forward_looking;
  else if (boundary == "myopic") smdp.boundary = Boundary::myopic;
  else throw ValidationError("unknown boundary '" + boundary + "'");
  validate(smdp);

  FareSchedule fares;
  fares.base = c.number("fare_base");
  fares.per_unit = c.number("fare_per_unit");
  fares.unit_miles = c.number("fare_unit_miles");
  fares.free_flow_speed_mph = c.number("free_flow_speed_mph");

  NetworkData data;
  Eigen::MatrixXd destination, fare;
  ParseReport report;
  const bool has_fixture = c.has_value("fixture");
  if (has_fixture == c.has_value("network")) throw ValidationError("set exactly one of 'network' or 'fixture'");

  if (has_fixture) {
    Model base = fixture_model(c);
    data = base.network.data();
    destination = base.demand.destination;
    fare = base.demand.fare;
    if (c.has_value("pool_size")) data.pool_size = c.number("pool_size");
    if (c.has_value("friction")) {
      for (Link& l : data.links) l.friction = c.number("friction");
    }
  } else {
    if (!c.has_value("trips")) throw ValidationError("'network' requires 'trips'");
    for (const char* key : {"network", "trips", "lambda_override", "tolls"}) {
      if (c.has_value(key) && !std::filesystem::exists(c.get(key))) {
        throw ValidationError(std::string(key) + " file not found: " + c.get(key));
      }
    }
    ParseOptions po;
    const std::string& unit = c.get("time_unit");
    if (unit == "minutes") po.time_unit = TimeUnit::minutes;
    else if (unit == "hours") po.time_unit = TimeUnit::hours;
    else throw ValidationError("time_unit must be minutes or hours");
    const std::string& jam = c.get("jam_capacity");
    if (jam == "geometry") po.jam_capacity = JamCapacitySource::geometry;
    else if (jam == "file") po.jam_capacity = JamCapacitySource::file;
    else throw ValidationError("jam_capacity must be geometry or file");
    const std::string& len = c.get("length");
    if (len == "free_flow") po.length = LengthSource::free_flow;
    else if (len == "file") po.length = LengthSource::file;
    else throw ValidationError("length must be free_flow or file");
    po.file_length_to_km = c.number("length_to_km");
    po.lanes = c.number("lanes");
    po.vehicle_length_m = c.number("vehicle_length_m");
    po.free_flow_speed_mph = fares.free_flow_speed_mph;
    po.friction = c.has_value("friction") ? c.number("friction") : 0.8;
    po.pool_size = c.has_value("pool_size") ? c.number("pool_size") : 20000.0;
    ParsedNetwork parsed = parse_network(c.get("network"), c.get("trips"), po);
    data = std::move(parsed.data);
    destination = std::move(parsed.destination);
    report = parsed.report;
    if (c.has_value("lambda_override")) apply_lambda_override(c.get("lambda_override"), data);
  }
  if (c.has_value("tolls")) apply_tolls(c.get("tolls"), data);
  if (c.has_value("cordon_nodes")) {
    std::vector<std::int64_t> zone;
    for (double v : c.numbers("cordon_nodes")) zone.push_back(static_cast<std::int64_t>(v));
    const std::string& rule = c.get("cordon_rule");
    if (rule != "entering" && rule != "inbound") throw ValidationError("cordon_rule must be entering or inbound");
    apply_cordon(data, zone, c.number("cordon_toll"), rule == "inbound");
  }

  Network network(std::move(data));
  if (!has_fixture) fare = compute_fares(network, destination, fares);
  DemandModel demand{std::move(destination), std::move(fare)};
  validate_demand(network, demand);

  Scenario s{Model{std::move(network), std::move(demand), smdp}, solver_config(c), {}, {}, report};

  const auto N = s.model.network.num_nodes();
  const double total = c.has_value("participation_total") ? c.number("participation_total") : s.model.network.pool_size();
  s.participation.potential.assign(N, total / static_cast<double>(N));
  s.participation.dispersion = c.number("participation_dispersion");
  s.participation.outside_option = c.number("outside_option");
  validate(s.participation, s.model.network);

  s.sim.horizon = c.number("sim_horizon");
  s.sim.warmup = c.number("sim_warmup");
  s.sim.vehicles = static_cast<int>(c.integer("sim_vehicles"));
  s.sim.seed = static_cast<std::uint64_t>(c.has_value("sim_seed") ? c.integer("sim_seed") : c.integer("seed"));
  s.sim.trajectory_vehicles = static_cast<int>(c.integer("trajectory_vehicles"));
  validate(s.sim);
  return s;
}

}  // namespace mter
