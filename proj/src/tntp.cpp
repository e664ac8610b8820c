#include "mter/tntp.hpp"

#include "mter/errors.hpp"

#include <algorithm>
#include <charconv>
#include <fstream>
#include <map>
#include <set>
#include <sstream>

namespace mter {

namespace {

std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r\n");
  if (b == std::string::npos) return {};
  const auto e = s.find_last_not_of(" \t\r\n");
  return s.substr(b, e - b + 1);
}

std::ifstream open_or_throw(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ParseError(path.string(), 0, "cannot open file");
  return in;
}

double to_double(const std::string& tok, const std::filesystem::path& path, std::size_t line) {
  double v = 0.0;
  const auto* end = tok.data() + tok.size();
  const auto [ptr, ec] = std::from_chars(tok.data(), end, v);
  if (ec != std::errc() || ptr != end) throw ParseError(path.string(), line, "expected a number, got '" + tok + "'");
  return v;
}

std::int64_t to_int(const std::string& tok, const std::filesystem::path& path, std::size_t line) {
  std::int64_t v = 0;
  const auto* end = tok.data() + tok.size();
  const auto [ptr, ec] = std::from_chars(tok.data(), end, v);
  if (ec != std::errc() || ptr != end) throw ParseError(path.string(), line, "expected an integer, got '" + tok + "'");
  return v;
}

std::vector<std::string> split(const std::string& s, char extra_sep = '\0') {
  std::string t = s;
  if (extra_sep != '\0') std::replace(t.begin(), t.end(), extra_sep, ' ');
  std::istringstream is(t);
  std::vector<std::string> out;
  for (std::string tok; is >> tok;) out.push_back(tok);
  return out;
}

// Returns true and fills key/value for "<KEY> value" lines.
bool metadata(const std::string& line, std::string& key, std::string& value) {
  if (line.empty() || line.front() != '<') return false;
  const auto close = line.find('>');
  if (close == std::string::npos) return false;
  key = line.substr(1, close - 1);
  value = trim(line.substr(close + 1));
  return true;
}

bool looks_numeric(const std::string& tok) {
  double v = 0.0;
  const auto [ptr, ec] = std::from_chars(tok.data(), tok.data() + tok.size(), v);
  return ec == std::errc() && ptr == tok.data() + tok.size();
}

template <typename RowFn>
void read_csv(const std::filesystem::path& path, std::size_t min_cols, RowFn&& on_row) {
  auto in = open_or_throw(path);
  std::string raw;
  std::size_t line = 0;
  while (std::getline(in, raw)) {
    ++line;
    const std::string s = trim(raw);
    if (s.empty() || s.front() == '#') continue;
    auto cols = split(s, ',');
    if (cols.empty()) continue;
    if (!looks_numeric(cols.front())) continue;  // header row
    if (cols.size() < min_cols) throw ParseError(path.string(), line, "too few columns");
    on_row(cols, line);
  }
}

}  // namespace

LinkFile read_link_file(const std::filesystem::path& path) {
  auto in = open_or_throw(path);
  LinkFile file;
  std::string raw;
  std::size_t line = 0;
  bool in_data = false;
  bool saw_metadata = false;
  while (std::getline(in, raw)) {
    ++line;
    const std::string s = trim(raw);
    if (s.empty() || s.front() == '~') continue;
    std::string key, value;
    if (metadata(s, key, value)) {
      saw_metadata = true;
      if (key == "END OF METADATA") in_data = true;
      if (key == "NUMBER OF NODES") file.declared_nodes = static_cast<std::size_t>(to_int(value, path, line));
      continue;
    }
    if (!in_data && saw_metadata) throw ParseError(path.string(), line, "data row before <END OF METADATA>");
    in_data = true;
    auto cols = split(s, ';');
    if (cols.size() < 5) throw ParseError(path.string(), line, "link row needs at least 5 columns");
    LinkRow row;
    row.line = line;
    row.tail = to_int(cols[0], path, line);
    row.head = to_int(cols[1], path, line);
    row.capacity = to_double(cols[2], path, line);
    row.length = to_double(cols[3], path, line);
    row.free_flow_time = to_double(cols[4], path, line);
    if (cols.size() > 10) row.background = to_double(cols[10], path, line);
    file.rows.push_back(row);
  }
  if (file.rows.empty()) throw ParseError(path.string(), line, "no links found");
  return file;
}

Eigen::MatrixXd read_trips_file(const std::filesystem::path& path, std::span<const std::int64_t> node_ids) {
  std::map<std::int64_t, Eigen::Index> index;
  for (std::size_t i = 0; i < node_ids.size(); ++i) index[node_ids[i]] = static_cast<Eigen::Index>(i);
  const auto n = static_cast<Eigen::Index>(node_ids.size());
  Eigen::MatrixXd od = Eigen::MatrixXd::Zero(n, n);

  auto in = open_or_throw(path);
  std::string raw;
  std::size_t line = 0;
  std::optional<Eigen::Index> origin;
  auto lookup = [&](std::int64_t id) {
    const auto it = index.find(id);
    if (it == index.end()) throw StructuralError(path.string() + ":" + std::to_string(line) + ": unknown node " + std::to_string(id));
    return it->second;
  };
  while (std::getline(in, raw)) {
    ++line;
    const std::string s = trim(raw);
    if (s.empty() || s.front() == '~') continue;
    std::string key, value;
    if (metadata(s, key, value)) continue;
    if (s.rfind("Origin", 0) == 0) {
      const auto toks = split(s.substr(6));
      if (toks.size() != 1) throw ParseError(path.string(), line, "malformed Origin line");
      origin = lookup(to_int(toks[0], path, line));
      continue;
    }
    if (!origin) throw ParseError(path.string(), line, "OD entry before any Origin line");
    std::string t = s;
    std::replace(t.begin(), t.end(), ';', ' ');
    std::string spaced;
    for (char c : t) {
      if (c == ':') spaced += " : ";
      else spaced += c;
    }
    const auto toks = split(spaced);
    if (toks.size() % 3 != 0) throw ParseError(path.string(), line, "expected 'dest : flow;' entries");
    for (std::size_t k = 0; k < toks.size(); k += 3) {
      if (toks[k + 1] != ":") throw ParseError(path.string(), line, "expected ':'");
      const Eigen::Index d = lookup(to_int(toks[k], path, line));
      const double flow = to_double(toks[k + 2], path, line);
      if (flow < 0.0) throw ValidationError(path.string() + ":" + std::to_string(line) + ": negative demand");
      od(*origin, d) += flow;
    }
  }
  return od;
}

NetworkData network_from_link_file(const LinkFile& file, const ParseOptions& options) {
  std::set<std::int64_t> ids;
  for (const auto& r : file.rows) {
    ids.insert(r.tail);
    ids.insert(r.head);
  }
  NetworkData data;
  if (file.declared_nodes > 0) {
    for (std::int64_t id = 1; id <= static_cast<std::int64_t>(file.declared_nodes); ++id) data.node_ids.push_back(id);
    for (auto id : ids) {
      if (id < 1 || id > static_cast<std::int64_t>(file.declared_nodes)) {
        throw StructuralError("link references node " + std::to_string(id) + " outside the declared node range");
      }
    }
  } else {
    data.node_ids.assign(ids.begin(), ids.end());
  }
  std::map<std::int64_t, NodeIndex> index;
  for (std::size_t i = 0; i < data.node_ids.size(); ++i) index[data.node_ids[i]] = static_cast<NodeIndex>(i);

  const double hours_per_unit = options.time_unit == TimeUnit::minutes ? 1.0 / 60.0 : 1.0;
  data.pool_size = options.pool_size;
  for (std::size_t k = 0; k < file.rows.size(); ++k) {
    const LinkRow& r = file.rows[k];
    if (!(r.free_flow_time > 0.0)) {
      throw ValidationError("line " + std::to_string(r.line) + ": non-positive free-flow time");
    }
    Link l;
    l.id = static_cast<std::int64_t>(k + 1);
    l.tail = index.at(r.tail);
    l.head = index.at(r.head);
    l.free_flow_time = r.free_flow_time * hours_per_unit;
    l.length_km = options.length == LengthSource::file
                      ? r.length * options.file_length_to_km
                      : l.free_flow_time * options.free_flow_speed_mph * kKmPerMile;
    l.jam_capacity = options.jam_capacity == JamCapacitySource::file
                         ? r.capacity
                         : options.lanes * l.length_km * 1000.0 / options.vehicle_length_m;
    l.friction = options.friction;
    l.background = r.background;
    data.links.push_back(l);
  }
  return data;
}

ParsedNetwork parse_network(const std::filesystem::path& link_file, const std::filesystem::path& trips_file,
                            const ParseOptions& options) {
  const LinkFile file = read_link_file(link_file);
  ParsedNetwork out;
  out.data = network_from_link_file(file, options);
  out.od = read_trips_file(trips_file, out.data.node_ids);

  const Network topology(out.data);
  auto derived = derive_demand(out.od, topology);
  out.data = with_arrival_rates(std::move(out.data), derived.arrival_rate);
  out.destination = std::move(derived.destination);

  out.report.nodes = out.data.node_ids.size();
  out.report.links = out.data.links.size();
  for (Eigen::Index i = 0; i < out.od.rows(); ++i) {
    for (Eigen::Index d = 0; d < out.od.cols(); ++d) {
      if (i != d && out.od(i, d) > 0.0) {
        ++out.report.od_pairs;
        out.report.total_demand += out.od(i, d);
      }
    }
  }
  return out;
}

void apply_lambda_override(const std::filesystem::path& path, NetworkData& data) {
  read_csv(path, 2, [&](const std::vector<std::string>& cols, std::size_t line) {
    const auto id = to_int(cols[0], path, line);
    auto it = std::find_if(data.links.begin(), data.links.end(), [&](const Link& l) { return l.id == id; });
    if (it == data.links.end()) throw StructuralError(path.string() + ":" + std::to_string(line) + ": unknown link " + cols[0]);
    it->arrival_rate = to_double(cols[1], path, line);
    if (cols.size() > 2) it->friction = to_double(cols[2], path, line);
  });
}

void apply_tolls(const std::filesystem::path& path, NetworkData& data) {
  read_csv(path, 2, [&](const std::vector<std::string>& cols, std::size_t line) {
    const auto id = to_int(cols[0], path, line);
    auto it = std::find_if(data.links.begin(), data.links.end(), [&](const Link& l) { return l.id == id; });
    if (it == data.links.end()) throw StructuralError(path.string() + ":" + std::to_string(line) + ": unknown link " + cols[0]);
    it->toll = to_double(cols[1], path, line);
  });
}

}  // namespace mter
