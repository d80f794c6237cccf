#include "quadswarm/trajectory_io.hpp"

#include <algorithm>
#include <cstdio>
#include <fstream>
#include <limits>
#include <sstream>

#include "quadswarm/config.hpp"

namespace quadswarm {

namespace {

std::string body_csv(const EpisodeLog& log) {
  std::string out;
  out.reserve(log.rows.size() * 200);
  out += kTrajectoryHeader;
  out += '\n';
  for (const auto& r : log.rows) {
    const double fields[] = {r.p.x(), r.p.y(), r.p.z(), r.v.x(), r.v.y(), r.v.z(),
                             r.goal.x(), r.goal.y(), r.goal.z(), r.reward};
    out += format_double(r.t);
    out += ',';
    out += std::to_string(r.drone);
    for (double f : fields) {
      out += ',';
      out += format_double(f);
    }
    out += r.collision ? ",1\n" : ",0\n";
  }
  return out;
}

std::vector<std::string> split(const std::string& line, char sep) {
  std::vector<std::string> parts;
  std::string cur;
  std::istringstream in(line);
  while (std::getline(in, cur, sep)) parts.push_back(cur);
  if (!line.empty() && line.back() == sep) parts.emplace_back();
  return parts;
}

double to_double(const std::string& s) {
  std::size_t used = 0;
  double v = 0.0;
  try {
    v = std::stod(s, &used);
  } catch (const std::exception&) {
    throw UsageError("trajectory: bad number '" + s + "'");
  }
  if (used != s.size()) throw UsageError("trajectory: bad number '" + s + "'");
  return v;
}

int to_int(const std::string& s) {
  std::size_t used = 0;
  int v = 0;
  try {
    v = std::stoi(s, &used);
  } catch (const std::exception&) {
    throw UsageError("trajectory: bad integer '" + s + "'");
  }
  if (used != s.size()) throw UsageError("trajectory: bad integer '" + s + "'");
  return v;
}

std::uint64_t parse_hex(const std::string& s) {
  std::size_t used = 0;
  std::uint64_t v = 0;
  try {
    v = std::stoull(s, &used, 16);
  } catch (const std::exception&) {
    throw UsageError("trajectory: bad config hash '" + s + "'");
  }
  if (used != s.size()) throw UsageError("trajectory: bad config hash '" + s + "'");
  return v;
}

/// Reads `key=value` tokens of a `# ...` header line.
std::map<std::string, std::string> header_fields(const std::string& line) {
  if (line.rfind("# ", 0) != 0) throw UsageError("trajectory: missing '# config_hash=' header");
  std::map<std::string, std::string> out;
  for (const auto& tok : split(line.substr(2), ' ')) {
    const auto eq = tok.find('=');
    if (eq != std::string::npos) out[tok.substr(0, eq)] = tok.substr(eq + 1);
  }
  if (!out.count("config_hash")) throw UsageError("trajectory: header lacks config_hash");
  return out;
}

}  // namespace

std::string trajectory_csv(const EpisodeLog& log, std::uint64_t config_hash) {
  return "# config_hash=" + hex64(config_hash) + " num_drones=" + std::to_string(log.num_drones) +
         " control_dt=" + format_double(log.control_dt) + "\n" + body_csv(log);
}

std::string events_csv(const EpisodeLog& log, std::uint64_t config_hash) {
  std::string out = "# config_hash=" + hex64(config_hash) + "\nt,kind,first,second\n";
  for (const auto& e : log.events) {
    out += format_double(e.time) + "," + to_string(e.kind) + "," + std::to_string(e.first) + "," +
           std::to_string(e.second) + "\n";
  }
  return out;
}

LoadedEpisode parse_trajectory_csv(const std::string& text) {
  std::istringstream in(text);
  std::string line;
  if (!std::getline(in, line)) throw UsageError("trajectory: empty file");
  const auto header = header_fields(line);
  LoadedEpisode out;
  out.config_hash = parse_hex(header.at("config_hash"));
  out.log.num_drones = header.count("num_drones") ? to_int(header.at("num_drones")) : 0;
  out.log.control_dt = header.count("control_dt") ? to_double(header.at("control_dt")) : 0.01;
  if (!std::getline(in, line) || line != kTrajectoryHeader) {
    throw UsageError("trajectory: unexpected column header");
  }
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    const auto f = split(line, ',');
    if (f.size() != 13) throw UsageError("trajectory: expected 13 columns in '" + line + "'");
    TrajectoryRow r;
    r.t = to_double(f[0]);
    r.drone = to_int(f[1]);
    r.p = {to_double(f[2]), to_double(f[3]), to_double(f[4])};
    r.v = {to_double(f[5]), to_double(f[6]), to_double(f[7])};
    r.goal = {to_double(f[8]), to_double(f[9]), to_double(f[10])};
    r.reward = to_double(f[11]);
    r.collision = to_int(f[12]) != 0;
    out.log.rows.push_back(r);
  }
  if (out.log.num_drones > 0 && out.log.rows.size() % out.log.num_drones != 0) {
    throw UsageError("trajectory: row count is not a multiple of num_drones");
  }
  return out;
}

void parse_events_csv(const std::string& text, std::uint64_t expected_hash, EpisodeLog& log) {
  std::istringstream in(text);
  std::string line;
  if (!std::getline(in, line)) throw UsageError("events: empty file");
  const auto header = header_fields(line);
  if (parse_hex(header.at("config_hash")) != expected_hash) {
    throw UsageError("events: config hash does not match the trajectory");
  }
  if (!std::getline(in, line) || line != "t,kind,first,second") {
    throw UsageError("events: unexpected column header");
  }
  log.events.clear();
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    const auto f = split(line, ',');
    if (f.size() != 4) throw UsageError("events: expected 4 columns in '" + line + "'");
    CollisionEvent e;
    e.time = to_double(f[0]);
    if (f[1] == to_string(CollisionKind::DroneDrone)) {
      e.kind = CollisionKind::DroneDrone;
    } else if (f[1] == to_string(CollisionKind::DroneGround)) {
      e.kind = CollisionKind::DroneGround;
    } else if (f[1] == to_string(CollisionKind::DroneObstacle)) {
      e.kind = CollisionKind::DroneObstacle;
    } else {
      throw UsageError("events: unknown kind '" + f[1] + "'");
    }
    e.first = to_int(f[2]);
    e.second = to_int(f[3]);
    log.events.push_back(e);
  }
}

std::uint64_t log_digest(const EpisodeLog& log) {
  std::uint64_t h = fnv1a64(body_csv(log));
  for (const auto& e : log.events) {
    const std::string s = format_double(e.time) + to_string(e.kind) + std::to_string(e.first) + "," +
                          std::to_string(e.second);
    h = fnv1a64(s, h);
  }
  return h;
}

std::string trajectory_svg(const EpisodeLog& log) {
  constexpr double kPanel = 400.0;
  constexpr double kPad = 30.0;
  static const char* kColors[] = {"#1f77b4", "#d62728", "#2ca02c", "#ff7f0e",
                                  "#9467bd", "#8c564b", "#e377c2", "#17becf"};
  std::ostringstream svg;
  svg << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << 2 * kPanel + 3 * kPad
      << "\" height=\"" << kPanel + 2 * kPad << "\">\n";
  svg << "<text x=\"" << kPad << "\" y=\"20\" font-size=\"14\">x-y</text>\n";
  svg << "<text x=\"" << 2 * kPad + kPanel << "\" y=\"20\" font-size=\"14\">x-z</text>\n";
  for (int panel = 0; panel < 2; ++panel) {
    svg << "<rect x=\"" << kPad + panel * (kPanel + kPad) << "\" y=\"" << kPad << "\" width=\""
        << kPanel << "\" height=\"" << kPanel << "\" fill=\"none\" stroke=\"#888\"/>\n";
  }
  if (log.rows.empty() || log.num_drones <= 0) {
    svg << "</svg>\n";
    return svg.str();
  }

  // Shared square extent over positions and goals, per panel.
  auto extent = [&](int a, int b) {
    double lo = std::numeric_limits<double>::infinity();
    double hi = -lo;
    for (const auto& r : log.rows) {
      for (const Vec3* v : {&r.p, &r.goal}) {
        lo = std::min({lo, (*v)[a], (*v)[b]});
        hi = std::max({hi, (*v)[a], (*v)[b]});
      }
    }
    if (hi - lo < 1e-6) hi = lo + 1.0;
    const double margin = 0.05 * (hi - lo);
    return std::pair<double, double>(lo - margin, hi + margin);
  };
  const int axes[2][2] = {{0, 1}, {0, 2}};
  for (int panel = 0; panel < 2; ++panel) {
    const int a = axes[panel][0];
    const int b = axes[panel][1];
    const auto [lo, hi] = extent(a, b);
    const double x0 = kPad + panel * (kPanel + kPad);
    auto sx = [&](double v) { return x0 + (v - lo) / (hi - lo) * kPanel; };
    auto sy = [&](double v) { return kPad + kPanel - (v - lo) / (hi - lo) * kPanel; };
    for (int i = 0; i < log.num_drones; ++i) {
      const char* color = kColors[i % 8];
      svg << "<polyline fill=\"none\" stroke=\"" << color << "\" stroke-width=\"1\" points=\"";
      for (std::size_t k = static_cast<std::size_t>(i); k < log.rows.size(); k += log.num_drones) {
        char buf[64];
        std::snprintf(buf, sizeof buf, "%.2f,%.2f ", sx(log.rows[k].p[a]), sy(log.rows[k].p[b]));
        svg << buf;
      }
      svg << "\"/>\n";
      // Mark each distinct goal the drone was assigned.
      Vec3 last = Vec3::Constant(std::numeric_limits<double>::quiet_NaN());
      for (std::size_t k = static_cast<std::size_t>(i); k < log.rows.size(); k += log.num_drones) {
        const Vec3& g = log.rows[k].goal;
        if (g.isApprox(last, 1e-3)) continue;
        last = g;
        char buf[160];
        std::snprintf(buf, sizeof buf,
                      "<circle cx=\"%.2f\" cy=\"%.2f\" r=\"4\" fill=\"none\" stroke=\"%s\" stroke-width=\"2\"/>\n",
                      sx(g[a]), sy(g[b]), color);
        svg << buf;
      }
    }
  }
  svg << "</svg>\n";
  return svg.str();
}

std::string read_text_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw UsageError("cannot open '" + path + "'");
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

void write_text_file(const std::string& path, const std::string& text) {
  const std::string tmp = path + ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw UsageError("cannot write '" + tmp + "'");
    out << text;
    if (!out) throw UsageError("write failed for '" + tmp + "'");
  }
  if (std::rename(tmp.c_str(), path.c_str()) != 0) throw UsageError("cannot move '" + tmp + "' into place");
}

}  // namespace quadswarm
