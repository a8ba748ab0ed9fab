#include "drivelab/serialization.hpp"

#include <charconv>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <sstream>

#include "json.hpp"

namespace drivelab {

using nlohmann::json;

std::string format_double(double v) {
  char buf[64];
  auto res = std::to_chars(buf, buf + sizeof(buf), v);
  return std::string(buf, res.ptr);
}

namespace {

double parse_double(std::string_view s) {
  while (!s.empty() && s.front() == ' ') s.remove_prefix(1);
  while (!s.empty() && (s.back() == ' ' || s.back() == '\r')) s.remove_suffix(1);
  if (s == "inf") return std::numeric_limits<double>::infinity();
  if (s == "-inf") return -std::numeric_limits<double>::infinity();
  if (s == "nan") return std::numeric_limits<double>::quiet_NaN();
  double v = 0.0;
  auto res = std::from_chars(s.data(), s.data() + s.size(), v);
  if (res.ec != std::errc() || res.ptr != s.data() + s.size()) {
    throw FormatError("not a number: '" + std::string(s) + "'");
  }
  return v;
}

std::vector<std::string_view> split(std::string_view line, char sep) {
  std::vector<std::string_view> out;
  std::size_t start = 0;
  while (true) {
    auto pos = line.find(sep, start);
    if (pos == std::string_view::npos) {
      out.push_back(line.substr(start));
      break;
    }
    out.push_back(line.substr(start, pos - start));
    start = pos + 1;
  }
  return out;
}

std::string meta_lines(const Metadata& meta) {
  std::string out;
  for (const auto& [k, v] : meta) out += "# " + k + "=" + v + "\n";
  return out;
}

json points_json(const Polyline& line) {
  json arr = json::array();
  for (const auto& p : line.points()) arr.push_back({p.x, p.y});
  return arr;
}

}  // namespace

std::size_t CsvTable::column(const std::string& name) const {
  for (std::size_t i = 0; i < header.size(); ++i)
    if (header[i] == name) return i;
  throw FormatError("missing CSV column '" + name + "'");
}

CsvTable parse_csv(const std::string& text) {
  CsvTable t;
  std::istringstream in(text);
  std::string line;
  bool haveHeader = false;
  std::size_t lineNo = 0;
  while (std::getline(in, line)) {
    ++lineNo;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    if (line[0] == '#') {
      auto body = line.substr(1);
      while (!body.empty() && body.front() == ' ') body.erase(body.begin());
      auto eq = body.find('=');
      if (eq != std::string::npos) t.meta[body.substr(0, eq)] = body.substr(eq + 1);
      continue;
    }
    if (!haveHeader) {
      for (auto f : split(line, ',')) t.header.emplace_back(f);
      haveHeader = true;
      continue;
    }
    auto fields = split(line, ',');
    if (fields.size() != t.header.size()) {
      throw FormatError("CSV line " + std::to_string(lineNo) + " has " + std::to_string(fields.size()) +
                        " fields, expected " + std::to_string(t.header.size()));
    }
    std::vector<double> row;
    row.reserve(fields.size());
    for (auto f : fields) row.push_back(parse_double(f));
    t.rows.push_back(std::move(row));
  }
  if (!haveHeader) throw FormatError("CSV has no header row");
  return t;
}

std::string write_csv(const CsvTable& table) {
  std::string out = meta_lines(table.meta);
  for (std::size_t i = 0; i < table.header.size(); ++i) {
    if (i) out += ',';
    out += table.header[i];
  }
  out += '\n';
  for (const auto& row : table.rows) {
    for (std::size_t i = 0; i < row.size(); ++i) {
      if (i) out += ',';
      out += format_double(row[i]);
    }
    out += '\n';
  }
  return out;
}

std::string network_to_json(const RoadNetwork& net) {
  json j;
  j["format"] = "drivelab.road_network";
  j["version"] = 1;
  json nodes = json::array();
  for (const auto& n : net.nodes()) nodes.push_back({{"id", n.id}, {"x", n.position.x}, {"y", n.position.y}});
  j["nodes"] = nodes;
  json edges = json::array();
  for (const auto& e : net.edges()) {
    edges.push_back({{"id", e.id},
                     {"from", e.from},
                     {"to", e.to},
                     {"speed_limit", e.speedLimit},
                     {"polyline", points_json(e.polyline)},
                     {"traffic_lights", e.trafficLights},
                     {"pedestrian_crossings", e.pedestrianCrossings},
                     {"yield_signs", e.yieldSigns}});
  }
  j["edges"] = edges;
  return j.dump(1) + "\n";
}

RoadNetwork network_from_json(const std::string& text) {
  json j;
  try {
    j = json::parse(text);
  } catch (const json::exception& e) {
    throw FormatError(std::string("road network is not valid JSON: ") + e.what());
  }
  if (j.value("format", "") != "drivelab.road_network") throw FormatError("not a drivelab road network document");
  try {
    std::vector<RoadNode> nodes;
    for (const auto& n : j.at("nodes")) {
      RoadNode node;
      node.id = n.at("id").get<int>();
      node.position = {n.at("x").get<double>(), n.at("y").get<double>()};
      nodes.push_back(node);
    }
    std::vector<RoadEdge> edges;
    for (const auto& e : j.at("edges")) {
      RoadEdge edge;
      edge.id = e.at("id").get<int>();
      edge.from = e.at("from").get<int>();
      edge.to = e.at("to").get<int>();
      edge.speedLimit = e.at("speed_limit").get<int>();
      std::vector<Vec2> pts;
      for (const auto& p : e.at("polyline")) pts.push_back({p.at(0).get<double>(), p.at(1).get<double>()});
      edge.polyline = Polyline(std::move(pts));
      edge.trafficLights = e.value("traffic_lights", std::vector<double>{});
      edge.pedestrianCrossings = e.value("pedestrian_crossings", std::vector<double>{});
      edge.yieldSigns = e.value("yield_signs", std::vector<double>{});
      edges.push_back(std::move(edge));
    }
    return RoadNetwork(std::move(nodes), std::move(edges));
  } catch (const json::exception& e) {
    throw FormatError(std::string("malformed road network: ") + e.what());
  }
}

std::string route_to_json(const Route& route) {
  json legs = json::array();
  for (const auto& l : route.legs) legs.push_back({{"edge", l.edge}, {"forward", l.forward}});
  json j{{"format", "drivelab.route"}, {"legs", legs}, {"start_offset", route.startOffset},
         {"end_offset", route.endOffset}};
  return j.dump(1) + "\n";
}

Route route_from_json(const std::string& text) {
  try {
    json j = json::parse(text);
    Route r;
    for (const auto& l : j.at("legs")) r.legs.push_back({l.at("edge").get<int>(), l.at("forward").get<bool>()});
    r.startOffset = j.at("start_offset").get<double>();
    r.endOffset = j.at("end_offset").get<double>();
    return r;
  } catch (const json::exception& e) {
    throw FormatError(std::string("malformed route: ") + e.what());
  }
}

std::string drive_log_to_csv(const DriveLog& log, const Metadata& meta) {
  CsvTable t;
  t.meta = meta;
  t.meta["rate"] = format_double(log.rate);
  t.header = {"t", "s", "v", "x", "y", "heading", "routeOffset"};
  for (const auto& s : log.samples) {
    t.rows.push_back({s.t, s.steering, s.speed, s.position.x, s.position.y, s.heading, s.routeOffset});
  }
  return write_csv(t);
}

DriveLog drive_log_from_csv(const std::string& text, Metadata* meta) {
  CsvTable t = parse_csv(text);
  DriveLog log;
  if (auto it = t.meta.find("rate"); it != t.meta.end()) log.rate = parse_double(it->second);
  std::size_t ct = t.column("t"), cs = t.column("s"), cv = t.column("v"), cx = t.column("x"),
              cy = t.column("y"), ch = t.column("heading"), co = t.column("routeOffset");
  for (const auto& r : t.rows) log.samples.push_back({r[ct], r[cs], r[cv], {r[cx], r[cy]}, r[ch], r[co]});
  if (meta) *meta = t.meta;
  return log;
}

std::string gps_trace_to_csv(const GpsTrace& trace, const Metadata& meta) {
  CsvTable t;
  t.meta = meta;
  t.meta["sigma"] = format_double(trace.noiseSigma);
  t.header = {"t", "x", "y"};
  for (const auto& s : trace.samples) t.rows.push_back({s.t, s.position.x, s.position.y});
  return write_csv(t);
}

GpsTrace gps_trace_from_csv(const std::string& text, Metadata* meta) {
  CsvTable t = parse_csv(text);
  GpsTrace g;
  if (auto it = t.meta.find("sigma"); it != t.meta.end()) g.noiseSigma = parse_double(it->second);
  std::size_t ct = t.column("t"), cx = t.column("x"), cy = t.column("y");
  for (const auto& r : t.rows) g.samples.push_back({r[ct], {r[cx], r[cy]}});
  if (meta) *meta = t.meta;
  return g;
}

std::string matched_path_to_csv(const MatchedPath& path, const Metadata& meta) {
  CsvTable t;
  t.meta = meta;
  t.meta["total_log_prob"] = format_double(path.totalLogProb);
  t.header = {"t", "edgeId", "offset", "x", "y"};
  for (const auto& s : path.samples) {
    t.rows.push_back({s.t, static_cast<double>(s.edge), s.offset, s.position.x, s.position.y});
  }
  return write_csv(t);
}

MatchedPath matched_path_from_csv(const std::string& text, Metadata* meta) {
  CsvTable t = parse_csv(text);
  MatchedPath m;
  if (auto it = t.meta.find("total_log_prob"); it != t.meta.end()) m.totalLogProb = parse_double(it->second);
  std::size_t ct = t.column("t"), ce = t.column("edgeId"), co = t.column("offset"), cx = t.column("x"),
              cy = t.column("y");
  for (const auto& r : t.rows) m.samples.push_back({r[ct], static_cast<int>(r[ce]), r[co], {r[cx], r[cy]}});
  if (meta) *meta = t.meta;
  return m;
}

namespace {

const std::vector<std::string>& frame_columns() {
  static const std::vector<std::string> cols = {
      "f_intersection", "f_traffic_light", "f_crossing",      "f_yield",           "f_speed_limit",
      "f_free_flow",    "f_curvature",     "f_turn_number",   "f_our_heading",     "f_other_heading",
      "f_heading_1",    "f_heading_5",     "f_heading_10",    "f_heading_20",      "f_heading_50",
      "f_signed_curv",  "raw_intersection", "raw_traffic_light", "raw_crossing",   "raw_yield",
      "raw_since_intersection"};
  return cols;
}

std::vector<double> frame_values(const MapFeatureFrame& f) {
  std::vector<double> v = {f.distanceToIntersection, f.distanceToTrafficLight, f.distanceToPedestrianCrossing,
                           f.distanceToYieldSign,    f.speedLimit,             f.freeFlowSpeed,
                           f.curvature,              static_cast<double>(f.turnNumber), f.ourRoadHeading,
                           f.otherRoadsHeading};
  v.insert(v.end(), f.futureHeading.begin(), f.futureHeading.end());
  v.insert(v.end(), {f.signedCurvature, f.raw.intersection, f.raw.trafficLight, f.raw.pedestrianCrossing,
                     f.raw.yieldSign, f.raw.sinceIntersection});
  return v;
}

MapFeatureFrame frame_from_values(const double* v) {
  MapFeatureFrame f;
  f.distanceToIntersection = v[0];
  f.distanceToTrafficLight = v[1];
  f.distanceToPedestrianCrossing = v[2];
  f.distanceToYieldSign = v[3];
  f.speedLimit = v[4];
  f.freeFlowSpeed = v[5];
  f.curvature = v[6];
  f.turnNumber = static_cast<int>(v[7]);
  f.ourRoadHeading = v[8];
  f.otherRoadsHeading = v[9];
  for (int i = 0; i < 5; ++i) f.futureHeading[i] = v[10 + i];
  f.signedCurvature = v[15];
  f.raw = {v[16], v[17], v[18], v[19], v[20]};
  return f;
}

void add_indexed(std::vector<std::string>& header, const std::string& prefix, int n) {
  for (int i = 0; i < n; ++i) header.push_back(prefix + std::to_string(i));
}

}  // namespace

std::string feature_rows_to_csv(const std::vector<FeatureRow>& rows, const Metadata& meta) {
  CsvTable t;
  t.meta = meta;
  t.header = {"sequence", "index", "t"};
  add_indexed(t.header, "m14_", kM14Size);
  add_indexed(t.header, "m56_", kM56Size);
  add_indexed(t.header, "ego_", kEgoSize);
  add_indexed(t.header, "target_s_", kDriveletLength);
  add_indexed(t.header, "target_v_", kDriveletLength);
  t.header.insert(t.header.end(), frame_columns().begin(), frame_columns().end());
  for (const auto& r : rows) {
    std::vector<double> v = {static_cast<double>(r.sequence), static_cast<double>(r.index), r.t};
    v.insert(v.end(), r.window.m14.begin(), r.window.m14.end());
    v.insert(v.end(), r.window.m56.begin(), r.window.m56.end());
    v.insert(v.end(), r.window.ego.begin(), r.window.ego.end());
    v.insert(v.end(), r.targetS.begin(), r.targetS.end());
    v.insert(v.end(), r.targetV.begin(), r.targetV.end());
    auto f = frame_values(r.frame);
    v.insert(v.end(), f.begin(), f.end());
    if (v.size() != t.header.size()) throw FormatError("feature row has the wrong width");
    t.rows.push_back(std::move(v));
  }
  return write_csv(t);
}

std::vector<FeatureRow> feature_rows_from_csv(const std::string& text, Metadata* meta) {
  CsvTable t = parse_csv(text);
  std::size_t first = t.column("m14_0"), m56 = t.column("m56_0"), ego = t.column("ego_0"),
              ts = t.column("target_s_0"), tv = t.column("target_v_0"), fr = t.column(frame_columns().front());
  std::size_t cs = t.column("sequence"), ci = t.column("index"), ct = t.column("t");
  if (t.header.size() != fr + frame_columns().size()) throw FormatError("feature CSV has unexpected columns");
  std::vector<FeatureRow> rows;
  for (const auto& v : t.rows) {
    FeatureRow r;
    r.sequence = static_cast<int>(v[cs]);
    r.index = static_cast<int>(v[ci]);
    r.t = v[ct];
    r.window.m14.assign(v.begin() + first, v.begin() + first + kM14Size);
    r.window.m56.assign(v.begin() + m56, v.begin() + m56 + kM56Size);
    r.window.ego.assign(v.begin() + ego, v.begin() + ego + kEgoSize);
    for (int o = 0; o < kDriveletLength; ++o) {
      r.targetS[o] = v[ts + o];
      r.targetV[o] = v[tv + o];
    }
    r.frame = frame_from_values(v.data() + fr);
    rows.push_back(std::move(r));
  }
  if (meta) *meta = t.meta;
  return rows;
}

std::string predictions_to_csv(const Matrix& predictions, const std::vector<FeatureRow>& rows, const Metadata& meta) {
  if (predictions.rows() != 2 || predictions.cols() != static_cast<Eigen::Index>(rows.size())) {
    throw FormatError("prediction matrix does not match the rows");
  }
  CsvTable t;
  t.meta = meta;
  t.header = {"sequence", "index", "s", "v"};
  for (std::size_t i = 0; i < rows.size(); ++i) {
    auto c = static_cast<Eigen::Index>(i);
    t.rows.push_back({static_cast<double>(rows[i].sequence), static_cast<double>(rows[i].index), predictions(0, c),
                      predictions(1, c)});
  }
  return write_csv(t);
}

std::string truths_to_csv(const std::vector<FeatureRow>& rows, const Metadata& meta) {
  Matrix truth(2, static_cast<Eigen::Index>(rows.size()));
  for (std::size_t i = 0; i < rows.size(); ++i) {
    truth(0, static_cast<Eigen::Index>(i)) = rows[i].targetS[0];
    truth(1, static_cast<Eigen::Index>(i)) = rows[i].targetV[0];
  }
  return predictions_to_csv(truth, rows, meta);
}

std::string read_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw FormatError("cannot open '" + path + "'");
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

void write_file(const std::string& path, const std::string& contents) {
  namespace fs = std::filesystem;
  fs::path target(path);
  if (target.has_parent_path()) fs::create_directories(target.parent_path());
  fs::path tmp = target;
  tmp += ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw FormatError("cannot write '" + path + "'");
    out << contents;
    if (!out) throw FormatError("short write to '" + path + "'");
  }
  fs::rename(tmp, target);
}

}  // namespace drivelab
