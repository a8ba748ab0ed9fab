#include "drivelab/pipeline.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <functional>
#include <random>
#include <sstream>

#include "json.hpp"

#include "drivelab/mapfeatures.hpp"

namespace drivelab {

namespace {

using nlohmann::json;

struct Field {
  std::string name;
  std::function<json(const RunConfig&)> get;
  std::function<void(RunConfig&, const json&)> set;
};

template <typename T>
T json_as(const json& j, const std::string& name) {
  if constexpr (std::is_same_v<T, bool>) {
    if (!j.is_boolean()) throw ConfigError("field '" + name + "' must be a boolean");
    return j.get<bool>();
  } else if constexpr (std::is_same_v<T, std::string>) {
    if (!j.is_string()) throw ConfigError("field '" + name + "' must be a string");
    return j.get<std::string>();
  } else if constexpr (std::is_integral_v<T>) {
    if (!j.is_number_integer()) throw ConfigError("field '" + name + "' must be an integer");
    if constexpr (std::is_unsigned_v<T>) {
      if (j.is_number_unsigned()) return j.get<T>();
      if (j.get<long long>() < 0) throw ConfigError("field '" + name + "' must be non-negative");
    }
    return j.get<T>();
  } else {
    if (!j.is_number()) throw ConfigError("field '" + name + "' must be a number");
    return j.get<T>();
  }
}

template <typename T>
Field field(std::string name, T RunConfig::*member) {
  return {name, [member](const RunConfig& c) { return json(c.*member); },
          [member, name](RunConfig& c, const json& j) { c.*member = json_as<T>(j, name); }};
}

const std::vector<Field>& fields() {
  static const std::vector<Field> all = {
      field("seed", &RunConfig::seed),
      field("intersections", &RunConfig::intersections),
      field("urban_fraction", &RunConfig::urbanFraction),
      field("routes", &RunConfig::routes),
      field("legs_per_route", &RunConfig::legsPerRoute),
      field("gps_sigma", &RunConfig::gpsSigma),
      field("hmm_beta", &RunConfig::hmmBeta),
      field("hmm_radius", &RunConfig::hmmRadius),
      field("hmm_candidates", &RunConfig::hmmCandidates),
      field("test_fraction", &RunConfig::testFraction),
      field("drivelet_length", &RunConfig::driveletLength),
      field("ego_frames", &RunConfig::egoFrames),
      field("lambda", &RunConfig::lambda),
      field("zeta1", &RunConfig::zeta1),
      field("zeta2", &RunConfig::zeta2),
      field("batch", &RunConfig::batch),
      field("epochs", &RunConfig::epochs),
      field("lr", &RunConfig::lr),
      field("rate", &RunConfig::rate),
      field("use_map", &RunConfig::useMap),
      field("clusters", &RunConfig::clusters),
      field("out_dir", &RunConfig::outDir),
  };
  return all;
}

const Field& find_field(const std::string& name) {
  for (const auto& f : fields()) {
    if (f.name == name) return f;
  }
  throw ConfigError("unknown config field '" + name + "'");
}

std::string subset_json(const RunConfig& cfg, const std::vector<std::string>& names) {
  json j = json::object();
  for (const auto& n : names) j[n] = find_field(n).get(cfg);
  return j.dump();
}

std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

template <typename F>
auto run_stage(const std::string& stage, F&& f) -> decltype(f()) {
  try {
    return f();
  } catch (const ConfigError&) {
    throw;
  } catch (const StageError&) {
    throw;
  } catch (const std::exception& e) {
    throw StageError(stage, e.what());
  }
}

std::string stage_name(Stage s) {
  switch (s) {
    case Stage::World: return "world";
    case Stage::Data: return "data";
    case Stage::Model: return "model";
    case Stage::Report: return "report";
  }
  return "unknown";
}

}  // namespace

void RunConfig::validate() const {
  auto fail = [](const std::string& name, const std::string& why) { throw ConfigError(name + ": " + why); };
  if (intersections < 4) fail("intersections", "must be at least 4");
  if (!(urbanFraction >= 0.0 && urbanFraction <= 1.0)) fail("urban_fraction", "must lie in [0, 1]");
  if (routes < 2) fail("routes", "must be at least 2");
  if (legsPerRoute < 1) fail("legs_per_route", "must be at least 1");
  if (!(gpsSigma > 0.0)) fail("gps_sigma", "must be positive");
  if (!(hmmBeta > 0.0)) fail("hmm_beta", "must be positive");
  if (!(hmmRadius > 0.0)) fail("hmm_radius", "must be positive");
  if (hmmCandidates < 1) fail("hmm_candidates", "must be at least 1");
  if (!(testFraction > 0.0 && testFraction < 1.0)) fail("test_fraction", "must lie in (0, 1)");
  if (driveletLength != kDriveletLength) fail("drivelet_length", "must be " + std::to_string(kDriveletLength));
  if (egoFrames != kEgoFrames) fail("ego_frames", "must be " + std::to_string(kEgoFrames));
  if (!(lambda >= 0.0)) fail("lambda", "must be non-negative");
  if (!(zeta1 >= 0.0)) fail("zeta1", "must be non-negative");
  if (!(zeta2 >= 0.0)) fail("zeta2", "must be non-negative");
  if (batch < 1) fail("batch", "must be at least 1");
  if (epochs < 1) fail("epochs", "must be at least 1");
  if (!(lr > 0.0) || !std::isfinite(lr)) fail("lr", "must be positive");
  if (rate != 10.0) fail("rate", "must be 10");
  if (clusters < 1) fail("clusters", "must be at least 1");
  if (outDir.empty()) fail("out_dir", "must not be empty");
}

const std::vector<std::string>& config_fields() {
  static const std::vector<std::string> names = [] {
    std::vector<std::string> out;
    for (const auto& f : fields()) out.push_back(f.name);
    return out;
  }();
  return names;
}

RunConfig config_from_json(const std::string& text) {
  json j;
  try {
    j = json::parse(text);
  } catch (const json::parse_error& e) {
    throw ConfigError(std::string("config is not valid JSON: ") + e.what());
  }
  if (!j.is_object()) throw ConfigError("config must be a JSON object");
  RunConfig cfg;
  for (const auto& [key, value] : j.items()) find_field(key).set(cfg, value);
  return cfg;
}

std::string config_to_json(const RunConfig& cfg) {
  json j = json::object();
  for (const auto& f : fields()) j[f.name] = f.get(cfg);
  std::string out = "{\n";
  const auto& names = config_fields();
  for (std::size_t i = 0; i < names.size(); ++i) {
    out += "  \"" + names[i] + "\": " + j[names[i]].dump() + (i + 1 < names.size() ? ",\n" : "\n");
  }
  return out + "}\n";
}

void set_config_field(RunConfig& cfg, const std::string& name, const std::string& value) {
  const Field& f = find_field(name);
  json current = f.get(cfg);
  json parsed;
  if (current.is_string()) {
    parsed = value;
  } else {
    parsed = json::parse(value, nullptr, false);
    if (parsed.is_discarded()) throw ConfigError(name + ": cannot parse '" + value + "'");
    if (current.is_number_float() && parsed.is_number()) parsed = parsed.get<double>();
    if (current.is_boolean() && parsed.is_number_integer()) {
      long long b = parsed.get<long long>();
      if (b != 0 && b != 1) throw ConfigError(name + ": expected true or false");
      parsed = b == 1;
    }
  }
  f.set(cfg, parsed);
}

std::string fnv1a_hex(const std::string& text) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char c : text) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(h));
  return buf;
}

std::string config_hash(const RunConfig& cfg) {
  std::vector<std::string> names;
  for (const auto& n : config_fields()) {
    if (n != "out_dir") names.push_back(n);
  }
  return fnv1a_hex(subset_json(cfg, names));
}

std::string stage_hash(const RunConfig& cfg, Stage stage) {
  std::vector<std::string> names = {"seed", "intersections", "urban_fraction"};
  if (stage != Stage::World) {
    for (const char* n : {"routes", "legs_per_route", "gps_sigma", "hmm_beta", "hmm_radius", "hmm_candidates",
                          "test_fraction", "rate"}) {
      names.push_back(n);
    }
  }
  if (stage == Stage::Model || stage == Stage::Report) {
    for (const char* n : {"drivelet_length", "ego_frames", "lambda", "zeta1", "zeta2", "batch", "epochs", "lr",
                          "use_map"}) {
      names.push_back(n);
    }
  }
  if (stage == Stage::Report) names.push_back("clusters");
  return fnv1a_hex(stage_name(stage) + subset_json(cfg, names));
}

StageSeeds stage_seeds(std::uint64_t master) {
  return {master + 101, master + 202, master + 303, master + 404, master + 505, master + 606, master + 707};
}

HmmParams hmm_params(const RunConfig& cfg) {
  HmmParams p;
  p.emissionSigma = cfg.gpsSigma;
  p.transitionBeta = cfg.hmmBeta;
  p.candidateRadius = cfg.hmmRadius;
  p.candidatesPerSample = static_cast<std::size_t>(cfg.hmmCandidates);
  return p;
}

TrainConfig train_config(const RunConfig& cfg) {
  TrainConfig t;
  t.weights.lambda = cfg.lambda;
  t.weights.zeta1 = cfg.zeta1;
  t.weights.zeta2 = cfg.zeta2;
  t.weights.rate = cfg.rate;
  t.epochs = cfg.epochs;
  t.batchSize = cfg.batch;
  t.lr = cfg.lr;
  t.seed = stage_seeds(cfg.seed).train;
  t.useMap = cfg.useMap;
  return t;
}

RoadNetwork build_world(const RunConfig& cfg) {
  return generate_network(stage_seeds(cfg.seed).world, cfg.intersections, cfg.urbanFraction);
}

std::vector<RouteData> build_routes(const RoadNetwork& net, const RunConfig& cfg) {
  StageSeeds s = stage_seeds(cfg.seed);
  std::vector<RouteData> out;
  for (int r = 0; r < cfg.routes; ++r) {
    auto salt = static_cast<std::uint64_t>(r);
    RouteData d;
    d.route = random_route(net, splitmix64(s.routes + (salt << 20)), cfg.legsPerRoute);
    d.log = simulate_reference_driver(net, d.route, cfg.rate, splitmix64(s.driver + (salt << 20)));
    d.gps = corrupt_gps(d.log, cfg.gpsSigma, splitmix64(s.gps + (salt << 20)));
    out.push_back(std::move(d));
  }
  return out;
}

std::vector<FeatureRow> route_features(const RoadNetwork& net, const RouteData& data, int sequence) {
  RouteGeometry geo(net, data.route);
  std::vector<double> offsets = route_offsets_from_match(geo, data.matched);
  std::vector<MapFeatureFrame> frames;
  frames.reserve(offsets.size());
  for (double o : offsets) frames.push_back(extract_frame(geo, o));
  return build_rows(sequence, frames, data.log);
}

Split split_routes(int count, const RunConfig& cfg) {
  if (count < 2) throw ConfigError("routes: at least 2 routes are needed for a split");
  std::vector<int> order(static_cast<std::size_t>(count));
  for (int i = 0; i < count; ++i) order[static_cast<std::size_t>(i)] = i;
  std::mt19937_64 rng(stage_seeds(cfg.seed).split);
  for (std::size_t i = order.size() - 1; i > 0; --i) {
    std::size_t j = static_cast<std::size_t>(rng() % (i + 1));
    std::swap(order[i], order[j]);
  }
  auto nTest = static_cast<std::size_t>(std::lround(count * cfg.testFraction));
  nTest = std::clamp<std::size_t>(nTest, 1, order.size() - 1);
  Split s;
  s.test.assign(order.begin(), order.begin() + static_cast<std::ptrdiff_t>(nTest));
  s.train.assign(order.begin() + static_cast<std::ptrdiff_t>(nTest), order.end());
  std::sort(s.test.begin(), s.test.end());
  std::sort(s.train.begin(), s.train.end());
  return s;
}

Dataset build_dataset(const RunConfig& cfg) {
  cfg.validate();
  Dataset d;
  d.net = run_stage("world", [&] { return build_world(cfg); });
  d.routes = run_stage("drive", [&] { return build_routes(d.net, cfg); });
  run_stage("match", [&] {
    HmmParams p = hmm_params(cfg);
    for (auto& r : d.routes) r.matched = viterbi_match(d.net, r.gps, p);
    return 0;
  });
  d.split = split_routes(cfg.routes, cfg);
  run_stage("features", [&] {
    for (int i : d.split.train) {
      auto rows = route_features(d.net, d.routes[static_cast<std::size_t>(i)], i);
      d.trainRows.insert(d.trainRows.end(), rows.begin(), rows.end());
    }
    for (int i : d.split.test) {
      auto rows = route_features(d.net, d.routes[static_cast<std::size_t>(i)], i);
      d.testRows.insert(d.testRows.end(), rows.begin(), rows.end());
    }
    if (d.trainRows.empty() || d.testRows.empty()) throw FeatureError("a split side has no complete rows");
    return 0;
  });
  return d;
}

ClusterModel reference_clusters(const std::vector<FeatureRow>& trainRows, const RunConfig& cfg) {
  return run_stage("clusters",
                   [&] { return fit_clusters(human_windows(trainRows), cfg.clusters, stage_seeds(cfg.seed).clusters); });
}

Evaluation evaluate_model(const Generator& g, const std::vector<FeatureRow>& rows, const ClusterModel& clusters,
                          const RunConfig& cfg) {
  return run_stage("eval", [&] {
    Evaluation e;
    e.predictions = predict_rows(g, rows);
    e.report = evaluate(e.predictions, rows, clusters, cfg.rate);
    return e;
  });
}

std::string train_log_to_csv(const std::vector<TrainLogRow>& log, const Metadata& meta) {
  CsvTable t;
  t.meta = meta;
  t.header = {"batch", "L_acc", "L_com", "L_hum", "D_acc"};
  for (const auto& r : log) {
    t.rows.push_back({static_cast<double>(r.batch), r.lossAccuracy, r.lossComfort, r.lossHuman,
                      r.discriminatorAccuracy});
  }
  return write_csv(t);
}

Metadata artifact_meta(const RunConfig& cfg, Stage stage) {
  return {{"config_hash", config_hash(cfg)}, {"stage_hash", stage_hash(cfg, stage)}};
}

void check_artifact(const Metadata& meta, const RunConfig& cfg, Stage stage, const std::string& what) {
  auto it = meta.find("stage_hash");
  if (it == meta.end()) throw ConfigError(what + " carries no stage_hash");
  std::string want = stage_hash(cfg, stage);
  if (it->second != want) {
    throw ConfigError(what + " was produced under a different " + stage_name(stage) + " configuration (stage_hash " +
                      it->second + ", expected " + want + ")");
  }
}

Metadata read_header(const std::string& text) {
  Metadata meta;
  std::size_t first = text.find_first_not_of(" \t\r\n");
  if (first != std::string::npos && text[first] == '{') {
    json j = json::parse(text, nullptr, false);
    if (j.is_object()) {
      for (const char* k : {"config_hash", "stage_hash"}) {
        if (j.contains(k) && j[k].is_string()) meta[k] = j[k].get<std::string>();
      }
    }
    return meta;
  }
  std::istringstream in(text);
  std::string line;
  while (std::getline(in, line) && line.rfind("# ", 0) == 0) {
    auto eq = line.find('=');
    if (eq != std::string::npos) meta[line.substr(2, eq - 2)] = line.substr(eq + 1);
  }
  return meta;
}

std::string prepend_meta(const Metadata& meta, const std::string& body) {
  std::string out;
  for (const auto& [k, v] : meta) out += "# " + k + "=" + v + "\n";
  return out + body;
}

std::string json_with_meta(const std::string& text, const Metadata& meta) {
  json j = json::parse(text);
  for (const auto& [k, v] : meta) j[k] = v;
  return j.dump(1) + "\n";
}

std::string numbered_path(const std::string& dir, const std::string& stem, int i, const std::string& ext) {
  char buf[16];
  std::snprintf(buf, sizeof buf, "%03d", i);
  return dir + "/" + stem + "_" + buf + ext;
}

std::vector<Trajectory> sequences_from_csv(const std::string& text) {
  CsvTable t = parse_csv(text);
  std::size_t cq = t.column("sequence"), ci = t.column("index"), cs = t.column("s"), cv = t.column("v");
  std::vector<Trajectory> out;
  for (std::size_t r = 0; r < t.rows.size(); ++r) {
    const auto& row = t.rows[r];
    bool cont = r > 0 && row[cq] == t.rows[r - 1][cq] && row[ci] == t.rows[r - 1][ci] + 1;
    if (!cont) out.emplace_back();
    out.back().s.push_back(row[cs]);
    out.back().v.push_back(row[cv]);
  }
  return out;
}

PipelineResult run_pipeline(const RunConfig& cfg) {
  cfg.validate();
  const std::string& out = cfg.outDir;
  PipelineResult res;
  res.data = build_dataset(cfg);
  const Dataset& d = res.data;

  run_stage("write", [&] {
    write_file(out + "/config.json", config_to_json(cfg));
    write_file(out + "/world.json", json_with_meta(network_to_json(d.net), artifact_meta(cfg, Stage::World)));
    Metadata dm = artifact_meta(cfg, Stage::Data);
    for (std::size_t i = 0; i < d.routes.size(); ++i) {
      int n = static_cast<int>(i);
      const RouteData& r = d.routes[i];
      write_file(numbered_path(out + "/data", "route", n, ".json"), json_with_meta(route_to_json(r.route), dm));
      write_file(numbered_path(out + "/data", "log", n, ".csv"), drive_log_to_csv(r.log, dm));
      write_file(numbered_path(out + "/data", "gps", n, ".csv"), gps_trace_to_csv(r.gps, dm));
      write_file(numbered_path(out + "/matched", "matched", n, ".csv"), matched_path_to_csv(r.matched, dm));
    }
    write_file(out + "/features/train.csv", feature_rows_to_csv(d.trainRows, dm));
    write_file(out + "/features/test.csv", feature_rows_to_csv(d.testRows, dm));
    return 0;
  });

  res.model = run_stage("train", [&] { return train(d.trainRows, train_config(cfg)); });
  Metadata mm = artifact_meta(cfg, Stage::Model);
  run_stage("write", [&] {
    write_file(out + "/model/model.ckpt",
               prepend_meta(mm, checkpoint_to_text(res.model.generator, res.model.discriminator)));
    write_file(out + "/model/train_log.csv", train_log_to_csv(res.model.log, mm));
    return 0;
  });

  ClusterModel clusters = reference_clusters(d.trainRows, cfg);
  res.evaluation = evaluate_model(res.model.generator, d.testRows, clusters, cfg);
  Metadata rm = artifact_meta(cfg, Stage::Report);
  res.reportText = prepend_meta(rm, report_to_text(res.evaluation.report));
  run_stage("write", [&] {
    write_file(out + "/report/metrics.txt", res.reportText);
    write_file(out + "/report/diagnosis.csv", prepend_meta(rm, diagnosis_to_csv(res.evaluation.report.diagnosis)));
    write_file(out + "/report/diagnosis_steering.svg", diagnosis_to_svg(res.evaluation.report.diagnosis.steering));
    write_file(out + "/report/diagnosis_speed.svg", diagnosis_to_svg(res.evaluation.report.diagnosis.speed));
    write_file(out + "/report/predictions.csv", predictions_to_csv(res.evaluation.predictions, d.testRows, rm));
    write_file(out + "/report/truths.csv", truths_to_csv(d.testRows, artifact_meta(cfg, Stage::Data)));
    return 0;
  });
  return res;
}

std::vector<Variant> parse_variants(const std::string& spec) {
  std::vector<Variant> out;
  std::istringstream in(spec);
  std::string token;
  while (std::getline(in, token, ',')) {
    if (token.empty()) throw ConfigError("variants: empty variant name");
    Variant v;
    v.name = token;
    if (token != "none") {
      std::istringstream parts(token);
      std::string part;
      while (std::getline(parts, part, '+')) {
        if (part == "map") {
          v.map = true;
        } else if (part == "comfort") {
          v.comfort = true;
        } else if (part == "adversarial") {
          v.adversarial = true;
        } else {
          throw ConfigError("variants: unknown component '" + part + "' in '" + token + "'");
        }
      }
    }
    out.push_back(v);
  }
  if (out.empty()) throw ConfigError("variants: no variants given");
  return out;
}

RunConfig variant_config(const RunConfig& base, const Variant& v) {
  RunConfig c = base;
  const RunConfig defaults;
  c.useMap = v.map;
  c.zeta1 = v.comfort ? (base.zeta1 > 0.0 ? base.zeta1 : defaults.zeta1) : 0.0;
  c.zeta2 = v.adversarial ? (base.zeta2 > 0.0 ? base.zeta2 : defaults.zeta2) : 0.0;
  return c;
}

std::vector<AblationRow> ablate(const Dataset& data, const RunConfig& base, const std::vector<Variant>& variants) {
  ClusterModel clusters = reference_clusters(data.trainRows, base);
  std::vector<AblationRow> out;
  for (const auto& v : variants) {
    RunConfig c = variant_config(base, v);
    TrainedModel m = run_stage("train", [&] { return train(data.trainRows, train_config(c)); });
    out.push_back({v, evaluate_model(m.generator, data.testRows, clusters, c).report});
  }
  return out;
}

std::string ablation_to_csv(const std::vector<AblationRow>& rows, const Metadata& meta) {
  std::string out = prepend_meta(meta, "");
  out += "variant,map,comfort,adversarial,A_s,A_v,C_lat,C_lon,H";
  for (const char* s : {"A", "B", "C"}) {
    out += std::string(",") + s + ".rows," + s + ".A_s," + s + ".A_v," + s + ".H";
  }
  out += "\n";
  for (const auto& r : rows) {
    const MetricsReport& m = r.report;
    out += r.variant.name + "," + (r.variant.map ? "1" : "0") + "," + (r.variant.comfort ? "1" : "0") + "," +
           (r.variant.adversarial ? "1" : "0") + "," + format_double(m.accuracy.steering) + "," +
           format_double(m.accuracy.speed) + "," + format_double(m.comfort.lateral) + "," +
           format_double(m.comfort.longitudinal) + "," + format_double(m.humanLikeness);
    for (const auto& s : m.scenarios) {
      out += "," + std::to_string(s.rows) + "," + format_double(s.accuracy.steering) + "," +
             format_double(s.accuracy.speed) + "," + format_double(s.humanLikeness);
    }
    out += "\n";
  }
  return out;
}

}  // namespace drivelab
