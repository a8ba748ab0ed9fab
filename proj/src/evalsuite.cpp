#include "drivelab/evalsuite.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <random>

#include "drivelab/serialization.hpp"

namespace drivelab {

namespace {

constexpr int kMaxIterations = 300;
constexpr double kConvergenceShift = 1e-8;

double uniform01(std::mt19937_64& rng) { return static_cast<double>(rng() >> 11) * 0x1.0p-53; }

double sq_dist(const ManeuverWindow& a, const ManeuverWindow& b) {
  double d = 0.0;
  for (int i = 0; i < kManeuverSize; ++i) d += (a[i] - b[i]) * (a[i] - b[i]);
  return d;
}

int nearest(const std::vector<ManeuverWindow>& centroids, const ManeuverWindow& x) {
  int best = 0;
  double bestD = std::numeric_limits<double>::infinity();
  for (std::size_t c = 0; c < centroids.size(); ++c) {
    double d = sq_dist(centroids[c], x);
    if (d < bestD) {
      bestD = d;
      best = static_cast<int>(c);
    }
  }
  return best;
}

void require_aligned(const Trajectory& pred, const Trajectory& truth) {
  if (pred.s.size() != pred.v.size() || truth.s.size() != truth.v.size()) {
    throw EvalError("steering and speed series differ in length");
  }
  if (pred.size() != truth.size()) throw EvalError("predictions and ground truth are not aligned");
  if (pred.size() == 0) throw EvalError("empty evaluation input");
}

}  // namespace

AccuracyMetrics accuracy_metrics(const Trajectory& pred, const Trajectory& truth) {
  require_aligned(pred, truth);
  AccuracyMetrics m;
  for (std::size_t i = 0; i < pred.size(); ++i) {
    m.steering += std::abs(pred.s[i] - truth.s[i]);
    m.speed += std::abs(pred.v[i] - truth.v[i]);
  }
  m.steering /= static_cast<double>(pred.size());
  m.speed /= static_cast<double>(pred.size());
  return m;
}

ComfortMetrics comfort_metrics(const Trajectory& pred, double rate) {
  if (pred.s.size() != pred.v.size()) throw EvalError("steering and speed series differ in length");
  if (pred.size() < 3) throw EvalError("comfort needs at least 3 samples");
  return comfort_metrics(std::vector<Trajectory>{pred}, rate);
}

ComfortMetrics comfort_metrics(const std::vector<Trajectory>& sequences, double rate) {
  if (!(rate > 0.0)) throw EvalError("rate must be positive");
  const double scale = rate * rate;
  ComfortMetrics m;
  std::size_t triples = 0;
  for (const auto& q : sequences) {
    if (q.s.size() != q.v.size()) throw EvalError("steering and speed series differ in length");
    for (std::size_t i = 1; i + 1 < q.size(); ++i) {
      m.lateral += std::abs(q.s[i - 1] - 2.0 * q.s[i] + q.s[i + 1]) * scale;
      m.longitudinal += std::abs(q.v[i - 1] - 2.0 * q.v[i] + q.v[i + 1]) * scale;
      ++triples;
    }
  }
  if (triples == 0) throw EvalError("comfort needs at least 3 consecutive samples");
  m.lateral /= static_cast<double>(triples);
  m.longitudinal /= static_cast<double>(triples);
  return m;
}

ManeuverWindow to_window(const Drivelet& d) {
  if (d.s.size() != static_cast<std::size_t>(kDriveletLength) || d.v.size() != d.s.size()) {
    throw EvalError("a maneuver window needs " + std::to_string(kDriveletLength) + " steps");
  }
  ManeuverWindow w{};
  for (int o = 0; o < kDriveletLength; ++o) {
    w[o] = d.s[o];
    w[kDriveletLength + o] = d.v[o];
  }
  return w;
}

ManeuverWindow ClusterModel::normalize(const ManeuverWindow& w) const {
  ManeuverWindow out{};
  for (int i = 0; i < kManeuverSize; ++i) out[i] = (w[i] - mean[i]) / scale[i];
  return out;
}

int ClusterModel::assign(const ManeuverWindow& w) const { return nearest(centroids, normalize(w)); }

ClusterModel fit_clusters(const std::vector<ManeuverWindow>& human, int k, std::uint64_t seed) {
  if (k < 1) throw EvalError("cluster count must be positive");
  if (human.size() < static_cast<std::size_t>(k)) {
    throw EvalError("need at least " + std::to_string(k) + " windows to fit clusters, got " +
                    std::to_string(human.size()));
  }
  ClusterModel model;
  model.seed = seed;
  const double n = static_cast<double>(human.size());
  for (int i = 0; i < kManeuverSize; ++i) {
    double mu = 0.0;
    for (const auto& w : human) mu += w[i];
    mu /= n;
    double var = 0.0;
    for (const auto& w : human) var += (w[i] - mu) * (w[i] - mu);
    double sd = std::sqrt(var / n);
    model.mean[i] = mu;
    model.scale[i] = sd > 1e-12 ? sd : 1.0;
  }
  std::vector<ManeuverWindow> x;
  x.reserve(human.size());
  for (const auto& w : human) x.push_back(model.normalize(w));

  std::vector<ManeuverWindow> distinct = x;
  std::sort(distinct.begin(), distinct.end());
  distinct.erase(std::unique(distinct.begin(), distinct.end()), distinct.end());
  if (distinct.size() < static_cast<std::size_t>(k)) {
    throw EvalError("only " + std::to_string(distinct.size()) + " distinct windows for " + std::to_string(k) +
                    " clusters");
  }

  // k-means++ seeding.
  std::mt19937_64 rng(seed);
  std::vector<ManeuverWindow>& c = model.centroids;
  c.push_back(x[std::min(x.size() - 1, static_cast<std::size_t>(uniform01(rng) * n))]);
  std::vector<double> d2(x.size());
  for (std::size_t i = 0; i < x.size(); ++i) d2[i] = sq_dist(x[i], c[0]);
  while (c.size() < static_cast<std::size_t>(k)) {
    double total = std::accumulate(d2.begin(), d2.end(), 0.0);
    double target = uniform01(rng) * total;
    std::size_t pick = x.size();
    double cum = 0.0;
    for (std::size_t i = 0; i < x.size(); ++i) {
      if (d2[i] <= 0.0) continue;
      cum += d2[i];
      pick = i;
      if (cum > target) break;
    }
    c.push_back(x[pick]);
    for (std::size_t i = 0; i < x.size(); ++i) d2[i] = std::min(d2[i], sq_dist(x[i], c.back()));
  }

  // Lloyd iterations.
  std::vector<int> label(x.size());
  for (int it = 0; it < kMaxIterations; ++it) {
    model.iterations = it + 1;
    for (std::size_t i = 0; i < x.size(); ++i) label[i] = nearest(c, x[i]);
    std::vector<ManeuverWindow> next(k, ManeuverWindow{});
    std::vector<std::size_t> count(k, 0);
    for (std::size_t i = 0; i < x.size(); ++i) {
      for (int j = 0; j < kManeuverSize; ++j) next[label[i]][j] += x[i][j];
      ++count[label[i]];
    }
    for (int j = 0; j < k; ++j)
      if (count[j] > 0)
        for (auto& v : next[j]) v /= static_cast<double>(count[j]);
    for (int j = 0; j < k; ++j) {
      if (count[j] > 0) continue;
      std::size_t far = x.size();
      double farD = -1.0;
      for (std::size_t i = 0; i < x.size(); ++i) {
        if (count[label[i]] < 2) continue;
        double d = sq_dist(x[i], next[label[i]]);
        if (d > farD) {
          farD = d;
          far = i;
        }
      }
      if (far == x.size()) throw EvalError("cannot re-seed an empty cluster");
      --count[label[far]];
      label[far] = j;
      count[j] = 1;
      next[j] = x[far];
    }
    double shift = 0.0;
    for (int j = 0; j < k; ++j) shift = std::max(shift, std::sqrt(sq_dist(c[j], next[j])));
    c = std::move(next);
    if (shift < kConvergenceShift) break;
  }
  return model;
}

double human_likeness(const ClusterModel& clusters, const std::vector<ManeuverWindow>& model,
                      const std::vector<ManeuverWindow>& human) {
  if (model.size() != human.size()) throw EvalError("model and human windows are not aligned");
  if (model.empty()) throw EvalError("no windows to compare");
  std::size_t same = 0;
  for (std::size_t i = 0; i < model.size(); ++i) same += clusters.assign(model[i]) == clusters.assign(human[i]);
  return 100.0 * static_cast<double>(same) / static_cast<double>(model.size());
}

std::string to_string(Scenario s) {
  switch (s) {
    case Scenario::A: return "A";
    case Scenario::B: return "B";
    case Scenario::C: return "C";
  }
  return "?";
}

Scenario scenario_from_string(const std::string& s) {
  if (s == "A") return Scenario::A;
  if (s == "B") return Scenario::B;
  if (s == "C") return Scenario::C;
  throw EvalError("unknown scenario '" + s + "'");
}

bool in_scenario(const MapFeatureFrame& f, Scenario s) {
  switch (s) {
    case Scenario::A:
      return (f.raw.trafficLight < kScenarioNearM || f.raw.pedestrianCrossing < kScenarioNearM) &&
             f.speedLimit <= 50.0;
    case Scenario::B:
      return f.curvature > kScenarioCurvature && f.speedLimit == 80.0 && f.raw.intersection > kScenarioClearM;
    case Scenario::C:
      return f.raw.intersection < kScenarioIntersectionM;
  }
  return false;
}

std::vector<std::size_t> scenario_filter(const std::vector<MapFeatureFrame>& frames, Scenario s) {
  std::vector<std::size_t> out;
  for (std::size_t i = 0; i < frames.size(); ++i)
    if (in_scenario(frames[i], s)) out.push_back(i);
  return out;
}

std::string speed_limit_bin(const MapFeatureFrame& f) {
  for (int limit : {30, 50, 80, 120})
    if (f.speedLimit == limit) return std::to_string(limit);
  throw EvalError("speed limit " + format_double(f.speedLimit) + " is not one of 30/50/80/120");
}

std::string road_type_bin(const MapFeatureFrame& f) {
  if (f.signedCurvature > kBendCurvature) return "left_bend";
  if (f.signedCurvature < -kBendCurvature) return "right_bend";
  return "straight";
}

std::string intersection_phase_bin(const MapFeatureFrame& f) {
  if (std::min(f.raw.intersection, f.raw.sinceIntersection) <= kInsideIntersectionM) return "inside";
  if (f.raw.intersection < kScenarioIntersectionM) return "approach";
  if (f.raw.sinceIntersection < kScenarioIntersectionM) return "depart";
  return "none";
}

namespace {

struct AttributeSpec {
  std::string name;
  std::vector<std::string> labels;
  std::string (*bin)(const MapFeatureFrame&);
};

const std::vector<AttributeSpec>& attribute_specs() {
  static const std::vector<AttributeSpec> specs = {
      {"speed_limit", {"30", "50", "80", "120"}, speed_limit_bin},
      {"traffic_light_near",
       {"yes", "no"},
       [](const MapFeatureFrame& f) { return std::string(f.raw.trafficLight < kScenarioNearM ? "yes" : "no"); }},
      {"crossing_near",
       {"yes", "no"},
       [](const MapFeatureFrame& f) {
         return std::string(f.raw.pedestrianCrossing < kScenarioNearM ? "yes" : "no");
       }},
      {"road_type", {"left_bend", "straight", "right_bend"}, road_type_bin},
      {"intersection_phase", {"approach", "inside", "depart", "none"}, intersection_phase_bin},
  };
  return specs;
}

DiagnosisTable diagnose_channel(const std::string& channel, const std::vector<bool>& error,
                                const std::vector<MapFeatureFrame>& frames) {
  DiagnosisTable t;
  t.channel = channel;
  t.totalErrors = static_cast<std::size_t>(std::count(error.begin(), error.end(), true));
  for (const auto& spec : attribute_specs()) {
    DiagnosisAttribute a;
    a.name = spec.name;
    for (const auto& l : spec.labels) a.bins.push_back({l, 0, 0, 0.0});
    for (std::size_t i = 0; i < frames.size(); ++i) {
      std::string label = spec.bin(frames[i]);
      auto it = std::find_if(a.bins.begin(), a.bins.end(), [&](const DiagnosisBin& b) { return b.label == label; });
      ++it->samples;
      it->errors += error[i];
    }
    double total = 0.0;
    for (const auto& b : a.bins) total += b.samples ? static_cast<double>(b.errors) / b.samples : 0.0;
    a.noErrors = total == 0.0;
    if (!a.noErrors)
      for (auto& b : a.bins) b.rate = b.samples ? 100.0 * (static_cast<double>(b.errors) / b.samples) / total : 0.0;
    t.attributes.push_back(std::move(a));
  }
  return t;
}

}  // namespace

Diagnosis error_diagnosis(const Trajectory& pred, const Trajectory& truth, const std::vector<MapFeatureFrame>& frames) {
  require_aligned(pred, truth);
  if (frames.size() != pred.size()) throw EvalError("frames are not aligned with predictions");
  std::vector<bool> steer(pred.size()), speed(pred.size());
  for (std::size_t i = 0; i < pred.size(); ++i) {
    steer[i] = std::abs(pred.s[i] - truth.s[i]) > kSteeringErrorDeg;
    speed[i] = std::abs(pred.v[i] - truth.v[i]) > kSpeedErrorKmh;
  }
  return {diagnose_channel("steering", steer, frames), diagnose_channel("speed", speed, frames)};
}

std::vector<ManeuverWindow> human_windows(const std::vector<FeatureRow>& rows) {
  std::vector<ManeuverWindow> out;
  for (std::size_t s : drivelet_starts(rows)) {
    ManeuverWindow w{};
    for (int o = 0; o < kDriveletLength; ++o) {
      w[o] = rows[s].targetS[o];
      w[kDriveletLength + o] = rows[s].targetV[o];
    }
    out.push_back(w);
  }
  return out;
}

MetricsReport evaluate(const Matrix& predictions, const std::vector<FeatureRow>& rows, const ClusterModel& clusters,
                       double rate) {
  if (predictions.rows() != 2 || predictions.cols() != static_cast<Eigen::Index>(rows.size())) {
    throw EvalError("prediction matrix does not match the rows");
  }
  if (rows.empty()) throw EvalError("empty evaluation input");
  MetricsReport r;
  r.rows = rows.size();

  Trajectory pred, truth;
  std::vector<MapFeatureFrame> frames;
  std::vector<Trajectory> sequences;
  for (std::size_t i = 0; i < rows.size(); ++i) {
    auto c = static_cast<Eigen::Index>(i);
    pred.s.push_back(predictions(0, c));
    pred.v.push_back(predictions(1, c));
    truth.s.push_back(rows[i].targetS[0]);
    truth.v.push_back(rows[i].targetV[0]);
    frames.push_back(rows[i].frame);
    bool continues = i > 0 && rows[i].sequence == rows[i - 1].sequence && rows[i].index == rows[i - 1].index + 1;
    if (!continues) sequences.emplace_back();
    sequences.back().s.push_back(predictions(0, c));
    sequences.back().v.push_back(predictions(1, c));
  }
  r.accuracy = accuracy_metrics(pred, truth);
  r.comfort = comfort_metrics(sequences, rate);

  std::vector<std::size_t> starts = drivelet_starts(rows);
  std::vector<ManeuverWindow> model, human;
  for (std::size_t s : starts) {
    ManeuverWindow m{}, h{};
    for (int o = 0; o < kDriveletLength; ++o) {
      auto c = static_cast<Eigen::Index>(s + o);
      m[o] = predictions(0, c);
      m[kDriveletLength + o] = predictions(1, c);
      h[o] = rows[s].targetS[o];
      h[kDriveletLength + o] = rows[s].targetV[o];
    }
    model.push_back(m);
    human.push_back(h);
  }
  r.windows = starts.size();
  if (!starts.empty()) r.humanLikeness = human_likeness(clusters, model, human);

  for (Scenario sc : {Scenario::A, Scenario::B, Scenario::C}) {
    ScenarioMetrics& m = r.scenarios[static_cast<int>(sc)];
    Trajectory sp, st;
    for (std::size_t i = 0; i < rows.size(); ++i) {
      if (!in_scenario(frames[i], sc)) continue;
      sp.s.push_back(pred.s[i]);
      sp.v.push_back(pred.v[i]);
      st.s.push_back(truth.s[i]);
      st.v.push_back(truth.v[i]);
    }
    m.rows = sp.size();
    if (m.rows > 0) m.accuracy = accuracy_metrics(sp, st);
    std::vector<ManeuverWindow> mw, hw;
    for (std::size_t j = 0; j < starts.size(); ++j) {
      if (!in_scenario(frames[starts[j]], sc)) continue;
      mw.push_back(model[j]);
      hw.push_back(human[j]);
    }
    m.windows = mw.size();
    if (!mw.empty()) m.humanLikeness = human_likeness(clusters, mw, hw);
  }
  r.diagnosis = error_diagnosis(pred, truth, frames);
  return r;
}

namespace {

void append_table(std::string& out, const DiagnosisTable& t) {
  const std::string prefix = "diagnosis." + t.channel + ".";
  out += prefix + "total_errors=" + std::to_string(t.totalErrors) + "\n";
  for (const auto& a : t.attributes) {
    if (a.noErrors) {
      out += prefix + a.name + "=no errors\n";
      continue;
    }
    for (const auto& b : a.bins) out += prefix + a.name + "." + b.label + "=" + format_double(b.rate) + "\n";
  }
}

}  // namespace

std::string report_to_text(const MetricsReport& r) {
  std::string out = "# format=drivelab.metrics\n";
  out += "rows=" + std::to_string(r.rows) + "\n";
  out += "windows=" + std::to_string(r.windows) + "\n";
  out += "A_s=" + format_double(r.accuracy.steering) + "\n";
  out += "A_v=" + format_double(r.accuracy.speed) + "\n";
  out += "C_lat=" + format_double(r.comfort.lateral) + "\n";
  out += "C_lon=" + format_double(r.comfort.longitudinal) + "\n";
  out += "H=" + format_double(r.humanLikeness) + "\n";
  for (Scenario sc : {Scenario::A, Scenario::B, Scenario::C}) {
    const ScenarioMetrics& m = r.scenarios[static_cast<int>(sc)];
    const std::string p = "scenario." + to_string(sc) + ".";
    out += p + "rows=" + std::to_string(m.rows) + "\n";
    out += p + "A_s=" + format_double(m.accuracy.steering) + "\n";
    out += p + "A_v=" + format_double(m.accuracy.speed) + "\n";
    out += p + "H=" + format_double(m.humanLikeness) + "\n";
  }
  append_table(out, r.diagnosis.steering);
  append_table(out, r.diagnosis.speed);
  return out;
}

std::string diagnosis_to_csv(const Diagnosis& d) {
  std::string out = "channel,attribute,bin,samples,errors,relative_error_rate\n";
  for (const DiagnosisTable* table : {&d.steering, &d.speed})
    for (const auto& a : table->attributes)
      for (const auto& b : a.bins)
        out += table->channel + "," + a.name + "," + b.label + "," + std::to_string(b.samples) + "," +
               std::to_string(b.errors) + "," + (a.noErrors ? "" : format_double(b.rate)) + "\n";
  return out;
}

std::string diagnosis_to_svg(const DiagnosisTable& t) {
  constexpr int kBarW = 28, kGap = 6, kGroupGap = 30, kH = 200, kTop = 40, kLeft = 40;
  int bars = 0;
  for (const auto& a : t.attributes) bars += static_cast<int>(a.bins.size());
  int width = kLeft + bars * (kBarW + kGap) + static_cast<int>(t.attributes.size()) * kGroupGap + 20;
  int height = kTop + kH + 90;
  std::string out = "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" + std::to_string(width) + "\" height=\"" +
                    std::to_string(height) + "\" font-family=\"sans-serif\" font-size=\"10\">\n";
  out += "<text x=\"" + std::to_string(kLeft) + "\" y=\"20\" font-size=\"14\">Relative error rate (%), " + t.channel +
         "</text>\n";
  out += "<line x1=\"" + std::to_string(kLeft) + "\" y1=\"" + std::to_string(kTop + kH) + "\" x2=\"" +
         std::to_string(width - 10) + "\" y2=\"" + std::to_string(kTop + kH) + "\" stroke=\"black\"/>\n";
  int x = kLeft;
  for (const auto& a : t.attributes) {
    int groupStart = x;
    for (const auto& b : a.bins) {
      int h = static_cast<int>(std::lround(b.rate / 100.0 * kH));
      out += "<rect x=\"" + std::to_string(x) + "\" y=\"" + std::to_string(kTop + kH - h) + "\" width=\"" +
             std::to_string(kBarW) + "\" height=\"" + std::to_string(h) + "\" fill=\"steelblue\"/>\n";
      out += "<text x=\"" + std::to_string(x) + "\" y=\"" + std::to_string(kTop + kH + 12) + "\">" + b.label +
             "</text>\n";
      x += kBarW + kGap;
    }
    out += "<text x=\"" + std::to_string(groupStart) + "\" y=\"" + std::to_string(kTop + kH + 30) + "\">" + a.name +
           (a.noErrors ? " (no errors)" : "") + "</text>\n";
    x += kGroupGap;
  }
  return out + "</svg>\n";
}

}  // namespace drivelab
