#include "drivelab/pidbaseline.hpp"

#include <algorithm>
#include <cmath>

#include "drivelab/roadworld.hpp"
#include "drivelab/serialization.hpp"

namespace drivelab {

namespace {

struct ChannelResult {
  double comfort = 0.0;   // C for this channel
  double accuracy = 0.0;  // mean absolute error for this channel
};

bool continues(const std::vector<FeatureRow>& rows, std::size_t i) {
  return i > 0 && rows[i].sequence == rows[i - 1].sequence && rows[i].index == rows[i - 1].index + 1;
}

// Comfort and accuracy of one channel over all sequences after filtering.
ChannelResult evaluate_channel(const std::vector<std::vector<double>>& preds,
                               const std::vector<std::vector<double>>& truths, const ChannelGains& g, double rate,
                               double lo, double hi) {
  const double scale = rate * rate;
  ChannelResult r;
  std::size_t triples = 0, samples = 0;
  for (std::size_t q = 0; q < preds.size(); ++q) {
    std::vector<double> y = pid_filter(preds[q], g, rate, lo, hi);
    for (std::size_t i = 0; i < y.size(); ++i) r.accuracy += std::abs(y[i] - truths[q][i]);
    for (std::size_t i = 1; i + 1 < y.size(); ++i) r.comfort += std::abs(y[i - 1] - 2.0 * y[i] + y[i + 1]) * scale;
    samples += y.size();
    triples += y.size() >= 2 ? y.size() - 2 : 0;
  }
  r.accuracy /= static_cast<double>(samples);
  r.comfort /= static_cast<double>(triples);
  return r;
}

}  // namespace

std::vector<double> pid_filter(const std::vector<double>& r, const ChannelGains& g, double rate, double lo, double hi) {
  if (g.kp < 0 || g.ki < 0 || g.kd < 0) throw PidError("PID gains must be non-negative");
  if (!(rate > 0.0)) throw PidError("rate must be positive");
  std::vector<double> y;
  if (r.empty()) return y;
  const double dt = 1.0 / rate;
  y.reserve(r.size());
  y.push_back(std::clamp(r[0], lo, hi));
  double integral = 0.0, prevError = 0.0;
  for (std::size_t n = 1; n < r.size(); ++n) {
    double e = r[n] - y[n - 1];
    integral += e;
    double u = g.kp * e + g.ki * dt * integral + g.kd * (e - prevError) / dt;
    prevError = e;
    y.push_back(std::clamp(y[n - 1] + u, lo, hi));
  }
  return y;
}

Trajectory pid_smooth(const Trajectory& preds, const PidGains& gains, double rate) {
  if (preds.s.empty() || preds.s.size() != preds.v.size()) {
    throw PidError("PID input must be a nonempty aligned series");
  }
  return {pid_filter(preds.s, gains.steering, rate, -kMaxSteeringDeg, kMaxSteeringDeg),
          pid_filter(preds.v, gains.speed, rate, 0.0, kMaxSpeedKmh)};
}

std::vector<ChannelGains> PidGrid::combinations() const {
  std::vector<ChannelGains> out;
  for (double p : kp)
    for (double i : ki)
      for (double d : kd) out.push_back({p, i, d});
  return out;
}

TuneResult grid_tune(const std::vector<Trajectory>& preds, const std::vector<Trajectory>& truths,
                     const ComfortMetrics& target, const PidGrid& grid, double rate) {
  if (!(target.lateral > 0.0) || !(target.longitudinal > 0.0)) throw PidError("comfort targets must be positive");
  std::vector<ChannelGains> combos = grid.combinations();
  if (combos.empty()) throw PidError("empty gain grid");
  if (preds.empty() || preds.size() != truths.size()) throw PidError("predictions and ground truth are not aligned");
  std::vector<std::vector<double>> ps, pv, ts, tv;
  for (std::size_t q = 0; q < preds.size(); ++q) {
    if (preds[q].size() == 0 || preds[q].size() != truths[q].size()) {
      throw PidError("predictions and ground truth are not aligned");
    }
    ps.push_back(preds[q].s);
    pv.push_back(preds[q].v);
    ts.push_back(truths[q].s);
    tv.push_back(truths[q].v);
  }
  ComfortMetrics raw = comfort_metrics(preds, rate);

  // Each channel depends only on its own gains, so per-channel results are cached.
  std::vector<ChannelResult> steer, speed;
  for (const auto& g : combos) {
    steer.push_back(evaluate_channel(ps, ts, g, rate, -kMaxSteeringDeg, kMaxSteeringDeg));
    speed.push_back(evaluate_channel(pv, tv, g, rate, 0.0, kMaxSpeedKmh));
  }

  std::size_t bestS = 0, bestV = 0;
  double bestObj = 0.0, bestAs = 0.0;
  bool first = true;
  for (std::size_t a = 0; a < combos.size(); ++a) {
    for (std::size_t b = 0; b < combos.size(); ++b) {
      double obj = std::abs(steer[a].comfort - target.lateral) + std::abs(speed[b].comfort - target.longitudinal);
      double as = steer[a].accuracy;
      if (first || obj < bestObj || (obj == bestObj && as < bestAs)) {
        first = false;
        bestObj = obj;
        bestAs = as;
        bestS = a;
        bestV = b;
      }
    }
  }

  TuneResult r;
  r.gains = {combos[bestS], combos[bestV]};
  r.objective = bestObj;
  r.accuracy = {steer[bestS].accuracy, speed[bestV].accuracy};
  r.comfort = {steer[bestS].comfort, speed[bestV].comfort};
  r.smoothed = r.comfort.lateral <= raw.lateral && r.comfort.longitudinal <= raw.longitudinal;
  return r;
}

void split_sequences(const Matrix& predictions, const std::vector<FeatureRow>& rows, std::vector<Trajectory>& preds,
                     std::vector<Trajectory>& truths) {
  if (predictions.rows() != 2 || predictions.cols() != static_cast<Eigen::Index>(rows.size())) {
    throw PidError("prediction matrix does not match the rows");
  }
  preds.clear();
  truths.clear();
  for (std::size_t i = 0; i < rows.size(); ++i) {
    if (!continues(rows, i)) {
      preds.emplace_back();
      truths.emplace_back();
    }
    auto c = static_cast<Eigen::Index>(i);
    preds.back().s.push_back(predictions(0, c));
    preds.back().v.push_back(predictions(1, c));
    truths.back().s.push_back(rows[i].targetS[0]);
    truths.back().v.push_back(rows[i].targetV[0]);
  }
}

Matrix smooth_predictions(const Matrix& predictions, const std::vector<FeatureRow>& rows, const PidGains& gains,
                          double rate) {
  std::vector<Trajectory> preds, truths;
  split_sequences(predictions, rows, preds, truths);
  Matrix out(2, predictions.cols());
  Eigen::Index c = 0;
  for (const auto& q : preds) {
    Trajectory y = pid_smooth(q, gains, rate);
    for (std::size_t i = 0; i < y.size(); ++i, ++c) {
      out(0, c) = y.s[i];
      out(1, c) = y.v[i];
    }
  }
  return out;
}

std::string tune_result_to_text(const TuneResult& r) {
  std::string out = "# format=drivelab.pid\n";
  out += "steering.kp=" + format_double(r.gains.steering.kp) + "\n";
  out += "steering.ki=" + format_double(r.gains.steering.ki) + "\n";
  out += "steering.kd=" + format_double(r.gains.steering.kd) + "\n";
  out += "speed.kp=" + format_double(r.gains.speed.kp) + "\n";
  out += "speed.ki=" + format_double(r.gains.speed.ki) + "\n";
  out += "speed.kd=" + format_double(r.gains.speed.kd) + "\n";
  out += "A_s=" + format_double(r.accuracy.steering) + "\n";
  out += "A_v=" + format_double(r.accuracy.speed) + "\n";
  out += "C_lat=" + format_double(r.comfort.lateral) + "\n";
  out += "C_lon=" + format_double(r.comfort.longitudinal) + "\n";
  out += "objective=" + format_double(r.objective) + "\n";
  out += std::string("smoothed=") + (r.smoothed ? "1" : "0") + "\n";
  return out;
}

}  // namespace drivelab
