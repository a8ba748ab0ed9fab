#pragma once

#include <stdexcept>
#include <string>
#include <vector>

#include "drivelab/evalsuite.hpp"

namespace drivelab {

class PidError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

struct ChannelGains {
  double kp = 1.0;
  double ki = 0.0;
  double kd = 0.0;
  bool operator==(const ChannelGains&) const = default;
};

struct PidGains {
  ChannelGains steering;
  ChannelGains speed;
  bool operator==(const PidGains&) const = default;
};

/// Discrete PID tracking the setpoint series r through the plant
/// y[n] = y[n-1] + u[n], starting at y[0] = r[0]; output clamped to [lo, hi].
std::vector<double> pid_filter(const std::vector<double>& r, const ChannelGains& g, double rate, double lo, double hi);

/// Both channels of one sequence, clamped to the valid steering and speed ranges.
Trajectory pid_smooth(const Trajectory& preds, const PidGains& gains, double rate);

struct PidGrid {
  std::vector<double> kp = {0.1, 0.2, 0.3, 0.4, 0.5, 0.6, 0.7, 0.8, 0.9, 1.0};
  std::vector<double> ki = {0.0, 0.01, 0.05, 0.1};
  std::vector<double> kd = {0.0, 0.05, 0.1, 0.2};

  /// Gains in enumeration order: kp outermost, kd innermost.
  std::vector<ChannelGains> combinations() const;
};

struct TuneResult {
  PidGains gains;
  AccuracyMetrics accuracy;
  ComfortMetrics comfort;
  double objective = 0.0;
  /// Achieved comfort is no worse than the raw predictions on both channels.
  bool smoothed = false;
};

/// Exhaustive search over the product grid of steering and speed gains for
/// the comfort closest to the targets; ties go to lower steering error, then
/// to the earlier grid point.
TuneResult grid_tune(const std::vector<Trajectory>& preds, const std::vector<Trajectory>& truths,
                     const ComfortMetrics& target, const PidGrid& grid, double rate);

/// Smooths one-step predictions (2 x rows) sequence by sequence.
Matrix smooth_predictions(const Matrix& predictions, const std::vector<FeatureRow>& rows, const PidGains& gains,
                          double rate);

/// Predictions and targets of the rows split into consecutive sequences.
void split_sequences(const Matrix& predictions, const std::vector<FeatureRow>& rows, std::vector<Trajectory>& preds,
                     std::vector<Trajectory>& truths);

std::string tune_result_to_text(const TuneResult& r);

}  // namespace drivelab
