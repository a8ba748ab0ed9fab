#pragma once

#include <array>
#include <cstdint>
#include <stdexcept>
#include <string>
#include <vector>

#include "drivelab/drivemodel.hpp"
#include "drivelab/mapfeatures.hpp"

namespace drivelab {

class EvalError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

inline constexpr int kClusters = 75;
inline constexpr int kManeuverSize = 2 * kDriveletLength;
inline constexpr double kScenarioNearM = 40.0;
inline constexpr double kScenarioIntersectionM = 20.0;
inline constexpr double kScenarioCurvature = 0.01;
inline constexpr double kScenarioClearM = 100.0;
inline constexpr double kSteeringErrorDeg = 10.0;
inline constexpr double kSpeedErrorKmh = 5.0;
inline constexpr double kInsideIntersectionM = 10.0;
inline constexpr double kBendCurvature = 0.002;

/// Aligned steering (deg) and speed (km/h) series.
using Trajectory = Drivelet;

struct AccuracyMetrics {
  double steering = 0.0;  // A_s, deg
  double speed = 0.0;     // A_v, km/h
};

struct ComfortMetrics {
  double lateral = 0.0;       // C_lat, deg/s^2
  double longitudinal = 0.0;  // C_lon, km/h/s^2
};

AccuracyMetrics accuracy_metrics(const Trajectory& pred, const Trajectory& truth);
/// Mean absolute second difference scaled by f^2.
ComfortMetrics comfort_metrics(const Trajectory& pred, double rate);
/// Mean over every triple of every sequence; sequences shorter than 3 contribute nothing.
ComfortMetrics comfort_metrics(const std::vector<Trajectory>& sequences, double rate);

/// Five (s, v) pairs flattened as s-block then v-block.
using ManeuverWindow = std::array<double, kManeuverSize>;

ManeuverWindow to_window(const Drivelet& d);

struct ClusterModel {
  std::vector<ManeuverWindow> centroids;  // normalised space
  ManeuverWindow mean{};
  ManeuverWindow scale{};
  std::uint64_t seed = 0;
  int iterations = 0;

  ManeuverWindow normalize(const ManeuverWindow& w) const;
  /// Nearest centroid of a raw window, lowest index on ties.
  int assign(const ManeuverWindow& w) const;
};

/// k-means++ seeded Lloyd iterations on z-normalised windows.
ClusterModel fit_clusters(const std::vector<ManeuverWindow>& human, int k, std::uint64_t seed);

/// Percentage of aligned windows whose nearest centroids agree.
double human_likeness(const ClusterModel& clusters, const std::vector<ManeuverWindow>& model,
                      const std::vector<ManeuverWindow>& human);

enum class Scenario { A, B, C };
std::string to_string(Scenario s);
Scenario scenario_from_string(const std::string& s);

bool in_scenario(const MapFeatureFrame& f, Scenario s);
std::vector<std::size_t> scenario_filter(const std::vector<MapFeatureFrame>& frames, Scenario s);

struct DiagnosisBin {
  std::string label;
  std::size_t samples = 0;
  std::size_t errors = 0;
  double rate = 0.0;  // percent of the attribute total
};

struct DiagnosisAttribute {
  std::string name;
  std::vector<DiagnosisBin> bins;
  bool noErrors = true;
};

struct DiagnosisTable {
  std::string channel;  // "steering" or "speed"
  std::size_t totalErrors = 0;
  std::vector<DiagnosisAttribute> attributes;
};

struct Diagnosis {
  DiagnosisTable steering;
  DiagnosisTable speed;
};

std::string speed_limit_bin(const MapFeatureFrame& f);
std::string road_type_bin(const MapFeatureFrame& f);
std::string intersection_phase_bin(const MapFeatureFrame& f);

/// Per-attribute relative error rates for steering and speed errors.
Diagnosis error_diagnosis(const Trajectory& pred, const Trajectory& truth, const std::vector<MapFeatureFrame>& frames);

struct ScenarioMetrics {
  std::size_t rows = 0;
  std::size_t windows = 0;
  AccuracyMetrics accuracy;
  double humanLikeness = 0.0;
};

struct MetricsReport {
  std::size_t rows = 0;
  std::size_t windows = 0;
  AccuracyMetrics accuracy;
  ComfortMetrics comfort;
  double humanLikeness = 0.0;
  std::array<ScenarioMetrics, 3> scenarios;  // A, B, C
  Diagnosis diagnosis;
};

/// Human maneuver windows of all complete drivelets in the rows.
std::vector<ManeuverWindow> human_windows(const std::vector<FeatureRow>& rows);

/// Full evaluation of one-step predictions (2 x rows, in row order).
MetricsReport evaluate(const Matrix& predictions, const std::vector<FeatureRow>& rows,
                       const ClusterModel& clusters, double rate);

std::string report_to_text(const MetricsReport& r);
std::string diagnosis_to_csv(const Diagnosis& d);
/// Bar chart of relative error rates for one channel.
std::string diagnosis_to_svg(const DiagnosisTable& t);

}  // namespace drivelab
