#pragma once

#include <array>
#include <cstddef>
#include <stdexcept>
#include <vector>

#include "drivelab/mapmatch.hpp"
#include "drivelab/roadworld.hpp"

namespace drivelab {

class FeatureError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

inline constexpr double kFeatureHorizonM = 250.0;
inline constexpr int kHistorySamples = 20;     // 2 s at 10 Hz
inline constexpr int kMapFeaturesPerSample = 8;
inline constexpr int kM14Size = kHistorySamples * kMapFeaturesPerSample;  // 160
inline constexpr int kM56Size = 7;
inline constexpr int kEgoFrames = 3;
inline constexpr int kEgoSize = 3 * kEgoFrames;
inline constexpr std::array<double, 5> kFutureHeadingDistances = {1.0, 5.0, 10.0, 20.0, 50.0};

/// min(1, 1/d) for d <= 250 m, otherwise (or when absent) 0.
double inverse_distance_feature(double d);

/// Road distances along the route in metres, +infinity when nothing lies ahead.
struct RawDistances {
  double intersection = 0.0;
  double trafficLight = 0.0;
  double pedestrianCrossing = 0.0;
  double yieldSign = 0.0;
  double sinceIntersection = 0.0;  // back to the last intersection passed
};

struct MapFeatureFrame {
  double distanceToIntersection = 0.0;
  double distanceToTrafficLight = 0.0;
  double distanceToPedestrianCrossing = 0.0;
  double distanceToYieldSign = 0.0;
  double speedLimit = 0.0;     // km/h
  double freeFlowSpeed = 0.0;  // km/h
  double curvature = 0.0;      // 1/m, unsigned
  int turnNumber = 0;
  double ourRoadHeading = 0.0;     // deg
  double otherRoadsHeading = 0.0;  // deg, other road closest to straight ahead, right-hand on ties
  std::array<double, 5> futureHeading{};  // deg at 1, 5, 10, 20, 50 m

  double signedCurvature = 0.0;  // 1/m, positive bends left
  RawDistances raw;

  /// The eight history features in model order, normalised.
  std::array<double, kMapFeaturesPerSample> history_features() const;
};

/// Features at a driven-path offset of the route.
MapFeatureFrame extract_frame(const RouteGeometry& geo, double routeOffset);
/// Features at an edge location; throws FeatureError when the edge is not on the route.
MapFeatureFrame extract_frame(const RoadNetwork& net, const Route& route, EdgeLocation loc);

/// Route offsets of matched samples. A sample on a route edge maps exactly
/// when that lands near the previous offset; any other sample is projected
/// onto the driven path near the previous offset.
std::vector<double> route_offsets_from_match(const RouteGeometry& geo, const MatchedPath& matched);

struct FeatureWindow {
  std::vector<double> m14;  // 20 samples x 8 features, oldest first
  std::vector<double> m56;  // 7 headings, deg / 180
  std::vector<double> ego;  // (v/180, s/720, heading rate/pi) for t-2, t-1, t
};

/// Window at log index t from frames aligned with the log samples.
FeatureWindow build_window(const std::vector<MapFeatureFrame>& frames, const DriveLog& log, std::size_t t);

/// Heading rate of the log at index i (rad/s), backward difference, 0 at i = 0.
double heading_rate(const DriveLog& log, std::size_t i);

inline constexpr int kDriveletLength = 5;
inline constexpr int kHorizonSteps = 5;  // 0.5 s at 10 Hz

/// One model input with the ground-truth drivelet that starts 0.5 s later.
struct FeatureRow {
  int sequence = 0;
  int index = 0;  // log index of the window
  double t = 0.0;
  FeatureWindow window;
  std::array<double, kDriveletLength> targetS{};  // deg at t+5 .. t+9
  std::array<double, kDriveletLength> targetV{};  // km/h at t+5 .. t+9
  MapFeatureFrame frame;  // frame at the window time
};

/// Every window with full history and a complete target drivelet.
std::vector<FeatureRow> build_rows(int sequence, const std::vector<MapFeatureFrame>& frames, const DriveLog& log);

}  // namespace drivelab
