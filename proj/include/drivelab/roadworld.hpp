#pragma once

#include <cstdint>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include "drivelab/geometry.hpp"

namespace drivelab {

class WorldError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

inline constexpr int kSpeedLimitBins[4] = {30, 50, 80, 120};
inline constexpr double kLateralAccelCap = 2.5;  // m/s^2
inline constexpr double kMaxSteeringDeg = 720.0;
inline constexpr double kMaxSpeedKmh = 180.0;

/// Speed at which a curve of the given curvature produces the lateral
/// acceleration cap, in km/h. Infinite for straight road.
double curve_speed_cap_kmh(double curvature);

struct RoadEdge {
  int id = 0;
  int from = 0;
  int to = 0;
  Polyline polyline;
  int speedLimit = 50;
  std::vector<double> trafficLights;
  std::vector<double> pedestrianCrossings;
  std::vector<double> yieldSigns;

  double lengthM() const { return polyline.length(); }
  bool urban() const { return speedLimit <= 50; }
  /// Heading (rad) of the edge leaving `node`, which must be an endpoint.
  double heading_from(int node) const;
};

struct RoadNode {
  int id = 0;
  Vec2 position;
  /// Incident edge ids in counter-clockwise order of their leaving heading.
  std::vector<int> incident;
};

class RoadNetwork {
 public:
  RoadNetwork() = default;
  /// Builds the network and derives incidence; throws WorldError on invalid input.
  RoadNetwork(std::vector<RoadNode> nodes, std::vector<RoadEdge> edges);

  const std::vector<RoadNode>& nodes() const { return nodes_; }
  const std::vector<RoadEdge>& edges() const { return edges_; }
  const RoadEdge& edge(int id) const;
  const RoadNode& node(int id) const;
  std::vector<int> intersections() const;
  bool is_intersection(int node) const { return this->node(node).incident.size() >= 3; }
  double max_edge_length() const;

  /// Checks every structural invariant; returns a description of each violation.
  std::vector<std::string> check_invariants() const;

 private:
  std::vector<RoadNode> nodes_;
  std::vector<RoadEdge> edges_;
};

struct WorldParams {
  std::uint64_t seed = 1;
  int numIntersections = 12;
  double urbanFraction = 0.5;
  double blockSpacing = 300.0;      // m between grid nodes
  double crossingsPer100m = 0.6;    // urban mid-block crossing density
  double trafficLightProb = 0.6;    // per urban edge end
};

/// Jittered-grid network with urban core and curved rural periphery.
RoadNetwork generate_network(const WorldParams& params);
RoadNetwork generate_network(std::uint64_t seed, int numIntersections, double urbanFraction);

struct RouteLeg {
  int edge = 0;
  bool forward = true;
  bool operator==(const RouteLeg&) const = default;
};

struct Route {
  std::vector<RouteLeg> legs;
  double startOffset = 0.0;  // along the first leg, in traversal direction
  double endOffset = 0.0;    // along the last leg, in traversal direction

  /// Empty string when valid, otherwise the first violation found.
  std::string validate(const RoadNetwork& net) const;
};

/// Random non-repeating walk of up to `numLegs` legs without U-turns.
Route random_route(const RoadNetwork& net, std::uint64_t seed, int numLegs);

/// A node crossed between two consecutive legs of a route.
struct JunctionPass {
  int node = 0;
  double offset = 0.0;      // driven route offset of the crossing
  bool intersection = false;
  double entryHeading = 0.0;  // rad, travel direction arriving at the node
  double exitHeading = 0.0;   // rad, travel direction leaving the node
  int turnNumber = 0;         // CCW index of the exit road, counted from the entry road
  std::vector<double> otherHeadings;  // rad, other roads leaving the node
};

/// Route laid out as the path a vehicle drives: legs concatenated with
/// rounded corners at each node. All route offsets in the library are arc
/// lengths along this driven path.
class RouteGeometry {
 public:
  RouteGeometry(const RoadNetwork& net, const Route& route);

  const Polyline& path() const { return path_; }
  double start() const { return start_; }
  double end() const { return end_; }

  double raw_to_driven(double raw) const;
  double driven_to_raw(double driven) const;

  std::size_t leg_at(double driven) const;
  const std::vector<RouteLeg>& legs() const { return legs_; }
  /// Leg index and offset along the underlying edge (edge direction).
  std::pair<std::size_t, double> edge_location(double driven) const;
  /// Driven offset of an edge location, or nullopt when the edge is not on the route.
  std::optional<double> route_offset(int edgeId, double edgeOffset) const;

  int speed_limit_at(double driven) const;
  /// Signed road curvature (positive = bending left in travel direction).
  double road_curvature_at(double driven) const;
  /// Curvature of the driven path, including rounded corners.
  double path_curvature_at(double driven) const { return path_.curvature_at(driven, 2.0); }

  const std::vector<double>& traffic_lights() const { return lights_; }
  const std::vector<double>& crossings() const { return crossings_; }
  const std::vector<double>& yield_signs() const { return yields_; }
  const std::vector<JunctionPass>& junctions() const { return junctions_; }

 private:
  std::vector<RouteLeg> legs_;
  std::vector<Polyline> legEdges_;  // edge geometry in edge direction
  std::vector<int> legLimits_;
  Polyline path_;
  std::vector<double> legRawStart_;
  double rawLength_ = 0.0;
  std::vector<std::pair<double, double>> knots_;  // (raw, driven)
  double start_ = 0.0;
  double end_ = 0.0;
  std::vector<double> lights_, crossings_, yields_;
  std::vector<JunctionPass> junctions_;
};

struct DriveSample {
  double t = 0.0;
  double steering = 0.0;  // deg
  double speed = 0.0;     // km/h
  Vec2 position;
  double heading = 0.0;   // rad
  double routeOffset = 0.0;
};

struct DriveLog {
  double rate = 10.0;
  std::vector<DriveSample> samples;
};

/// Comfort and tracking limits of the scripted reference driver.
struct DriverParams {
  double wheelbase = 2.7;          // m
  double steeringRatio = 15.0;
  double maxAccel = 1.5;           // m/s^2
  double maxDecel = 3.0;           // m/s^2
  double planDecel = 1.2;          // m/s^2 used for anticipation
  double longJerkCap = 2.5;        // m/s^3
  double steerRateCap = 540.0;     // deg/s
  double steerJerkCap = 2500.0;    // deg/s^2
  double stopZoneSpeed = 6.0;      // km/h target near lights/crossings
  double stopZoneBefore = 6.0;     // m of crawl before the feature
  double stopZoneAfter = 3.0;      // m of crawl past the feature
  double steeringNoiseDeg = 0.15;
  double speedNoiseKmh = 0.3;
};

/// Scripted "human" driver: bounded-jerk speed profile plus pure-pursuit steering.
DriveLog simulate_reference_driver(const RoadNetwork& net, const Route& route, double rate,
                                   std::uint64_t seed, const DriverParams& params = {});

struct GpsSample {
  double t = 0.0;
  Vec2 position;
};

struct GpsTrace {
  double noiseSigma = 0.0;
  std::vector<GpsSample> samples;
};

GpsTrace corrupt_gps(const DriveLog& log, double sigma, std::uint64_t seed);

}  // namespace drivelab
