#include "drivelab/mapfeatures.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <string>

namespace drivelab {

namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();
// Plausible movement between consecutive matched samples.
constexpr double kBackWindowM = 20.0;
constexpr double kAheadWindowM = 60.0;

// Road distance from driven offset s to the first sorted driven offset at or past it.
double next_ahead(const RouteGeometry& geo, const std::vector<double>& sorted, double s) {
  auto it = std::lower_bound(sorted.begin(), sorted.end(), s);
  if (it == sorted.end()) return kInf;
  return std::max(0.0, geo.driven_to_raw(*it) - geo.driven_to_raw(s));
}

double relative_deg(double toRad, double fromRad) { return wrap_deg(rad2deg(wrap_rad(toRad - fromRad))); }

}  // namespace

double inverse_distance_feature(double d) {
  if (!(d <= kFeatureHorizonM)) return 0.0;
  if (d <= 1.0) return 1.0;
  return 1.0 / d;
}

std::array<double, kMapFeaturesPerSample> MapFeatureFrame::history_features() const {
  return {distanceToIntersection,
          distanceToTrafficLight,
          distanceToPedestrianCrossing,
          distanceToYieldSign,
          speedLimit / 120.0,
          freeFlowSpeed / 120.0,
          curvature * 50.0,
          turnNumber / 4.0};
}

MapFeatureFrame extract_frame(const RouteGeometry& geo, double s) {
  if (!(s >= geo.start() - 1e-9 && s <= geo.end() + 1e-9)) {
    throw FeatureError("route offset " + std::to_string(s) + " m is outside the route");
  }
  MapFeatureFrame f;

  std::vector<double> intersections;
  const JunctionPass* next = nullptr;
  double since = kInf;
  for (const auto& j : geo.junctions()) {
    if (!j.intersection) continue;
    if (j.offset >= s) {
      intersections.push_back(j.offset);
      if (!next) next = &j;
    } else {
      since = geo.driven_to_raw(s) - geo.driven_to_raw(j.offset);
    }
  }
  f.raw.intersection = next_ahead(geo, intersections, s);
  f.raw.trafficLight = next_ahead(geo, geo.traffic_lights(), s);
  f.raw.pedestrianCrossing = next_ahead(geo, geo.crossings(), s);
  f.raw.yieldSign = next_ahead(geo, geo.yield_signs(), s);
  f.raw.sinceIntersection = since;

  f.distanceToIntersection = inverse_distance_feature(f.raw.intersection);
  f.distanceToTrafficLight = inverse_distance_feature(f.raw.trafficLight);
  f.distanceToPedestrianCrossing = inverse_distance_feature(f.raw.pedestrianCrossing);
  f.distanceToYieldSign = inverse_distance_feature(f.raw.yieldSign);

  f.speedLimit = geo.speed_limit_at(s);
  f.signedCurvature = geo.road_curvature_at(s);
  f.curvature = std::abs(f.signedCurvature);
  f.freeFlowSpeed = std::min(f.speedLimit, curve_speed_cap_kmh(f.curvature));

  if (next) {
    f.turnNumber = next->turnNumber;
    f.ourRoadHeading = relative_deg(next->exitHeading, next->entryHeading);
    double best = kInf;
    for (double h : next->otherHeadings) {
      double rel = relative_deg(h, next->entryHeading);
      if (std::abs(rel) < best || (std::abs(rel) == best && rel < f.otherRoadsHeading)) {
        best = std::abs(rel);
        f.otherRoadsHeading = rel;
      }
    }
  }

  const Polyline& path = geo.path();
  double here = path.heading_at(s);
  for (std::size_t i = 0; i < kFutureHeadingDistances.size(); ++i) {
    double ahead = std::min(s + kFutureHeadingDistances[i], path.length());
    f.futureHeading[i] = relative_deg(path.heading_at(ahead), here);
  }
  return f;
}

MapFeatureFrame extract_frame(const RoadNetwork& net, const Route& route, EdgeLocation loc) {
  RouteGeometry geo(net, route);
  const auto& e = net.edge(loc.edge);
  if (loc.offset < -1e-9 || loc.offset > e.lengthM() + 1e-9) {
    throw FeatureError("offset " + std::to_string(loc.offset) + " m is outside edge " + std::to_string(loc.edge));
  }
  auto s = geo.route_offset(loc.edge, loc.offset);
  if (!s) throw FeatureError("edge " + std::to_string(loc.edge) + " is not on the route");
  return extract_frame(geo, std::clamp(*s, geo.start(), geo.end()));
}

std::vector<double> route_offsets_from_match(const RouteGeometry& geo, const MatchedPath& matched) {
  std::vector<double> out;
  out.reserve(matched.samples.size());
  double prev = geo.start();
  for (const auto& m : matched.samples) {
    double lo = std::max(geo.start(), prev - kBackWindowM);
    double hi = std::min(geo.end(), prev + kAheadWindowM);
    double s;
    auto on = geo.route_offset(m.edge, m.offset);
    if (on && *on >= lo && *on <= hi) {
      s = *on;
    } else {
      s = geo.path().project(m.position, lo, hi).offset;
    }
    s = std::clamp(s, geo.start(), geo.end());
    out.push_back(s);
    prev = s;
  }
  return out;
}

double heading_rate(const DriveLog& log, std::size_t i) {
  if (i == 0 || i >= log.samples.size()) return 0.0;
  double dt = log.samples[i].t - log.samples[i - 1].t;
  if (!(dt > 0.0)) return 0.0;
  return wrap_rad(log.samples[i].heading - log.samples[i - 1].heading) / dt;
}

FeatureWindow build_window(const std::vector<MapFeatureFrame>& frames, const DriveLog& log, std::size_t t) {
  if (t + 1 < static_cast<std::size_t>(kHistorySamples)) {
    throw FeatureError("window at index " + std::to_string(t) + " needs " + std::to_string(kHistorySamples) +
                       " frames of history");
  }
  if (t >= frames.size() || t >= log.samples.size()) {
    throw FeatureError("window index " + std::to_string(t) + " is past the end of the data");
  }
  FeatureWindow w;
  w.m14.reserve(kM14Size);
  for (std::size_t i = t + 1 - kHistorySamples; i <= t; ++i) {
    auto h = frames[i].history_features();
    w.m14.insert(w.m14.end(), h.begin(), h.end());
  }
  const auto& cur = frames[t];
  w.m56.push_back(cur.ourRoadHeading / 180.0);
  w.m56.push_back(cur.otherRoadsHeading / 180.0);
  for (double h : cur.futureHeading) w.m56.push_back(h / 180.0);
  w.ego.reserve(kEgoSize);
  for (std::size_t i = t + 1 - kEgoFrames; i <= t; ++i) {
    const auto& s = log.samples[i];
    w.ego.push_back(s.speed / kMaxSpeedKmh);
    w.ego.push_back(s.steering / kMaxSteeringDeg);
    w.ego.push_back(heading_rate(log, i) / kPi);
  }
  return w;
}

std::vector<FeatureRow> build_rows(int sequence, const std::vector<MapFeatureFrame>& frames, const DriveLog& log) {
  if (frames.size() != log.samples.size()) {
    throw FeatureError("sequence " + std::to_string(sequence) + " has " + std::to_string(frames.size()) +
                       " frames for " + std::to_string(log.samples.size()) + " log samples");
  }
  std::vector<FeatureRow> rows;
  const std::size_t n = log.samples.size();
  const std::size_t last = kHorizonSteps + kDriveletLength - 1;
  for (std::size_t t = kHistorySamples - 1; t + last < n; ++t) {
    FeatureRow r;
    r.sequence = sequence;
    r.index = static_cast<int>(t);
    r.t = log.samples[t].t;
    r.window = build_window(frames, log, t);
    for (int o = 0; o < kDriveletLength; ++o) {
      const auto& target = log.samples[t + kHorizonSteps + o];
      r.targetS[o] = target.steering;
      r.targetV[o] = target.speed;
    }
    r.frame = frames[t];
    rows.push_back(std::move(r));
  }
  return rows;
}

}  // namespace drivelab
