#include "drivelab/mapfeatures.hpp"

#include <cmath>
#include <random>

#include "gtest/gtest.h"

namespace drivelab {
namespace {

RoadEdge make_edge(int id, int from, int to, std::vector<Vec2> pts, int limit = 50) {
  RoadEdge e;
  e.id = id;
  e.from = from;
  e.to = to;
  e.polyline = Polyline(std::move(pts));
  e.speedLimit = limit;
  return e;
}

Route whole(const RoadNetwork& net, std::vector<RouteLeg> legs) {
  Route r;
  r.legs = std::move(legs);
  r.startOffset = 0.0;
  r.endOffset = net.edge(r.legs.back().edge).lengthM();
  return r;
}

// Centre node 0 with arms east (1), north (2), west (3) and south (4).
RoadNetwork four_way() {
  std::vector<RoadNode> nodes{{0, {0, 0}, {}}, {1, {100, 0}, {}}, {2, {0, 100}, {}}, {3, {-100, 0}, {}},
                              {4, {0, -100}, {}}};
  std::vector<RoadEdge> edges{make_edge(0, 0, 1, {{0, 0}, {100, 0}}), make_edge(1, 0, 2, {{0, 0}, {0, 100}}),
                              make_edge(2, 0, 3, {{0, 0}, {-100, 0}}), make_edge(3, 4, 0, {{0, -100}, {0, 0}})};
  return RoadNetwork(nodes, edges);
}

TEST(MapFeaturesTest, InverseDistanceCap) {
  std::mt19937_64 rng(2);
  std::uniform_real_distribution<double> u(0.0, 600.0);
  for (int k = 0; k < 2000; ++k) {
    double d = u(rng);
    double f = inverse_distance_feature(d);
    if (d > 250.0) {
      EXPECT_EQ(f, 0.0);
    } else {
      EXPECT_NEAR(f, std::min(1.0, 1.0 / d), 1e-12);
      EXPECT_GT(f, 0.0);
    }
  }
  EXPECT_NEAR(inverse_distance_feature(250.0), 1.0 / 250.0, 1e-12);
  EXPECT_EQ(inverse_distance_feature(250.0000001), 0.0);
  EXPECT_EQ(inverse_distance_feature(0.0), 1.0);
  EXPECT_EQ(inverse_distance_feature(std::numeric_limits<double>::infinity()), 0.0);
}

TEST(MapFeaturesTest, DistancesAlongStraightRoad) {
  RoadEdge e = make_edge(0, 0, 1, {{0, 0}, {600, 0}});
  e.trafficLights = {350.0};
  e.pedestrianCrossings = {60.0};
  e.yieldSigns = {300.5};
  RoadNetwork net({{0, {0, 0}, {}}, {1, {600, 0}, {}}}, {e});
  Route r = whole(net, {{0, true}});
  MapFeatureFrame f = extract_frame(net, r, {0, 50.0});
  EXPECT_EQ(f.distanceToTrafficLight, 0.0);  // 300 m ahead
  EXPECT_NEAR(f.raw.trafficLight, 300.0, 1e-9);
  EXPECT_NEAR(f.distanceToPedestrianCrossing, 0.1, 1e-12);
  EXPECT_NEAR(f.distanceToYieldSign, 0.0, 0.0);
  EXPECT_EQ(f.distanceToIntersection, 0.0);
  EXPECT_TRUE(std::isinf(f.raw.intersection));
  EXPECT_EQ(f.speedLimit, 50.0);
  EXPECT_EQ(f.freeFlowSpeed, 50.0);
  EXPECT_NEAR(f.curvature, 0.0, 1e-12);
  for (double h : f.futureHeading) EXPECT_NEAR(h, 0.0, 1e-9);

  MapFeatureFrame g = extract_frame(net, r, {0, 100.5});
  EXPECT_NEAR(g.distanceToYieldSign, 1.0 / 200.0, 1e-12);
  EXPECT_NEAR(g.distanceToTrafficLight, 1.0 / 249.5, 1e-12);

  // reversed traversal sees the features mirrored
  Route back = whole(net, {{0, false}});
  MapFeatureFrame b = extract_frame(net, back, {0, 400.0});
  EXPECT_NEAR(b.raw.trafficLight, 50.0, 1e-9);
  EXPECT_TRUE(std::isinf(b.raw.pedestrianCrossing) || b.raw.pedestrianCrossing > 0.0);
  EXPECT_NEAR(b.raw.pedestrianCrossing, 340.0, 1e-9);
}

TEST(MapFeaturesTest, IntersectionHalfMetreAheadSaturates) {
  RoadNetwork net = four_way();
  Route r = whole(net, {{3, true}, {1, true}});
  RouteGeometry geo(net, r);
  double at = geo.junctions().at(0).offset;
  MapFeatureFrame f = extract_frame(geo, at - 0.5);
  EXPECT_NEAR(f.raw.intersection, 0.5, 1e-9);
  EXPECT_EQ(f.distanceToIntersection, 1.0);
}

struct TurnCase {
  int exitEdge;
  int turnNumber;
  double ourHeading;
  double otherHeading;
};

TEST(MapFeaturesTest, FourWayJunctionHeadings) {
  RoadNetwork net = four_way();
  // Approaching northbound on the south arm: east is a right turn, north straight, west left.
  const TurnCase cases[] = {{0, 1, -90.0, 0.0}, {1, 2, 0.0, -90.0}, {2, 3, 90.0, 0.0}};
  for (const auto& c : cases) {
    Route r = whole(net, {{3, true}, {c.exitEdge, true}});
    MapFeatureFrame f = extract_frame(net, r, {3, 50.0});
    EXPECT_EQ(f.turnNumber, c.turnNumber) << "exit " << c.exitEdge;
    EXPECT_NEAR(f.ourRoadHeading, c.ourHeading, 1e-9) << "exit " << c.exitEdge;
    EXPECT_NEAR(f.otherRoadsHeading, c.otherHeading, 1e-9) << "exit " << c.exitEdge;
    EXPECT_NEAR(f.distanceToIntersection, 1.0 / 50.0, 1e-12);
    EXPECT_NEAR(f.raw.intersection, 50.0, 1e-9);
    for (int i = 0; i < 4; ++i) EXPECT_NEAR(f.futureHeading[i], 0.0, 1e-9);  // 50 m ahead reaches the turn
  }
  // The future heading 50 m ahead of a point 20 m before a left turn has swung left.
  Route left = whole(net, {{3, true}, {2, true}});
  MapFeatureFrame f = extract_frame(net, left, {3, 80.0});
  EXPECT_NEAR(f.futureHeading[4], 90.0, 1e-6);
  EXPECT_NEAR(f.futureHeading[0], 0.0, 1e-9);
  // Past the junction no intersection lies ahead, and the passed one is behind.
  MapFeatureFrame after = extract_frame(net, left, {2, 50.0});
  EXPECT_EQ(after.distanceToIntersection, 0.0);
  EXPECT_EQ(after.turnNumber, 0);
  EXPECT_NEAR(after.raw.sinceIntersection, 50.0, 1e-9);
}

TEST(MapFeaturesTest, LocationOffRouteThrows) {
  RoadNetwork net = four_way();
  Route r = whole(net, {{3, true}, {1, true}});
  EXPECT_THROW(extract_frame(net, r, {0, 10.0}), FeatureError);
  EXPECT_THROW(extract_frame(net, r, {3, 150.0}), FeatureError);
  RouteGeometry geo(net, r);
  EXPECT_THROW(extract_frame(geo, geo.end() + 1.0), FeatureError);
}

TEST(MapFeaturesTest, HeadingsStayWrappedAcrossPlusMinus180) {
  // A westbound arc whose heading passes through +-180 degrees.
  std::vector<Vec2> pts;
  for (int i = 0; i <= 200; ++i) {
    double a = -kPi / 2 + (kPi * i) / 200.0;  // clockwise sweep around (0, 0)
    pts.push_back({150.0 * std::cos(-a), 150.0 * std::sin(-a)});
  }
  RoadNetwork net({{0, pts.front(), {}}, {1, pts.back(), {}}}, {make_edge(0, 0, 1, pts, 80)});
  Route r = whole(net, {{0, true}});
  RouteGeometry geo(net, r);
  double prev = 0.0;
  bool first = true;
  for (double s = 10.0; s <= geo.end() - 60.0; s += 1.0) {
    MapFeatureFrame f = extract_frame(geo, s);
    for (double h : f.futureHeading) {
      EXPECT_GE(h, -180.0);
      EXPECT_LT(h, 180.0);
    }
    if (!first) EXPECT_LT(std::abs(f.futureHeading[4] - prev), 1.0);
    prev = f.futureHeading[4];
    first = false;
    EXPECT_LT(f.futureHeading[4], 0.0);  // bending right
    EXPECT_NEAR(f.curvature, 1.0 / 150.0, 1e-6);
    EXPECT_LT(f.signedCurvature, 0.0);
    EXPECT_LE(f.freeFlowSpeed, 80.0);
  }
}

TEST(MapFeaturesTest, FramesOnGeneratedDataRespectRanges) {
  for (std::uint64_t seed : {1u, 2u, 3u}) {
    RoadNetwork net = generate_network(seed, 10, 0.5);
    Route r = random_route(net, seed, 6);
    RouteGeometry geo(net, r);
    for (double s = geo.start(); s <= geo.end(); s += 2.0) {
      MapFeatureFrame f = extract_frame(geo, s);
      for (double d : {f.distanceToIntersection, f.distanceToTrafficLight, f.distanceToPedestrianCrossing,
                       f.distanceToYieldSign}) {
        EXPECT_GE(d, 0.0);
        EXPECT_LE(d, 1.0);
      }
      for (double h : f.futureHeading) {
        EXPECT_GE(h, -180.0);
        EXPECT_LT(h, 180.0);
      }
      EXPECT_GE(f.ourRoadHeading, -180.0);
      EXPECT_LT(f.ourRoadHeading, 180.0);
      EXPECT_GE(f.otherRoadsHeading, -180.0);
      EXPECT_LT(f.otherRoadsHeading, 180.0);
      EXPECT_GE(f.curvature, 0.0);
      EXPECT_GE(f.turnNumber, 0);
      EXPECT_LE(f.freeFlowSpeed, f.speedLimit);
      EXPECT_TRUE(f.speedLimit == 30 || f.speedLimit == 50 || f.speedLimit == 80 || f.speedLimit == 120);
    }
  }
}

DriveLog synthetic_log(std::size_t n) {
  DriveLog log;
  for (std::size_t i = 0; i < n; ++i) {
    DriveSample s;
    s.t = 0.1 * i;
    s.steering = 10.0 + i;
    s.speed = 30.0 + 0.5 * i;
    s.heading = 0.01 * i;
    log.samples.push_back(s);
  }
  return log;
}

TEST(MapFeaturesTest, WindowShapesAndConstantWorld) {
  MapFeatureFrame f;
  f.distanceToTrafficLight = 0.02;
  f.speedLimit = 50;
  f.freeFlowSpeed = 50;
  f.turnNumber = 2;
  f.ourRoadHeading = 90.0;
  f.futureHeading = {1, 2, 3, 4, 5};
  std::vector<MapFeatureFrame> frames(25, f);
  DriveLog log = synthetic_log(25);
  FeatureWindow w = build_window(frames, log, 24);
  ASSERT_EQ(w.m14.size(), 160u);
  ASSERT_EQ(w.m56.size(), 7u);
  ASSERT_EQ(w.ego.size(), 9u);
  for (int k = 1; k < kHistorySamples; ++k)
    for (int j = 0; j < kMapFeaturesPerSample; ++j) EXPECT_EQ(w.m14[k * 8 + j], w.m14[j]);
  EXPECT_EQ(w.m14[1], 0.02);
  EXPECT_EQ(w.m14[4], 50.0 / 120.0);
  EXPECT_EQ(w.m14[7], 0.5);
  EXPECT_EQ(w.m56[0], 0.5);
  EXPECT_EQ(w.m56[6], 5.0 / 180.0);
}

TEST(MapFeaturesTest, HistoryIsOldestFirst) {
  std::vector<MapFeatureFrame> frames(30);
  for (std::size_t i = 0; i < frames.size(); ++i) frames[i].turnNumber = static_cast<int>(i % 5);
  DriveLog log = synthetic_log(30);
  FeatureWindow w = build_window(frames, log, 29);
  for (int k = 0; k < kHistorySamples; ++k) EXPECT_EQ(w.m14[k * 8 + 7], ((10 + k) % 5) / 4.0);
}

TEST(MapFeaturesTest, EgoVectorByHand) {
  DriveLog log = synthetic_log(20);
  log.samples[17] = {1.7, -72.0, 36.0, {}, 0.30, 0.0};
  log.samples[18] = {1.8, 144.0, 90.0, {}, 0.40, 0.0};
  log.samples[19] = {1.9, 0.0, 180.0, {}, 0.35, 0.0};
  std::vector<MapFeatureFrame> frames(20);
  FeatureWindow w = build_window(frames, log, 19);
  // heading at 16 is 0.16
  const double want[9] = {0.2, -0.1, (0.30 - 0.16) / 0.1 / kPi,  //
                          0.5, 0.2,  (0.40 - 0.30) / 0.1 / kPi,  //
                          1.0, 0.0,  (0.35 - 0.40) / 0.1 / kPi};
  for (int i = 0; i < 9; ++i) EXPECT_NEAR(w.ego[i], want[i], 1e-9) << i;
}

TEST(MapFeaturesTest, InsufficientHistoryThrows) {
  std::vector<MapFeatureFrame> frames(25);
  DriveLog log = synthetic_log(25);
  EXPECT_THROW(build_window(frames, log, 18), FeatureError);
  EXPECT_NO_THROW(build_window(frames, log, 19));
  EXPECT_THROW(build_window(frames, log, 25), FeatureError);
}

TEST(MapFeaturesTest, RowsCarryShiftedTargets) {
  std::vector<MapFeatureFrame> frames(40);
  DriveLog log = synthetic_log(40);
  auto rows = build_rows(3, frames, log);
  ASSERT_EQ(rows.size(), 40u - 19u - 9u);
  EXPECT_EQ(rows.front().index, 19);
  for (const auto& r : rows) {
    EXPECT_EQ(r.sequence, 3);
    for (int o = 0; o < 5; ++o) {
      EXPECT_EQ(r.targetS[o], log.samples[r.index + 5 + o].steering);
      EXPECT_EQ(r.targetV[o], log.samples[r.index + 5 + o].speed);
    }
  }
  frames.pop_back();
  EXPECT_THROW(build_rows(0, frames, log), FeatureError);
}

TEST(MapFeaturesTest, MatchedOffsetsTrackTruth) {
  RoadNetwork net = generate_network(11, 10, 0.5);
  Route r = random_route(net, 3, 5);
  RouteGeometry geo(net, r);
  DriveLog log = simulate_reference_driver(net, r, 10.0, 3);
  GpsTrace g = corrupt_gps(log, 5.0, 9);
  auto m = viterbi_match(net, g, HmmParams{});
  auto offs = route_offsets_from_match(geo, m);
  ASSERT_EQ(offs.size(), log.samples.size());
  double err = 0.0;
  for (std::size_t i = 0; i < offs.size(); ++i) err += std::abs(offs[i] - log.samples[i].routeOffset);
  EXPECT_LT(err / offs.size(), 5.0);
}

}  // namespace
}  // namespace drivelab
