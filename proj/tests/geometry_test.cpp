#include <gtest/gtest.h>

#include <cmath>
#include <random>

#include "drivelab/geometry.hpp"
#include "oracles.hpp"

namespace drivelab {
namespace {

TEST(GeometryTest, WrapDegrees) {
  EXPECT_DOUBLE_EQ(wrap_deg(0.0), 0.0);
  EXPECT_DOUBLE_EQ(wrap_deg(180.0), -180.0);
  EXPECT_DOUBLE_EQ(wrap_deg(-180.0), -180.0);
  EXPECT_DOUBLE_EQ(wrap_deg(190.0), -170.0);
  EXPECT_DOUBLE_EQ(wrap_deg(-190.0), 170.0);
  EXPECT_DOUBLE_EQ(wrap_deg(720.0 + 45.0), 45.0);
}

TEST(GeometryTest, WrapRadians) {
  EXPECT_NEAR(wrap_rad(3.0 * kPi / 2.0), -kPi / 2.0, 1e-12);
  EXPECT_NEAR(wrap_rad(-3.0 * kPi / 2.0), kPi / 2.0, 1e-12);
  EXPECT_NEAR(wrap_rad(kPi), -kPi, 1e-12);
}

TEST(GeometryTest, PolylineArcLength) {
  Polyline p({{0, 0}, {3, 0}, {3, 4}});
  EXPECT_DOUBLE_EQ(p.length(), 7.0);
  EXPECT_EQ(p.segment_at(2.0), 0u);
  EXPECT_EQ(p.segment_at(5.0), 1u);
  Vec2 q = p.point_at(5.0);
  EXPECT_NEAR(q.x, 3.0, 1e-12);
  EXPECT_NEAR(q.y, 2.0, 1e-12);
  EXPECT_NEAR(p.point_at(-1.0).x, 0.0, 1e-12);
  EXPECT_NEAR(p.point_at(100.0).y, 4.0, 1e-12);
  EXPECT_NEAR(p.heading_at(1.0), 0.0, 1e-12);
  EXPECT_NEAR(p.heading_at(6.0), kPi / 2.0, 1e-12);
}

TEST(GeometryTest, CircleCurvature) {
  const double r = 50.0;
  std::vector<Vec2> pts;
  for (int i = 0; i <= 400; ++i) {
    double a = i * kPi / 400.0;
    pts.push_back({r * std::cos(a), r * std::sin(a)});
  }
  Polyline ccw(pts);
  double s = ccw.length() / 2.0;
  EXPECT_NEAR(ccw.curvature_at(s, 5.0), 1.0 / r, 1e-3);
  EXPECT_NEAR(ccw.signed_curvature_at(s, 5.0), 1.0 / r, 1e-3);
  EXPECT_NEAR(ccw.reversed().signed_curvature_at(s, 5.0), -1.0 / r, 1e-3);
}

TEST(GeometryTest, ProjectionMatchesSegmentScan) {
  std::mt19937_64 rng(7);
  std::uniform_real_distribution<double> u(-100.0, 100.0);
  for (int trial = 0; trial < 50; ++trial) {
    std::vector<Vec2> pts;
    for (int i = 0; i < 6; ++i) pts.push_back({u(rng), u(rng)});
    Polyline line(pts);
    Vec2 p{u(rng), u(rng)};
    double best = 1e300;
    for (std::size_t i = 1; i < pts.size(); ++i) {
      best = std::min(best, oracle::point_segment_distance(p, pts[i - 1], pts[i]));
    }
    Projection pr = line.project(p);
    EXPECT_NEAR(pr.distance, best, 1e-9);
    EXPECT_NEAR(distance(line.point_at(pr.offset), pr.point), 0.0, 1e-9);
  }
}

TEST(GeometryTest, RestrictedProjection) {
  Polyline p({{0, 0}, {100, 0}});
  Projection pr = p.project({80, 5}, 0.0, 50.0);
  EXPECT_NEAR(pr.offset, 50.0, 1e-12);
  EXPECT_NEAR(pr.distance, std::hypot(30.0, 5.0), 1e-12);
}

TEST(GeometryTest, ReversedKeepsLength) {
  Polyline p({{0, 0}, {1, 1}, {4, 1}});
  Polyline r = p.reversed();
  EXPECT_DOUBLE_EQ(r.length(), p.length());
  EXPECT_EQ(r.points().front(), p.points().back());
}

}  // namespace
}  // namespace drivelab
