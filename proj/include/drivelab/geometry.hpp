#pragma once

#include <cmath>
#include <cstddef>
#include <numbers>
#include <span>
#include <vector>

namespace drivelab {

struct Vec2 {
  double x = 0.0;
  double y = 0.0;

  constexpr Vec2 operator+(Vec2 o) const { return {x + o.x, y + o.y}; }
  constexpr Vec2 operator-(Vec2 o) const { return {x - o.x, y - o.y}; }
  constexpr Vec2 operator*(double k) const { return {x * k, y * k}; }
  constexpr bool operator==(const Vec2&) const = default;

  double norm() const { return std::hypot(x, y); }
  double angle() const { return std::atan2(y, x); }
};

inline double dot(Vec2 a, Vec2 b) { return a.x * b.x + a.y * b.y; }
inline double cross(Vec2 a, Vec2 b) { return a.x * b.y - a.y * b.x; }
inline double distance(Vec2 a, Vec2 b) { return (a - b).norm(); }

inline constexpr double kPi = std::numbers::pi;

inline double rad2deg(double r) { return r * 180.0 / kPi; }
inline double deg2rad(double d) { return d * kPi / 180.0; }

/// Wraps an angle in degrees into [-180, 180).
inline double wrap_deg(double a) {
  double w = a - 360.0 * std::floor((a + 180.0) / 360.0);
  if (w >= 180.0) w -= 360.0;
  return w;
}

/// Wraps an angle in radians into [-pi, pi).
inline double wrap_rad(double a) {
  double w = a - 2.0 * kPi * std::floor((a + kPi) / (2.0 * kPi));
  if (w >= kPi) w -= 2.0 * kPi;
  return w;
}

struct Projection {
  double offset = 0.0;    // arc length of the foot point
  double distance = 0.0;  // point-to-polyline distance
  Vec2 point;
};

/// Ordered planar vertices with cached cumulative arc length.
class Polyline {
 public:
  Polyline() = default;
  explicit Polyline(std::vector<Vec2> pts);

  const std::vector<Vec2>& points() const { return pts_; }
  const std::vector<double>& cumulative() const { return cum_; }
  std::size_t size() const { return pts_.size(); }
  bool empty() const { return pts_.empty(); }
  double length() const { return cum_.empty() ? 0.0 : cum_.back(); }

  /// Segment index containing arc length s (clamped).
  std::size_t segment_at(double s) const;
  Vec2 point_at(double s) const;
  /// Unit tangent direction as heading in radians.
  double heading_at(double s) const;
  /// Unsigned curvature estimated from headings at s - h and s + h.
  double curvature_at(double s, double h) const;
  /// Signed curvature (positive = turning left).
  double signed_curvature_at(double s, double h) const;

  Projection project(Vec2 p) const;
  /// Projection restricted to arc lengths within [lo, hi].
  Projection project(Vec2 p, double lo, double hi) const;

  Polyline reversed() const;

 private:
  std::vector<Vec2> pts_;
  std::vector<double> cum_;
};

}  // namespace drivelab
