#include "drivelab/geometry.hpp"

#include <algorithm>
#include <limits>
#include <stdexcept>

namespace drivelab {

Polyline::Polyline(std::vector<Vec2> pts) : pts_(std::move(pts)) {
  if (pts_.size() < 2) throw std::invalid_argument("polyline needs at least two vertices");
  cum_.resize(pts_.size());
  cum_[0] = 0.0;
  for (std::size_t i = 1; i < pts_.size(); ++i) cum_[i] = cum_[i - 1] + distance(pts_[i - 1], pts_[i]);
}

std::size_t Polyline::segment_at(double s) const {
  if (s <= 0.0) return 0;
  if (s >= length()) return pts_.size() - 2;
  auto it = std::upper_bound(cum_.begin(), cum_.end(), s);
  std::size_t i = static_cast<std::size_t>(it - cum_.begin());
  return std::min(i == 0 ? 0 : i - 1, pts_.size() - 2);
}

Vec2 Polyline::point_at(double s) const {
  s = std::clamp(s, 0.0, length());
  std::size_t i = segment_at(s);
  double seg = cum_[i + 1] - cum_[i];
  double u = seg > 0.0 ? (s - cum_[i]) / seg : 0.0;
  return pts_[i] + (pts_[i + 1] - pts_[i]) * u;
}

double Polyline::heading_at(double s) const {
  std::size_t i = segment_at(s);
  return (pts_[i + 1] - pts_[i]).angle();
}

double Polyline::signed_curvature_at(double s, double h) const {
  double a = std::clamp(s - h, 0.0, length());
  double b = std::clamp(s + h, 0.0, length());
  if (b - a < 1e-9) return 0.0;
  // Heading is interpolated linearly between segment midpoints, so a
  // uniformly sampled arc yields its exact curvature.
  const std::size_t m = pts_.size() - 1;
  auto turn = [&](std::size_t k) {
    if (k + 1 >= m) return 0.0;
    return wrap_rad((pts_[k + 2] - pts_[k + 1]).angle() - (pts_[k + 1] - pts_[k]).angle());
  };
  auto locate = [&](double x, std::size_t& k, double& u) {
    std::size_t i = segment_at(x);
    double mid = 0.5 * (cum_[i] + cum_[i + 1]);
    if (x < mid) {
      if (i == 0) {
        k = 0;
        u = 0.0;
        return;
      }
      --i;
    }
    k = i;
    if (k + 1 >= m) {
      u = 0.0;
      return;
    }
    double m0 = 0.5 * (cum_[k] + cum_[k + 1]);
    double m1 = 0.5 * (cum_[k + 1] + cum_[k + 2]);
    u = m1 > m0 ? std::clamp((x - m0) / (m1 - m0), 0.0, 1.0) : 0.0;
  };
  std::size_t ka = 0, kb = 0;
  double ua = 0.0, ub = 0.0;
  locate(a, ka, ua);
  locate(b, kb, ub);
  double change = ub * turn(kb) - ua * turn(ka);
  for (std::size_t k = ka; k < kb; ++k) change += turn(k);
  return change / (b - a);
}

double Polyline::curvature_at(double s, double h) const {
  return std::abs(signed_curvature_at(s, h));
}

Projection Polyline::project(Vec2 p) const {
  return project(p, 0.0, length());
}

Projection Polyline::project(Vec2 p, double lo, double hi) const {
  lo = std::clamp(lo, 0.0, length());
  hi = std::clamp(hi, lo, length());
  Projection best;
  best.distance = std::numeric_limits<double>::infinity();
  std::size_t first = segment_at(lo);
  std::size_t last = segment_at(hi);
  for (std::size_t i = first; i <= last; ++i) {
    Vec2 a = pts_[i];
    Vec2 d = pts_[i + 1] - a;
    double len2 = dot(d, d);
    double u = len2 > 0.0 ? dot(p - a, d) / len2 : 0.0;
    double s = cum_[i] + u * (cum_[i + 1] - cum_[i]);
    s = std::clamp(s, std::max(lo, cum_[i]), std::min(hi, cum_[i + 1]));
    Vec2 q = point_at(s);
    double dist = distance(p, q);
    if (dist < best.distance) best = {s, dist, q};
  }
  return best;
}

Polyline Polyline::reversed() const {
  std::vector<Vec2> r(pts_.rbegin(), pts_.rend());
  return Polyline(std::move(r));
}

}  // namespace drivelab
