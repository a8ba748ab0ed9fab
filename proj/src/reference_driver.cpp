#include <algorithm>
#include <cmath>
#include <limits>
#include <random>

#include "drivelab/roadworld.hpp"

namespace drivelab {

namespace {

constexpr double kProfileStep = 0.5;  // m
constexpr double kPlanLateralAccel = 2.2;

// Stationary AR(1) noise with the given standard deviation.
class SmoothNoise {
 public:
  SmoothNoise(double sigma, double rho) : sigma_(sigma), rho_(rho) {}
  double next(std::mt19937_64& rng) {
    if (sigma_ <= 0.0) return 0.0;
    value_ = rho_ * value_ + std::sqrt(1.0 - rho_ * rho_) * sigma_ * normal_(rng);
    return value_;
  }

 private:
  double sigma_;
  double rho_;
  double value_ = 0.0;
  std::normal_distribution<double> normal_{0.0, 1.0};
};

struct SpeedProfile {
  double origin = 0.0;
  std::vector<double> ceiling;  // hard limit, m/s
  std::vector<double> plan;     // anticipatory target, m/s

  std::size_t index(double x) const {
    double i = std::floor((x - origin) / kProfileStep);
    return static_cast<std::size_t>(std::clamp(i, 0.0, static_cast<double>(plan.size() - 1)));
  }
};

SpeedProfile build_profile(const RouteGeometry& geo, const DriverParams& p) {
  SpeedProfile prof;
  prof.origin = geo.start();
  auto n = static_cast<std::size_t>(std::ceil((geo.end() - geo.start()) / kProfileStep)) + 2;
  prof.ceiling.resize(n);
  prof.plan.resize(n);
  for (std::size_t i = 0; i < n; ++i) {
    double x = prof.origin + i * kProfileStep;
    double limit = geo.speed_limit_at(x) / 3.6;
    double kappa = std::max(geo.path_curvature_at(x), 1e-9);
    prof.ceiling[i] = std::min(limit, std::sqrt(kLateralAccelCap / kappa));
    prof.plan[i] = std::min(0.985 * limit, std::sqrt(kPlanLateralAccel / kappa));
  }
  auto zone = [&](double at) {
    for (std::size_t i = 0; i < n; ++i) {
      double x = prof.origin + i * kProfileStep;
      if (x >= at - p.stopZoneBefore - 2.0 && x <= at + p.stopZoneAfter) {
        prof.ceiling[i] = std::min(prof.ceiling[i], 8.0 / 3.6);
        prof.plan[i] = std::min(prof.plan[i], p.stopZoneSpeed / 3.6);
      }
    }
  };
  for (double at : geo.traffic_lights()) zone(at);
  for (double at : geo.crossings()) zone(at);
  for (std::size_t i = n - 1; i-- > 0;) {
    prof.plan[i] = std::min(prof.plan[i], std::sqrt(prof.plan[i + 1] * prof.plan[i + 1] +
                                                    2.0 * p.planDecel * kProfileStep));
  }
  return prof;
}

}  // namespace

DriveLog simulate_reference_driver(const RoadNetwork& net, const Route& route, double rate,
                                   std::uint64_t seed, const DriverParams& p) {
  if (!(rate > 0.0)) throw WorldError("sampling rate must be positive");
  if (auto err = route.validate(net); !err.empty()) throw WorldError("unreachable route: " + err);
  RouteGeometry geo(net, route);
  SpeedProfile prof = build_profile(geo, p);
  const Polyline& path = geo.path();

  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  const double style = 0.985 + 0.015 * unit(rng);       // fraction of the planned speed
  const double lookGain = 0.9 + 0.3 * unit(rng);        // pure-pursuit lookahead scale
  SmoothNoise steerNoise(p.steeringNoiseDeg, 0.9);
  SmoothNoise speedNoise(p.speedNoiseKmh / 3.6, 0.9);

  const double dt = 1.0 / rate;
  DriveLog log;
  log.rate = rate;

  auto pursuit = [&](double x, double v) {
    double ld = lookGain * std::max(6.0, 1.2 * v);
    Vec2 pos = path.point_at(x);
    Vec2 target = path.point_at(std::min(x + ld, path.length()));
    Vec2 d = target - pos;
    if (d.norm() < 1e-6) return 0.0;
    double alpha = wrap_rad(d.angle() - path.heading_at(x));
    double kappa = 2.0 * std::sin(alpha) / std::max(d.norm(), 1e-6);
    return rad2deg(std::atan(p.wheelbase * kappa)) * p.steeringRatio;
  };

  double x = geo.start();
  double v = 0.0;
  double a = 0.0;
  double s = pursuit(x, v);
  double sRate = 0.0;
  const double span = geo.end() - geo.start();
  const auto maxSteps = static_cast<std::size_t>(span / 0.5 * rate) + 1000;

  for (std::size_t k = 0; k < maxSteps && x <= geo.end(); ++k) {
    DriveSample smp;
    smp.t = static_cast<double>(k) / rate;
    smp.steering = std::clamp(s, -kMaxSteeringDeg, kMaxSteeringDeg);
    smp.speed = std::clamp(v * 3.6, 0.0, kMaxSpeedKmh);
    smp.position = path.point_at(x);
    smp.heading = path.heading_at(x);
    smp.routeOffset = x;
    log.samples.push_back(smp);

    // Longitudinal: anticipate the plan, track it under accel and jerk caps.
    double look = x + v * 1.5;
    double vRef = style * prof.plan[prof.index(look)] + speedNoise.next(rng);
    vRef = std::min({vRef, 0.99 * prof.ceiling[prof.index(x)], 0.99 * prof.ceiling[prof.index(x + v * 0.5)]});
    vRef = std::max(vRef, 0.5);
    double aDes = std::clamp(1.2 * (vRef - v), -p.maxDecel, p.maxAccel);
    double aNext = a + std::clamp(aDes - a, -p.longJerkCap * dt, p.longJerkCap * dt);
    double vNext = std::max(0.0, v + aNext * dt);
    double xNext = x + 0.5 * (v + vNext) * dt;
    double cap = prof.ceiling[prof.index(xNext)];
    if (vNext > cap) vNext = cap;
    a = (vNext - v) / dt;
    x = xNext;
    v = vNext;

    // Lateral: pure pursuit command, rate and jerk limited.
    double cmd = pursuit(x, v) + steerNoise.next(rng);
    double rDes = std::clamp((cmd - s) / 0.2, -p.steerRateCap, p.steerRateCap);
    sRate += std::clamp(rDes - sRate, -p.steerJerkCap * dt, p.steerJerkCap * dt);
    s += sRate * dt;
  }
  return log;
}

GpsTrace corrupt_gps(const DriveLog& log, double sigma, std::uint64_t seed) {
  if (!(sigma >= 0.0)) throw WorldError("GPS noise sigma must be non-negative");
  GpsTrace trace;
  trace.noiseSigma = sigma;
  trace.samples.reserve(log.samples.size());
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> noise(0.0, sigma > 0.0 ? sigma : 1.0);
  for (const auto& s : log.samples) {
    Vec2 p = s.position;
    if (sigma > 0.0) {
      double dx = noise(rng);
      double dy = noise(rng);
      p = p + Vec2{dx, dy};
    }
    trace.samples.push_back({s.t, p});
  }
  return trace;
}

}  // namespace drivelab
