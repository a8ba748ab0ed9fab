#pragma once

#include <cstdint>
#include <vector>

#include "drivelab/mapfeatures.hpp"
#include "drivelab/roadworld.hpp"

namespace drivelab::testing {

/// Feature rows built from ground-truth route offsets of scripted drives.
inline std::vector<FeatureRow> truth_rows(std::uint64_t seed, int routes, int legs = 5) {
  RoadNetwork net = generate_network(seed, 10, 0.5);
  std::vector<FeatureRow> rows;
  for (int r = 0; r < routes; ++r) {
    Route route = random_route(net, seed * 131 + r, legs);
    RouteGeometry geo(net, route);
    DriveLog log = simulate_reference_driver(net, route, 10.0, seed * 17 + r);
    std::vector<MapFeatureFrame> frames;
    for (const auto& s : log.samples) frames.push_back(extract_frame(geo, s.routeOffset));
    auto part = build_rows(r, frames, log);
    rows.insert(rows.end(), part.begin(), part.end());
  }
  return rows;
}

}  // namespace drivelab::testing
