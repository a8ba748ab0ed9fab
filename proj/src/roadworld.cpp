#include "drivelab/roadworld.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <queue>
#include <random>
#include <set>
#include <sstream>

namespace drivelab {

double curve_speed_cap_kmh(double curvature) {
  if (curvature <= 0.0) return std::numeric_limits<double>::infinity();
  return std::sqrt(kLateralAccelCap / curvature) * 3.6;
}

double RoadEdge::heading_from(int node) const {
  const auto& p = polyline.points();
  if (node == from) return (p[1] - p[0]).angle();
  if (node == to) return (p[p.size() - 2] - p.back()).angle();
  throw WorldError("node " + std::to_string(node) + " is not an endpoint of edge " +
                   std::to_string(id));
}

namespace {

double angle_0_2pi(double a) {
  double w = std::fmod(a, 2.0 * kPi);
  if (w < 0.0) w += 2.0 * kPi;
  return w;
}

}  // namespace

RoadNetwork::RoadNetwork(std::vector<RoadNode> nodes, std::vector<RoadEdge> edges)
    : nodes_(std::move(nodes)), edges_(std::move(edges)) {
  for (std::size_t i = 0; i < nodes_.size(); ++i) {
    if (nodes_[i].id != static_cast<int>(i)) throw WorldError("node ids must be dense and ordered");
    nodes_[i].incident.clear();
  }
  for (std::size_t i = 0; i < edges_.size(); ++i) {
    const auto& e = edges_[i];
    if (e.id != static_cast<int>(i)) throw WorldError("edge ids must be dense and ordered");
    if (e.from < 0 || e.to < 0 || e.from >= static_cast<int>(nodes_.size()) ||
        e.to >= static_cast<int>(nodes_.size())) {
      throw WorldError("edge " + std::to_string(e.id) + " references a missing node");
    }
    if (e.polyline.size() < 2) throw WorldError("edge " + std::to_string(e.id) + " has no geometry");
    nodes_[e.from].incident.push_back(e.id);
    if (e.to != e.from) nodes_[e.to].incident.push_back(e.id);
  }
  for (auto& n : nodes_) {
    std::sort(n.incident.begin(), n.incident.end(), [&](int a, int b) {
      double ha = angle_0_2pi(edges_[a].heading_from(n.id));
      double hb = angle_0_2pi(edges_[b].heading_from(n.id));
      if (ha != hb) return ha < hb;
      return a < b;
    });
  }
}

const RoadEdge& RoadNetwork::edge(int id) const {
  if (id < 0 || id >= static_cast<int>(edges_.size())) {
    throw WorldError("unknown edge id " + std::to_string(id));
  }
  return edges_[id];
}

const RoadNode& RoadNetwork::node(int id) const {
  if (id < 0 || id >= static_cast<int>(nodes_.size())) {
    throw WorldError("unknown node id " + std::to_string(id));
  }
  return nodes_[id];
}

std::vector<int> RoadNetwork::intersections() const {
  std::vector<int> out;
  for (const auto& n : nodes_)
    if (n.incident.size() >= 3) out.push_back(n.id);
  return out;
}

double RoadNetwork::max_edge_length() const {
  double m = 0.0;
  for (const auto& e : edges_) m = std::max(m, e.lengthM());
  return m;
}

std::vector<std::string> RoadNetwork::check_invariants() const {
  std::vector<std::string> issues;
  if (nodes_.empty()) {
    issues.emplace_back("network has no nodes");
    return issues;
  }
  // connectivity
  std::vector<char> seen(nodes_.size(), 0);
  std::queue<int> q;
  q.push(0);
  seen[0] = 1;
  while (!q.empty()) {
    int n = q.front();
    q.pop();
    for (int eid : nodes_[n].incident) {
      const auto& e = edges_[eid];
      int other = e.from == n ? e.to : e.from;
      if (!seen[other]) {
        seen[other] = 1;
        q.push(other);
      }
    }
  }
  if (std::find(seen.begin(), seen.end(), 0) != seen.end()) issues.emplace_back("graph is not connected");

  for (const auto& e : edges_) {
    std::string tag = "edge " + std::to_string(e.id) + ": ";
    const auto& pts = e.polyline.points();
    for (std::size_t i = 1; i < pts.size(); ++i) {
      if (distance(pts[i - 1], pts[i]) < 0.1) {
        issues.push_back(tag + "degenerate polyline segment at vertex " + std::to_string(i));
        break;
      }
    }
    if (distance(pts.front(), nodes_[e.from].position) > 1e-6 ||
        distance(pts.back(), nodes_[e.to].position) > 1e-6) {
      issues.push_back(tag + "polyline does not start and end at its nodes");
    }
    if (std::find(std::begin(kSpeedLimitBins), std::end(kSpeedLimitBins), e.speedLimit) ==
        std::end(kSpeedLimitBins)) {
      issues.push_back(tag + "speed limit " + std::to_string(e.speedLimit) + " not in {30,50,80,120}");
    }
    for (const auto* list : {&e.trafficLights, &e.pedestrianCrossings, &e.yieldSigns}) {
      for (double o : *list) {
        if (o < 0.0 || o > e.lengthM()) issues.push_back(tag + "attribute offset outside edge");
      }
    }
  }
  for (const auto& n : nodes_) {
    for (std::size_t i = 1; i < n.incident.size(); ++i) {
      double a = angle_0_2pi(edges_[n.incident[i - 1]].heading_from(n.id));
      double b = angle_0_2pi(edges_[n.incident[i]].heading_from(n.id));
      if (a > b) issues.push_back("node " + std::to_string(n.id) + ": incident edges not CCW ordered");
    }
  }
  return issues;
}

namespace {

std::vector<Vec2> straight_polyline(Vec2 a, Vec2 b) { return {a, b}; }

// Raised-cosine lateral bulge; zero offset and zero slope at both ends, so
// roads leave junctions along the chord. Peak curvature equals `curvature`.
std::vector<Vec2> curved_polyline(Vec2 a, Vec2 b, double curvature, int halfWaves, double side) {
  Vec2 chord = b - a;
  double len = chord.norm();
  Vec2 dir = chord * (1.0 / len);
  Vec2 normal{-dir.y, dir.x};
  double n = halfWaves;
  double amp = curvature * len * len / (2.0 * kPi * kPi * n * n);
  int steps = std::max(8, static_cast<int>(std::ceil(len / 2.0)));
  std::vector<Vec2> pts;
  pts.reserve(steps + 1);
  for (int i = 0; i <= steps; ++i) {
    double u = static_cast<double>(i) / steps;
    double lateral = side * amp * 0.5 * (1.0 - std::cos(2.0 * kPi * n * u));
    pts.push_back(a + chord * u + normal * lateral);
  }
  pts.front() = a;
  pts.back() = b;
  return pts;
}

}  // namespace

RoadNetwork generate_network(const WorldParams& params) {
  if (params.numIntersections < 2) {
    throw WorldError("numIntersections must be at least 2, got " +
                     std::to_string(params.numIntersections));
  }
  if (!(params.urbanFraction >= 0.0 && params.urbanFraction <= 1.0)) {
    throw WorldError("urbanFraction must lie in [0, 1]");
  }
  std::mt19937_64 rng(params.seed);
  std::uniform_real_distribution<double> unit(0.0, 1.0);

  // Grid whose non-corner nodes (degree >= 3) number at least numIntersections.
  int need = params.numIntersections + 4;
  int rows = std::max(2, static_cast<int>(std::floor(std::sqrt(static_cast<double>(need)))));
  int cols = std::max(3, (need + rows - 1) / rows);
  while (rows * cols - 4 < params.numIntersections) ++cols;

  const double spacing = params.blockSpacing;
  const double jitter = 0.08 * spacing;
  std::vector<RoadNode> nodes;
  for (int i = 0; i < rows; ++i) {
    for (int j = 0; j < cols; ++j) {
      RoadNode n;
      n.id = i * cols + j;
      n.position = {j * spacing + (2.0 * unit(rng) - 1.0) * jitter,
                    i * spacing + (2.0 * unit(rng) - 1.0) * jitter};
      nodes.push_back(n);
    }
  }

  // Urban core: the nodes closest to the grid centre.
  Vec2 centre{(cols - 1) * spacing / 2.0, (rows - 1) * spacing / 2.0};
  std::vector<int> order(nodes.size());
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(), [&](int a, int b) {
    return distance(nodes[a].position, centre) < distance(nodes[b].position, centre);
  });
  auto urbanCount = static_cast<std::size_t>(std::llround(params.urbanFraction * nodes.size()));
  std::vector<char> urbanNode(nodes.size(), 0);
  for (std::size_t k = 0; k < urbanCount; ++k) urbanNode[order[k]] = 1;

  std::vector<std::pair<int, int>> links;
  for (int i = 0; i < rows; ++i) {
    for (int j = 0; j < cols; ++j) {
      int id = i * cols + j;
      if (j + 1 < cols) links.emplace_back(id, id + 1);
      if (i + 1 < rows) links.emplace_back(id, id + cols);
    }
  }

  std::vector<RoadEdge> edges;
  for (const auto& [a, b] : links) {
    RoadEdge e;
    e.id = static_cast<int>(edges.size());
    e.from = a;
    e.to = b;
    Vec2 pa = nodes[a].position;
    Vec2 pb = nodes[b].position;
    bool urban = urbanNode[a] && urbanNode[b];
    if (params.urbanFraction >= 1.0) urban = true;
    if (urban) {
      e.speedLimit = unit(rng) < 0.3 ? 30 : 50;
      e.polyline = Polyline(straight_polyline(pa, pb));
      double len = e.lengthM();
      if (len > 60.0) {
        if (unit(rng) < params.trafficLightProb) e.trafficLights.push_back(15.0);
        if (unit(rng) < params.trafficLightProb) e.trafficLights.push_back(len - 15.0);
        std::poisson_distribution<int> crossings(params.crossingsPer100m * (len - 60.0) / 100.0);
        int count = crossings(rng);
        for (int k = 0; k < count; ++k) e.pedestrianCrossings.push_back(30.0 + unit(rng) * (len - 60.0));
        std::sort(e.pedestrianCrossings.begin(), e.pedestrianCrossings.end());
        if (unit(rng) < 0.25) e.yieldSigns.push_back(len - 8.0);
      }
    } else {
      e.speedLimit = unit(rng) < 0.65 ? 80 : 120;
      double kappa;
      if (e.speedLimit == 80) {
        kappa = unit(rng) < 0.75 ? 0.011 + 0.009 * unit(rng) : 0.003 + 0.005 * unit(rng);
      } else {
        kappa = 0.002 * unit(rng);
      }
      double chord = distance(pa, pb);
      int halfWaves = chord > 450.0 ? 2 : 1;
      double side = unit(rng) < 0.5 ? -1.0 : 1.0;
      e.polyline = Polyline(curved_polyline(pa, pb, kappa, halfWaves, side));
      if (unit(rng) < 0.2) e.yieldSigns.push_back(e.lengthM() - 10.0);
    }
    edges.push_back(std::move(e));
  }
  return RoadNetwork(std::move(nodes), std::move(edges));
}

RoadNetwork generate_network(std::uint64_t seed, int numIntersections, double urbanFraction) {
  WorldParams p;
  p.seed = seed;
  p.numIntersections = numIntersections;
  p.urbanFraction = urbanFraction;
  return generate_network(p);
}

namespace {

int leg_start_node(const RoadNetwork& net, const RouteLeg& leg) {
  const auto& e = net.edge(leg.edge);
  return leg.forward ? e.from : e.to;
}

int leg_end_node(const RoadNetwork& net, const RouteLeg& leg) {
  const auto& e = net.edge(leg.edge);
  return leg.forward ? e.to : e.from;
}

}  // namespace

std::string Route::validate(const RoadNetwork& net) const {
  if (legs.empty()) return "route has no legs";
  for (const auto& leg : legs) {
    if (leg.edge < 0 || leg.edge >= static_cast<int>(net.edges().size())) {
      return "route references unknown edge " + std::to_string(leg.edge);
    }
  }
  for (std::size_t i = 1; i < legs.size(); ++i) {
    if (leg_end_node(net, legs[i - 1]) != leg_start_node(net, legs[i])) {
      return "legs " + std::to_string(i - 1) + " and " + std::to_string(i) + " do not share a node";
    }
  }
  double firstLen = net.edge(legs.front().edge).lengthM();
  double lastLen = net.edge(legs.back().edge).lengthM();
  if (startOffset < 0.0 || startOffset > firstLen) return "start offset outside first leg";
  if (endOffset < 0.0 || endOffset > lastLen) return "end offset outside last leg";
  double total = 0.0;
  for (const auto& leg : legs) total += net.edge(leg.edge).lengthM();
  total -= startOffset + (lastLen - endOffset);
  if (!(total > 0.0)) return "route has non-positive length";
  return {};
}

Route random_route(const RoadNetwork& net, std::uint64_t seed, int numLegs) {
  if (net.edges().empty()) throw WorldError("network has no edges");
  if (numLegs < 1) throw WorldError("route needs at least one leg");
  std::mt19937_64 rng(seed);
  Route r;
  std::uniform_int_distribution<int> pickEdge(0, static_cast<int>(net.edges().size()) - 1);
  RouteLeg leg{pickEdge(rng), std::uniform_int_distribution<int>(0, 1)(rng) == 1};
  std::set<int> used{leg.edge};
  r.legs.push_back(leg);
  while (static_cast<int>(r.legs.size()) < numLegs) {
    int node = leg_end_node(net, r.legs.back());
    std::vector<int> options;
    for (int eid : net.node(node).incident)
      if (!used.count(eid)) options.push_back(eid);
    if (options.empty()) break;
    int eid = options[std::uniform_int_distribution<std::size_t>(0, options.size() - 1)(rng)];
    const auto& e = net.edge(eid);
    RouteLeg next{eid, e.from == node};
    used.insert(eid);
    r.legs.push_back(next);
  }
  r.startOffset = 0.0;
  r.endOffset = net.edge(r.legs.back().edge).lengthM();
  return r;
}

// ---------------------------------------------------------------------------

RouteGeometry::RouteGeometry(const RoadNetwork& net, const Route& route) : legs_(route.legs) {
  if (auto err = route.validate(net); !err.empty()) throw WorldError("invalid route: " + err);

  // Raw concatenated polyline in travel direction.
  std::vector<Vec2> raw;
  for (const auto& leg : legs_) {
    const auto& e = net.edge(leg.edge);
    legEdges_.push_back(e.polyline);
    legLimits_.push_back(e.speedLimit);
    legRawStart_.push_back(raw.empty() ? 0.0 : Polyline(raw).length());
    std::vector<Vec2> pts = e.polyline.points();
    if (!leg.forward) std::reverse(pts.begin(), pts.end());
    raw.insert(raw.end(), raw.empty() ? pts.begin() : pts.begin() + 1, pts.end());
  }
  Polyline rawLine(raw);
  rawLength_ = rawLine.length();

  struct Corner {
    double at, half;
    Vec2 node;
  };
  std::vector<Corner> corners;
  for (std::size_t i = 1; i < legs_.size(); ++i) {
    double at = legRawStart_[i];
    double half = std::min({10.0, 0.4 * legEdges_[i - 1].length(), 0.4 * legEdges_[i].length()});
    double turn = wrap_rad(rawLine.heading_at(at) - rawLine.heading_at(std::nextafter(at, 0.0)));
    if (std::abs(turn) < deg2rad(1.0)) half = 0.0;
    corners.push_back({at, half, rawLine.point_at(at)});
  }

  // Driven path: raw vertices outside corner zones, quadratic Bezier inside.
  std::vector<Vec2> driven;
  std::vector<std::pair<std::size_t, std::size_t>> cornerIdx;  // indices of zone start/end
  const auto& cum = rawLine.cumulative();
  std::size_t c = 0;
  auto push = [&](Vec2 p) {
    if (driven.empty() || distance(driven.back(), p) > 1e-6) driven.push_back(p);
  };
  constexpr auto kNone = static_cast<std::size_t>(-1);
  std::size_t v = 0;
  while (v < raw.size()) {
    while (c < corners.size() && corners[c].half <= 0.0) {
      cornerIdx.emplace_back(kNone, kNone);
      ++c;
    }
    if (c < corners.size() && cum[v] > corners[c].at - corners[c].half) {
      const auto& k = corners[c];
      Vec2 pa = rawLine.point_at(k.at - k.half);
      Vec2 pb = rawLine.point_at(k.at + k.half);
      push(pa);
      std::size_t ia = driven.size() - 1;
      constexpr int kSteps = 24;
      for (int j = 1; j < kSteps; ++j) {
        double u = static_cast<double>(j) / kSteps;
        push(pa * ((1 - u) * (1 - u)) + k.node * (2 * u * (1 - u)) + pb * (u * u));
      }
      push(pb);
      cornerIdx.emplace_back(ia, driven.size() - 1);
      while (v < raw.size() && cum[v] <= k.at + k.half) ++v;
      ++c;
      continue;
    }
    push(raw[v]);
    ++v;
  }
  path_ = Polyline(driven);

  knots_.emplace_back(0.0, 0.0);
  for (std::size_t k = 0; k < corners.size(); ++k) {
    if (corners[k].half <= 0.0) continue;
    const auto& pc = path_.cumulative();
    knots_.emplace_back(corners[k].at - corners[k].half, pc[cornerIdx[k].first]);
    knots_.emplace_back(corners[k].at + corners[k].half, pc[cornerIdx[k].second]);
  }
  knots_.emplace_back(rawLength_, path_.length());

  double lastLen = legEdges_.back().length();
  start_ = raw_to_driven(route.startOffset);
  end_ = raw_to_driven(rawLength_ - (lastLen - route.endOffset));

  auto collect = [&](auto member, std::vector<double>& out) {
    for (std::size_t i = 0; i < legs_.size(); ++i) {
      const auto& e = net.edge(legs_[i].edge);
      double len = e.lengthM();
      for (double o : e.*member) {
        double rawOff = legRawStart_[i] + (legs_[i].forward ? o : len - o);
        double d = raw_to_driven(rawOff);
        if (d >= start_ && d <= end_) out.push_back(d);
      }
    }
    std::sort(out.begin(), out.end());
  };
  collect(&RoadEdge::trafficLights, lights_);
  collect(&RoadEdge::pedestrianCrossings, crossings_);
  collect(&RoadEdge::yieldSigns, yields_);

  for (std::size_t i = 1; i < legs_.size(); ++i) {
    JunctionPass jp;
    const auto& in = net.edge(legs_[i - 1].edge);
    const auto& out = net.edge(legs_[i].edge);
    jp.node = legs_[i - 1].forward ? in.to : in.from;
    jp.offset = raw_to_driven(legRawStart_[i]);
    const auto& node = net.node(jp.node);
    jp.intersection = node.incident.size() >= 3;
    jp.entryHeading = wrap_rad(in.heading_from(jp.node) + kPi);
    jp.exitHeading = out.heading_from(jp.node);
    auto pos = [&](int eid) {
      return static_cast<int>(std::find(node.incident.begin(), node.incident.end(), eid) -
                              node.incident.begin());
    };
    int deg = static_cast<int>(node.incident.size());
    jp.turnNumber = ((pos(out.id) - pos(in.id)) % deg + deg) % deg;
    for (int eid : node.incident) {
      if (eid == in.id || eid == out.id) continue;
      jp.otherHeadings.push_back(net.edge(eid).heading_from(jp.node));
    }
    junctions_.push_back(std::move(jp));
  }
}

double RouteGeometry::raw_to_driven(double raw) const {
  raw = std::clamp(raw, 0.0, rawLength_);
  auto it = std::upper_bound(knots_.begin(), knots_.end(), raw,
                             [](double v, const auto& k) { return v < k.first; });
  if (it == knots_.end()) return knots_.back().second;
  if (it == knots_.begin()) return knots_.front().second;
  auto lo = *(it - 1);
  auto hi = *it;
  double span = hi.first - lo.first;
  double u = span > 0.0 ? (raw - lo.first) / span : 0.0;
  return lo.second + u * (hi.second - lo.second);
}

double RouteGeometry::driven_to_raw(double driven) const {
  driven = std::clamp(driven, 0.0, path_.length());
  auto it = std::upper_bound(knots_.begin(), knots_.end(), driven,
                             [](double v, const auto& k) { return v < k.second; });
  if (it == knots_.end()) return knots_.back().first;
  if (it == knots_.begin()) return knots_.front().first;
  auto lo = *(it - 1);
  auto hi = *it;
  double span = hi.second - lo.second;
  double u = span > 0.0 ? (driven - lo.second) / span : 0.0;
  return lo.first + u * (hi.first - lo.first);
}

std::size_t RouteGeometry::leg_at(double driven) const {
  double raw = driven_to_raw(driven);
  auto it = std::upper_bound(legRawStart_.begin(), legRawStart_.end(), raw);
  return static_cast<std::size_t>(std::max<std::ptrdiff_t>(0, (it - legRawStart_.begin()) - 1));
}

std::pair<std::size_t, double> RouteGeometry::edge_location(double driven) const {
  double raw = driven_to_raw(driven);
  std::size_t i = leg_at(driven);
  double len = legEdges_[i].length();
  double along = std::clamp(raw - legRawStart_[i], 0.0, len);
  return {i, legs_[i].forward ? along : len - along};
}

std::optional<double> RouteGeometry::route_offset(int edgeId, double edgeOffset) const {
  for (std::size_t i = 0; i < legs_.size(); ++i) {
    if (legs_[i].edge != edgeId) continue;
    double len = legEdges_[i].length();
    double o = std::clamp(edgeOffset, 0.0, len);
    return raw_to_driven(legRawStart_[i] + (legs_[i].forward ? o : len - o));
  }
  return std::nullopt;
}

int RouteGeometry::speed_limit_at(double driven) const { return legLimits_[leg_at(driven)]; }

double RouteGeometry::road_curvature_at(double driven) const {
  auto [i, off] = edge_location(driven);
  double k = legEdges_[i].signed_curvature_at(off, 5.0);
  return legs_[i].forward ? k : -k;
}

}  // namespace drivelab
