#pragma once

// Independent reference implementations used by the unit and acceptance
// suites. Nothing here calls the code path it is meant to check.

#include <algorithm>
#include <cmath>
#include <functional>
#include <limits>
#include <random>
#include <vector>

#include "drivelab/mapmatch.hpp"
#include "drivelab/roadworld.hpp"

namespace drivelab::oracle {

inline double point_segment_distance(Vec2 p, Vec2 a, Vec2 b) {
  Vec2 d = b - a;
  double len2 = d.x * d.x + d.y * d.y;
  double u = len2 > 0 ? ((p.x - a.x) * d.x + (p.y - a.y) * d.y) / len2 : 0.0;
  u = std::clamp(u, 0.0, 1.0);
  Vec2 q{a.x + u * d.x, a.y + u * d.y};
  return std::hypot(p.x - q.x, p.y - q.y);
}

/// Edge ids within `radius` of `p`, by scanning every segment of every edge.
inline std::vector<std::pair<int, double>> edges_within(const RoadNetwork& net, Vec2 p, double radius) {
  std::vector<std::pair<int, double>> out;
  for (const auto& e : net.edges()) {
    double best = std::numeric_limits<double>::infinity();
    const auto& pts = e.polyline.points();
    for (std::size_t i = 1; i < pts.size(); ++i) best = std::min(best, point_segment_distance(p, pts[i - 1], pts[i]));
    if (best <= radius) out.emplace_back(e.id, best);
  }
  return out;
}

/// Shortest node-to-node distance by enumerating simple paths.
inline double enumerate_node_distance(const RoadNetwork& net, int from, int to) {
  double best = std::numeric_limits<double>::infinity();
  std::vector<char> visited(net.nodes().size(), 0);
  std::function<void(int, double)> dfs = [&](int node, double acc) {
    if (node == to) {
      best = std::min(best, acc);
      return;
    }
    for (const auto& e : net.edges()) {
      int other = -1;
      if (e.from == node) other = e.to;
      else if (e.to == node) other = e.from;
      if (other < 0 || visited[other]) continue;
      visited[other] = 1;
      dfs(other, acc + e.lengthM());
      visited[other] = 0;
    }
  };
  visited[from] = 1;
  dfs(from, 0.0);
  return best;
}

/// Along-network distance: leave edge a by either end, enter edge b by either end.
inline double enumerate_route_distance(const RoadNetwork& net, EdgeLocation a, EdgeLocation b) {
  double best = std::numeric_limits<double>::infinity();
  if (a.edge == b.edge) best = std::abs(a.offset - b.offset);
  const auto& ea = net.edge(a.edge);
  const auto& eb = net.edge(b.edge);
  for (int i = 0; i < 2; ++i) {
    for (int j = 0; j < 2; ++j) {
      double da = i == 0 ? a.offset : ea.lengthM() - a.offset;
      double db = j == 0 ? b.offset : eb.lengthM() - b.offset;
      int na = i == 0 ? ea.from : ea.to;
      int nb = j == 0 ? eb.from : eb.to;
      best = std::min(best, da + enumerate_node_distance(net, na, nb) + db);
    }
  }
  return best;
}

struct BruteForceResult {
  std::vector<int> edges;
  std::vector<double> offsets;
  double logProb = -std::numeric_limits<double>::infinity();
};

/// Enumerates every candidate sequence (candidates in edge-id order, so the
/// first strictly better sequence found is the lexicographically smallest
/// among the optimal ones).
inline BruteForceResult brute_force_match(const RoadNetwork& net, const GpsTrace& trace, const HmmParams& hp) {
  auto cands = matcher_candidates(net, trace, hp);
  const std::size_t T = cands.size();
  BruteForceResult best;
  std::vector<std::size_t> pick(T, 0);
  std::function<void(std::size_t, double)> rec = [&](std::size_t t, double acc) {
    if (t == T) {
      if (acc > best.logProb) {
        best.logProb = acc;
        best.edges.clear();
        best.offsets.clear();
        for (std::size_t k = 0; k < T; ++k) {
          best.edges.push_back(cands[k][pick[k]].edge);
          best.offsets.push_back(cands[k][pick[k]].offset);
        }
      }
      return;
    }
    for (std::size_t j = 0; j < cands[t].size(); ++j) {
      const auto& c = cands[t][j];
      double total;
      if (t == 0) {
        total = emission_log_prob(c.distance, hp.emissionSigma);
      } else {
        const auto& p = cands[t - 1][pick[t - 1]];
        if (!edges_adjacent(net, p.edge, c.edge)) continue;
        double rd = enumerate_route_distance(net, {p.edge, p.offset}, {c.edge, c.offset});
        double straight = distance(trace.samples[t - 1].position, trace.samples[t].position);
        double tr = transition_log_prob(rd, straight, hp.transitionBeta);
        if (!std::isfinite(tr)) continue;
        total = acc + tr;
        total = total + emission_log_prob(c.distance, hp.emissionSigma);
      }
      pick[t] = j;
      rec(t + 1, total);
    }
  };
  rec(0, 0.0);
  return best;
}

struct SmallInstance {
  RoadNetwork net;
  GpsTrace trace;
};

/// Random connected graph of at most `maxEdges` straight roads on a 40 m
/// lattice, plus a noisy walk of at most `maxSamples` GPS samples along it.
/// Integer edge lengths keep node-to-node sums exact in any order, and the
/// lattice produces frequent exact ties.
inline SmallInstance random_small_instance(std::uint64_t seed, int maxEdges = 8, int maxSamples = 10) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  auto pick = [&](std::size_t n) { return static_cast<std::size_t>(unit(rng) * n) % n; };
  constexpr int kSide = 3;
  constexpr double kSpacing = 40.0;
  auto lattice_neighbours = [](int cell) {
    std::vector<int> out;
    int r = cell / kSide, c = cell % kSide;
    if (r > 0) out.push_back(cell - kSide);
    if (r < kSide - 1) out.push_back(cell + kSide);
    if (c > 0) out.push_back(cell - 1);
    if (c < kSide - 1) out.push_back(cell + 1);
    return out;
  };

  // Grow a random tree over lattice cells, then add extra lattice links.
  std::vector<int> cellOf;             // node id -> lattice cell
  std::vector<int> nodeOf(kSide * kSide, -1);
  std::vector<std::pair<int, int>> links;
  int first = static_cast<int>(pick(kSide * kSide));
  nodeOf[first] = 0;
  cellOf.push_back(first);
  int target = 2 + static_cast<int>(pick(maxEdges - 1));
  int attempts = 0;
  while (static_cast<int>(links.size()) < target && attempts++ < 200) {
    int a = static_cast<int>(pick(cellOf.size()));
    auto nb = lattice_neighbours(cellOf[a]);
    int cell = nb[pick(nb.size())];
    int b = nodeOf[cell];
    if (b < 0) {
      b = static_cast<int>(cellOf.size());
      nodeOf[cell] = b;
      cellOf.push_back(cell);
    } else if (std::find(links.begin(), links.end(), std::make_pair(a, b)) != links.end() ||
               std::find(links.begin(), links.end(), std::make_pair(b, a)) != links.end()) {
      continue;
    }
    links.emplace_back(a, b);
  }

  std::vector<RoadNode> nodes;
  for (std::size_t i = 0; i < cellOf.size(); ++i) {
    Vec2 p{(cellOf[i] % kSide) * kSpacing, (cellOf[i] / kSide) * kSpacing};
    nodes.push_back({static_cast<int>(i), p, {}});
  }
  std::vector<RoadEdge> edges;
  for (auto [a, b] : links) {
    RoadEdge e;
    e.id = static_cast<int>(edges.size());
    e.from = a;
    e.to = b;
    e.speedLimit = 50;
    e.polyline = Polyline({nodes[a].position, nodes[b].position});
    edges.push_back(std::move(e));
  }
  RoadNetwork net(nodes, edges);

  int nSamples = 2 + static_cast<int>(pick(maxSamples - 1));
  int edge = static_cast<int>(pick(net.edges().size()));
  double off = std::round(unit(rng) * net.edge(edge).lengthM());
  bool fwd = unit(rng) < 0.5;
  GpsTrace trace;
  trace.noiseSigma = 5.0;
  // Integer-metre noise so that exact geometric ties occur.
  std::uniform_int_distribution<int> noise(-6, 6);
  for (int k = 0; k < nSamples; ++k) {
    Vec2 p = net.edge(edge).polyline.point_at(off);
    trace.samples.push_back({k * 0.1, {std::round(p.x) + noise(rng), std::round(p.y) + noise(rng)}});
    off += (fwd ? 1.0 : -1.0) * (3.0 + std::round(unit(rng) * 10.0));
    const auto& e = net.edge(edge);
    if (off > e.lengthM() || off < 0) {
      int node = off > e.lengthM() ? e.to : e.from;
      const auto& inc = net.node(node).incident;
      int next = inc[pick(inc.size())];
      edge = next;
      fwd = net.edge(next).from == node;
      off = fwd ? 0.0 : net.edge(next).lengthM();
    }
  }
  return {std::move(net), std::move(trace)};
}

}  // namespace drivelab::oracle
