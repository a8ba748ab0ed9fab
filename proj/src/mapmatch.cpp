#include "drivelab/mapmatch.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <string>

namespace drivelab {

namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();

struct Box {
  double minX, minY, maxX, maxY;
  double gap(Vec2 p) const {
    double dx = std::max({minX - p.x, 0.0, p.x - maxX});
    double dy = std::max({minY - p.y, 0.0, p.y - maxY});
    return std::hypot(dx, dy);
  }
};

class EdgeIndex {
 public:
  explicit EdgeIndex(const RoadNetwork& net) : net_(net) {
    for (const auto& e : net.edges()) {
      Box b{kInf, kInf, -kInf, -kInf};
      for (const auto& p : e.polyline.points()) {
        b.minX = std::min(b.minX, p.x);
        b.minY = std::min(b.minY, p.y);
        b.maxX = std::max(b.maxX, p.x);
        b.maxY = std::max(b.maxY, p.y);
      }
      boxes_.push_back(b);
    }
  }

  std::vector<Candidate> query(Vec2 p, double radius, std::size_t maxK) const {
    std::vector<Candidate> out;
    for (const auto& e : net_.edges()) {
      if (boxes_[e.id].gap(p) > radius) continue;
      Projection pr = e.polyline.project(p);
      if (pr.distance <= radius) out.push_back({e.id, pr.offset, pr.distance, pr.point});
    }
    std::sort(out.begin(), out.end(), [](const Candidate& a, const Candidate& b) {
      if (std::abs(a.distance - b.distance) <= 1e-9) return a.edge < b.edge;
      return a.distance < b.distance;
    });
    if (out.size() > maxK) out.resize(maxK);
    return out;
  }

 private:
  const RoadNetwork& net_;
  std::vector<Box> boxes_;
};

}  // namespace

std::vector<Candidate> candidate_projections(const RoadNetwork& net, Vec2 p, double radius,
                                             std::size_t maxK) {
  if (!(radius > 0.0)) throw MatchError("candidate radius must be positive");
  return EdgeIndex(net).query(p, radius, maxK);
}

NetworkDistances::NetworkDistances(const RoadNetwork& net) : net_(&net), n_(net.nodes().size()) {
  dist_.assign(n_ * n_, kInf);
  for (std::size_t i = 0; i < n_; ++i) dist_[i * n_ + i] = 0.0;
  for (const auto& e : net.edges()) {
    auto a = static_cast<std::size_t>(e.from), b = static_cast<std::size_t>(e.to);
    double w = e.lengthM();
    dist_[a * n_ + b] = std::min(dist_[a * n_ + b], w);
    dist_[b * n_ + a] = std::min(dist_[b * n_ + a], w);
  }
  for (std::size_t k = 0; k < n_; ++k)
    for (std::size_t i = 0; i < n_; ++i) {
      double ik = dist_[i * n_ + k];
      if (ik == kInf) continue;
      for (std::size_t j = 0; j < n_; ++j) {
        double via = ik + dist_[k * n_ + j];
        if (via < dist_[i * n_ + j]) dist_[i * n_ + j] = via;
      }
    }
}

double NetworkDistances::between(EdgeLocation a, EdgeLocation b) const {
  const auto& ea = net_->edge(a.edge);
  const auto& eb = net_->edge(b.edge);
  double best = kInf;
  if (a.edge == b.edge) best = std::abs(a.offset - b.offset);
  const int na[2] = {ea.from, ea.to};
  const double da[2] = {a.offset, ea.lengthM() - a.offset};
  const int nb[2] = {eb.from, eb.to};
  const double db[2] = {b.offset, eb.lengthM() - b.offset};
  for (int i = 0; i < 2; ++i)
    for (int j = 0; j < 2; ++j) best = std::min(best, da[i] + between_nodes(na[i], nb[j]) + db[j]);
  return best;
}

double route_distance(const RoadNetwork& net, EdgeLocation a, EdgeLocation b) {
  return NetworkDistances(net).between(a, b);
}

void HmmParams::validate() const {
  if (!(emissionSigma > 0.0) || !(transitionBeta > 0.0) || !(candidateRadius > 0.0) || candidatesPerSample == 0) {
    throw MatchError("HMM parameters must all be strictly positive");
  }
}

double emission_log_prob(double distance, double sigma) {
  double z = distance / sigma;
  return -0.5 * z * z - std::log(std::sqrt(2.0 * kPi) * sigma);
}

double transition_log_prob(double routeDistance, double straightDistance, double beta) {
  if (!std::isfinite(routeDistance)) return -kInf;
  return -std::abs(routeDistance - straightDistance) / beta - std::log(beta);
}

bool edges_adjacent(const RoadNetwork& net, int a, int b) {
  if (a == b) return true;
  const auto& ea = net.edge(a);
  const auto& eb = net.edge(b);
  return ea.from == eb.from || ea.from == eb.to || ea.to == eb.from || ea.to == eb.to;
}

std::vector<std::vector<Candidate>> matcher_candidates(const RoadNetwork& net, const GpsTrace& trace,
                                                       const HmmParams& params) {
  params.validate();
  EdgeIndex index(net);
  std::vector<std::vector<Candidate>> out;
  out.reserve(trace.samples.size());
  for (const auto& s : trace.samples) {
    auto c = index.query(s.position, params.candidateRadius, params.candidatesPerSample);
    if (c.empty()) {
      throw MatchError("no road within " + std::to_string(params.candidateRadius) + " m of GPS sample at t=" +
                       std::to_string(s.t) + " s");
    }
    std::sort(c.begin(), c.end(), [](const Candidate& a, const Candidate& b) { return a.edge < b.edge; });
    out.push_back(std::move(c));
  }
  return out;
}

MatchedPath viterbi_match(const RoadNetwork& net, const GpsTrace& trace, const HmmParams& params) {
  if (trace.samples.empty()) throw MatchError("cannot match an empty GPS trace");
  auto cands = matcher_candidates(net, trace, params);
  NetworkDistances dist(net);
  const std::size_t T = cands.size();

  std::vector<std::vector<double>> score(T);
  std::vector<std::vector<std::size_t>> back(T);
  // rank[t][j]: lexicographic rank of the best prefix ending in state j
  std::vector<std::vector<std::size_t>> rank(T);

  score[0].resize(cands[0].size());
  rank[0].resize(cands[0].size());
  for (std::size_t j = 0; j < cands[0].size(); ++j) {
    score[0][j] = emission_log_prob(cands[0][j].distance, params.emissionSigma);
    rank[0][j] = j;
  }

  constexpr auto kNone = static_cast<std::size_t>(-1);
  for (std::size_t t = 1; t < T; ++t) {
    const auto& prev = cands[t - 1];
    const auto& cur = cands[t];
    double straight = distance(trace.samples[t - 1].position, trace.samples[t].position);
    score[t].assign(cur.size(), -kInf);
    back[t].assign(cur.size(), kNone);
    for (std::size_t j = 0; j < cur.size(); ++j) {
      double best = -kInf;
      std::size_t arg = kNone;
      for (std::size_t i = 0; i < prev.size(); ++i) {
        if (score[t - 1][i] == -kInf) continue;
        if (!edges_adjacent(net, prev[i].edge, cur[j].edge)) continue;
        double rd = dist.between({prev[i].edge, prev[i].offset}, {cur[j].edge, cur[j].offset});
        double tr = transition_log_prob(rd, straight, params.transitionBeta);
        if (tr == -kInf) continue;
        double v = score[t - 1][i] + tr;
        if (arg == kNone || v > best || (v == best && rank[t - 1][i] < rank[t - 1][arg])) {
          best = v;
          arg = i;
        }
      }
      back[t][j] = arg;
      if (arg != kNone) score[t][j] = best + emission_log_prob(cur[j].distance, params.emissionSigma);
    }
    std::vector<std::size_t> order(cur.size());
    std::iota(order.begin(), order.end(), 0);
    auto key = [&](std::size_t j) {
      return back[t][j] == kNone ? kNone : rank[t - 1][back[t][j]];
    };
    std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
      if (key(a) != key(b)) return key(a) < key(b);
      return cur[a].edge < cur[b].edge;
    });
    rank[t].resize(cur.size());
    for (std::size_t r = 0; r < order.size(); ++r) rank[t][order[r]] = r;
    if (std::all_of(score[t].begin(), score[t].end(), [](double s) { return s == -kInf; })) {
      throw MatchError("GPS sample at t=" + std::to_string(trace.samples[t].t) +
                       " s is not reachable from any candidate of the previous sample");
    }
  }

  std::size_t arg = kNone;
  for (std::size_t j = 0; j < cands[T - 1].size(); ++j) {
    if (score[T - 1][j] == -kInf) continue;
    if (arg == kNone || score[T - 1][j] > score[T - 1][arg] ||
        (score[T - 1][j] == score[T - 1][arg] && rank[T - 1][j] < rank[T - 1][arg])) {
      arg = j;
    }
  }

  MatchedPath path;
  path.totalLogProb = score[T - 1][arg];
  path.samples.resize(T);
  for (std::size_t t = T; t-- > 0;) {
    const auto& c = cands[t][arg];
    path.samples[t] = {trace.samples[t].t, c.edge, c.offset, c.point};
    if (t > 0) arg = back[t][arg];
  }
  return path;
}

}  // namespace drivelab
