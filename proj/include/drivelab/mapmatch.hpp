#pragma once

#include <cstddef>
#include <stdexcept>
#include <vector>

#include "drivelab/roadworld.hpp"

namespace drivelab {

class MatchError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

struct EdgeLocation {
  int edge = 0;
  double offset = 0.0;
};

struct Candidate {
  int edge = 0;
  double offset = 0.0;
  double distance = 0.0;
  Vec2 point;
};

/// Closest projection onto every edge within `radius`, nearest first; distance
/// ties (within 1e-9 m) ordered by edge id. At most `maxK` are returned.
std::vector<Candidate> candidate_projections(const RoadNetwork& net, Vec2 p, double radius,
                                             std::size_t maxK);

/// All-pairs node distances for along-network distance queries.
class NetworkDistances {
 public:
  explicit NetworkDistances(const RoadNetwork& net);

  double between_nodes(int a, int b) const { return dist_[static_cast<std::size_t>(a) * n_ + b]; }
  /// Shortest undirected along-network distance; +infinity when disconnected.
  double between(EdgeLocation a, EdgeLocation b) const;

 private:
  const RoadNetwork* net_;
  std::size_t n_ = 0;
  std::vector<double> dist_;
};

double route_distance(const RoadNetwork& net, EdgeLocation a, EdgeLocation b);

struct HmmParams {
  double emissionSigma = 5.0;
  double transitionBeta = 2.0;
  double candidateRadius = 30.0;
  std::size_t candidatesPerSample = 8;

  void validate() const;
};

/// Gaussian log-density of the perpendicular GPS distance.
double emission_log_prob(double distance, double sigma);
/// Exponential penalty on the mismatch between network and straight-line distance.
double transition_log_prob(double routeDistance, double straightDistance, double beta);

struct MatchedSample {
  double t = 0.0;
  int edge = 0;
  double offset = 0.0;
  Vec2 position;
};

struct MatchedPath {
  std::vector<MatchedSample> samples;
  double totalLogProb = 0.0;
};

/// HMM map matching solved by Viterbi. Consecutive states must lie on the
/// same or adjacent edges. Among equally likely paths the lexicographically
/// smallest edge-id sequence wins.
MatchedPath viterbi_match(const RoadNetwork& net, const GpsTrace& trace, const HmmParams& params);

/// Per-sample candidate lists exactly as the matcher sees them (edge-id order).
std::vector<std::vector<Candidate>> matcher_candidates(const RoadNetwork& net, const GpsTrace& trace,
                                                       const HmmParams& params);

/// True when the two edges are equal or share an endpoint.
bool edges_adjacent(const RoadNetwork& net, int a, int b);

}  // namespace drivelab
