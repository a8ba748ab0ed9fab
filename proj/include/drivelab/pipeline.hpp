#pragma once

#include <cstdint>
#include <stdexcept>
#include <string>
#include <vector>

#include "drivelab/drivemodel.hpp"
#include "drivelab/evalsuite.hpp"
#include "drivelab/mapmatch.hpp"
#include "drivelab/pidbaseline.hpp"
#include "drivelab/roadworld.hpp"
#include "drivelab/serialization.hpp"

namespace drivelab {

/// Invalid or incomplete configuration; maps to exit code 2.
class ConfigError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Failure inside a pipeline stage; maps to exit code 1.
class StageError : public std::runtime_error {
 public:
  StageError(std::string stage, const std::string& cause)
      : std::runtime_error(stage + ": " + cause), stage_(std::move(stage)) {}
  const std::string& stage() const { return stage_; }

 private:
  std::string stage_;
};

struct RunConfig {
  std::uint64_t seed = 1;
  // world
  int intersections = 12;
  double urbanFraction = 0.5;
  // data
  int routes = 20;
  int legsPerRoute = 6;
  double gpsSigma = 5.0;
  double hmmBeta = 2.0;
  double hmmRadius = 30.0;
  int hmmCandidates = 8;
  double testFraction = 0.2;
  // model
  int driveletLength = kDriveletLength;  // O
  int egoFrames = kEgoFrames;            // k
  double lambda = 1.0;
  double zeta1 = 0.1;
  double zeta2 = 1.0;
  int batch = 16;
  int epochs = 1;
  double lr = 1e-4;
  double rate = 10.0;  // f
  bool useMap = true;
  // evaluation
  int clusters = kClusters;
  // artifacts
  std::string outDir = "run";

  /// Throws ConfigError naming the first invalid field.
  void validate() const;
};

/// Names of every config field, as used in JSON and on the command line.
const std::vector<std::string>& config_fields();

RunConfig config_from_json(const std::string& text);
/// Canonical JSON with every field in a fixed order.
std::string config_to_json(const RunConfig& cfg);
/// Sets one field from its textual value; throws ConfigError for unknown fields or bad values.
void set_config_field(RunConfig& cfg, const std::string& field, const std::string& value);

/// 64-bit FNV-1a of the given text as 16 hex digits.
std::string fnv1a_hex(const std::string& text);
std::string config_hash(const RunConfig& cfg);

/// Artifact families; each hash covers exactly the fields that determine the artifact.
enum class Stage { World, Data, Model, Report };
std::string stage_hash(const RunConfig& cfg, Stage stage);

struct StageSeeds {
  std::uint64_t world, routes, driver, gps, split, train, clusters;
};
StageSeeds stage_seeds(std::uint64_t master);

HmmParams hmm_params(const RunConfig& cfg);
TrainConfig train_config(const RunConfig& cfg);

struct RouteData {
  Route route;
  DriveLog log;
  GpsTrace gps;
  MatchedPath matched;
};

RoadNetwork build_world(const RunConfig& cfg);
/// Routes, drives and GPS traces; matching is a separate stage.
std::vector<RouteData> build_routes(const RoadNetwork& net, const RunConfig& cfg);
/// Features of one route from its matched path.
std::vector<FeatureRow> route_features(const RoadNetwork& net, const RouteData& data, int sequence);

struct Split {
  std::vector<int> train;
  std::vector<int> test;
};
/// Route-level split; both sides sorted.
Split split_routes(int count, const RunConfig& cfg);

struct Dataset {
  RoadNetwork net;
  std::vector<RouteData> routes;
  Split split;
  std::vector<FeatureRow> trainRows;
  std::vector<FeatureRow> testRows;
};

/// World, drives, matching, features and split, in memory.
Dataset build_dataset(const RunConfig& cfg);

ClusterModel reference_clusters(const std::vector<FeatureRow>& trainRows, const RunConfig& cfg);

struct Evaluation {
  Matrix predictions;
  MetricsReport report;
};

Evaluation evaluate_model(const Generator& g, const std::vector<FeatureRow>& rows, const ClusterModel& clusters,
                          const RunConfig& cfg);

std::string train_log_to_csv(const std::vector<TrainLogRow>& log, const Metadata& meta = {});

/// Header lines carried by every artifact of a stage.
Metadata artifact_meta(const RunConfig& cfg, Stage stage);
/// Throws ConfigError when an input artifact was produced under a different configuration.
void check_artifact(const Metadata& meta, const RunConfig& cfg, Stage stage, const std::string& what);
/// Reads the `# key=value` header lines of any artifact.
Metadata read_header(const std::string& text);
/// Prepends `# key=value` header lines.
std::string prepend_meta(const Metadata& meta, const std::string& body);
/// Adds the metadata as top-level string members of a JSON document.
std::string json_with_meta(const std::string& text, const Metadata& meta);
/// `dir/stem_NNN.ext`
std::string numbered_path(const std::string& dir, const std::string& stem, int i, const std::string& ext);

/// Prediction or ground-truth CSV (sequence, index, s, v) split into consecutive sequences.
std::vector<Trajectory> sequences_from_csv(const std::string& text);

struct PipelineResult {
  Dataset data;
  TrainedModel model;
  Evaluation evaluation;
  std::string reportText;
};

/// Every stage end to end, writing artifacts under cfg.outDir.
PipelineResult run_pipeline(const RunConfig& cfg);

struct Variant {
  std::string name;
  bool map = false;
  bool comfort = false;
  bool adversarial = false;
};

/// Parses "none", "map", "map+comfort+adversarial" and so on, comma separated.
std::vector<Variant> parse_variants(const std::string& spec);
RunConfig variant_config(const RunConfig& base, const Variant& v);

struct AblationRow {
  Variant variant;
  MetricsReport report;
};

/// Trains and evaluates each variant on the same data and split.
std::vector<AblationRow> ablate(const Dataset& data, const RunConfig& base, const std::vector<Variant>& variants);
std::string ablation_to_csv(const std::vector<AblationRow>& rows, const Metadata& meta = {});

}  // namespace drivelab
