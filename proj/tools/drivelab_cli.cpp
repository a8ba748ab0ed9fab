#include <filesystem>
#include <iostream>
#include <map>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "drivelab/mapfeatures.hpp"
#include "drivelab/pipeline.hpp"

namespace {

using namespace drivelab;

// --config plus one flag per config field, resolved after parsing.
class ConfigOptions {
 public:
  ConfigOptions(CLI::App* app, const std::map<std::string, std::string>& aliases = {}) {
    app->add_option("--config", path_, "JSON config file");
    for (const auto& name : config_fields()) {
      auto& slot = values_[name];
      opts_.push_back({name, app->add_option("--" + name, slot, "override config field " + name)});
    }
    for (const auto& [flag, field] : aliases) {
      auto& slot = values_["alias:" + flag];
      opts_.push_back({field, app->add_option("--" + flag, slot, "alias of --" + field)});
      aliasSlots_[opts_.back().second] = "alias:" + flag;
    }
  }

  RunConfig resolve() const {
    RunConfig cfg;
    if (!path_.empty()) cfg = config_from_json(read_input("config", path_));
    for (const auto& [field, opt] : opts_) {
      if (opt->count() == 0) continue;
      auto alias = aliasSlots_.find(opt);
      const std::string& key = alias == aliasSlots_.end() ? field : alias->second;
      set_config_field(cfg, field, values_.at(key));
    }
    cfg.validate();
    return cfg;
  }

  static std::string read_input(const std::string& field, const std::string& path) {
    if (path.empty()) throw ConfigError(field + ": no path given");
    if (!std::filesystem::is_regular_file(path)) throw ConfigError(field + ": cannot read '" + path + "'");
    return read_file(path);
  }

 private:
  std::string path_;
  std::map<std::string, std::string> values_;
  std::vector<std::pair<std::string, CLI::Option*>> opts_;
  std::map<const CLI::Option*, std::string> aliasSlots_;
};

std::string input(const std::string& field, const std::string& path) {
  return ConfigOptions::read_input(field, path);
}

void emit(const std::string& path, const std::string& text) {
  if (path.empty() || path == "-") {
    std::cout << text;
  } else {
    write_file(path, text);
  }
}

RoadNetwork load_world(const std::string& path, const RunConfig& cfg) {
  std::string text = input("world", path);
  check_artifact(read_header(text), cfg, Stage::World, "world '" + path + "'");
  return network_from_json(text);
}

void write_report(const std::string& dir, const RunConfig& cfg, const Evaluation& e,
                  const std::vector<FeatureRow>& rows) {
  Metadata rm = artifact_meta(cfg, Stage::Report);
  write_file(dir + "/metrics.txt", prepend_meta(rm, report_to_text(e.report)));
  write_file(dir + "/diagnosis.csv", prepend_meta(rm, diagnosis_to_csv(e.report.diagnosis)));
  write_file(dir + "/diagnosis_steering.svg", diagnosis_to_svg(e.report.diagnosis.steering));
  write_file(dir + "/diagnosis_speed.svg", diagnosis_to_svg(e.report.diagnosis.speed));
  write_file(dir + "/predictions.csv", predictions_to_csv(e.predictions, rows, rm));
  write_file(dir + "/truths.csv", truths_to_csv(rows, artifact_meta(cfg, Stage::Data)));
}

struct LoadedModel {
  TrainedModel model;
  std::vector<FeatureRow> rows;
  ClusterModel clusters;
};

LoadedModel load_for_eval(const std::string& modelPath, const std::string& dataPath, const std::string& refPath,
                          const RunConfig& cfg) {
  std::string ckpt = input("model", modelPath);
  check_artifact(read_header(ckpt), cfg, Stage::Model, "model '" + modelPath + "'");
  std::string data = input("data", dataPath);
  check_artifact(read_header(data), cfg, Stage::Data, "data '" + dataPath + "'");
  LoadedModel m{checkpoint_from_text(ckpt), feature_rows_from_csv(data), {}};
  if (m.model.generator.uses_map() != cfg.useMap) throw ConfigError("use_map: does not match the checkpoint");
  std::vector<FeatureRow> reference = m.rows;
  if (!refPath.empty()) {
    std::string ref = input("reference", refPath);
    check_artifact(read_header(ref), cfg, Stage::Data, "reference '" + refPath + "'");
    reference = feature_rows_from_csv(ref);
  }
  m.clusters = reference_clusters(reference, cfg);
  return m;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"drivelab: synthetic driving-model laboratory"};
  app.require_subcommand(1);

  auto* genWorld = app.add_subcommand("gen-world", "generate a road network");
  ConfigOptions genWorldCfg(genWorld, {{"urban", "urban_fraction"}});
  std::string worldOut = "world.json";
  genWorld->add_option("--out", worldOut, "output JSON path, - for stdout");

  auto* genData = app.add_subcommand("gen-data", "drive routes and record logs and GPS traces");
  ConfigOptions genDataCfg(genData, {{"sigma", "gps_sigma"}});
  std::string dataWorld, dataOut = "data";
  genData->add_option("--world", dataWorld, "world JSON")->required();
  genData->add_option("--out", dataOut, "output directory");

  auto* match = app.add_subcommand("match", "map-match a GPS trace");
  ConfigOptions matchCfg(match, {{"sigma", "gps_sigma"}});
  std::string matchWorld, matchTrace, matchOut;
  match->add_option("--world", matchWorld, "world JSON")->required();
  match->add_option("--trace", matchTrace, "GPS trace CSV")->required();
  match->add_option("--out", matchOut, "matched path CSV, stdout when omitted");

  auto* features = app.add_subcommand("features", "build feature rows for one route");
  ConfigOptions featuresCfg(features);
  std::string featWorld, featRoute, featLog, featMatched, featOut;
  int featSequence = 0;
  features->add_option("--world", featWorld, "world JSON")->required();
  features->add_option("--route", featRoute, "route JSON")->required();
  features->add_option("--log", featLog, "drive log CSV")->required();
  features->add_option("--matched", featMatched, "matched path CSV; the log's true offsets are used when omitted");
  features->add_option("--sequence", featSequence, "sequence id written to the rows");
  features->add_option("--out", featOut, "feature CSV, stdout when omitted");

  auto* trainCmd = app.add_subcommand("train", "train a driving model");
  ConfigOptions trainCfg(trainCmd);
  std::string trainData, trainOut = "model";
  trainCmd->add_option("--data", trainData, "training feature CSV")->required();
  trainCmd->add_option("--out", trainOut, "output directory");

  auto* evalCmd = app.add_subcommand("eval", "evaluate a model on feature rows");
  ConfigOptions evalCfg(evalCmd);
  std::string evalModel, evalData, evalRef, evalReport = "report";
  evalCmd->add_option("--model", evalModel, "checkpoint")->required();
  evalCmd->add_option("--data", evalData, "test feature CSV")->required();
  evalCmd->add_option("--reference", evalRef, "feature CSV whose human windows define the clusters");
  evalCmd->add_option("--report", evalReport, "report directory");

  auto* diagnose = app.add_subcommand("diagnose", "per-attribute error diagnosis");
  ConfigOptions diagnoseCfg(diagnose);
  std::string diagModel, diagData, diagOut;
  diagnose->add_option("--model", diagModel, "checkpoint")->required();
  diagnose->add_option("--data", diagData, "feature CSV")->required();
  diagnose->add_option("--out", diagOut, "directory for CSV and SVG charts");

  auto* pidTune = app.add_subcommand("pid-tune", "tune PID smoothing to target comfort");
  ConfigOptions pidCfg(pidTune);
  std::string pidPred, pidTruth, pidOut;
  double targetLat = 0.0, targetLon = 0.0;
  pidTune->add_option("--pred-csv", pidPred, "prediction CSV")->required();
  pidTune->add_option("--truth-csv", pidTruth, "ground-truth CSV")->required();
  pidTune->add_option("--target-clat", targetLat, "target lateral comfort")->required();
  pidTune->add_option("--target-clon", targetLon, "target longitudinal comfort")->required();
  pidTune->add_option("--out", pidOut, "result file, stdout when omitted");

  auto* pipeline = app.add_subcommand("pipeline", "run every stage end to end");
  ConfigOptions pipelineCfg(pipeline);

  auto* ablateCmd = app.add_subcommand("ablate", "train and compare module variants");
  ConfigOptions ablateCfg(ablateCmd);
  std::string variants = "none,map,map+comfort,map+comfort+adversarial", ablateOut;
  ablateCmd->add_option("--variants", variants, "comma-separated variants such as none,map+comfort");
  ablateCmd->add_option("--out", ablateOut, "comparison CSV, <out_dir>/ablation.csv when omitted");

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return 2;
  }

  try {
    if (*genWorld) {
      RunConfig cfg = genWorldCfg.resolve();
      RoadNetwork net = build_world(cfg);
      emit(worldOut, json_with_meta(network_to_json(net), artifact_meta(cfg, Stage::World)));
    } else if (*genData) {
      RunConfig cfg = genDataCfg.resolve();
      RoadNetwork net = load_world(dataWorld, cfg);
      std::vector<RouteData> routes = build_routes(net, cfg);
      Metadata dm = artifact_meta(cfg, Stage::Data);
      for (std::size_t i = 0; i < routes.size(); ++i) {
        int n = static_cast<int>(i);
        write_file(numbered_path(dataOut, "route", n, ".json"), json_with_meta(route_to_json(routes[i].route), dm));
        write_file(numbered_path(dataOut, "log", n, ".csv"), drive_log_to_csv(routes[i].log, dm));
        write_file(numbered_path(dataOut, "gps", n, ".csv"), gps_trace_to_csv(routes[i].gps, dm));
      }
      std::cout << "wrote " << routes.size() << " routes to " << dataOut << "\n";
    } else if (*match) {
      RunConfig cfg = matchCfg.resolve();
      RoadNetwork net = load_world(matchWorld, cfg);
      std::string text = input("trace", matchTrace);
      check_artifact(read_header(text), cfg, Stage::Data, "trace '" + matchTrace + "'");
      MatchedPath path = viterbi_match(net, gps_trace_from_csv(text), hmm_params(cfg));
      emit(matchOut, matched_path_to_csv(path, artifact_meta(cfg, Stage::Data)));
    } else if (*features) {
      RunConfig cfg = featuresCfg.resolve();
      RouteData d;
      RoadNetwork net = load_world(featWorld, cfg);
      std::string routeText = input("route", featRoute);
      check_artifact(read_header(routeText), cfg, Stage::Data, "route '" + featRoute + "'");
      d.route = route_from_json(routeText);
      std::string logText = input("log", featLog);
      check_artifact(read_header(logText), cfg, Stage::Data, "log '" + featLog + "'");
      d.log = drive_log_from_csv(logText);
      std::vector<FeatureRow> rows;
      if (!featMatched.empty()) {
        std::string matchedText = input("matched", featMatched);
        check_artifact(read_header(matchedText), cfg, Stage::Data, "matched '" + featMatched + "'");
        d.matched = matched_path_from_csv(matchedText);
        rows = route_features(net, d, featSequence);
      } else {
        RouteGeometry geo(net, d.route);
        std::vector<MapFeatureFrame> frames;
        for (const auto& s : d.log.samples) frames.push_back(extract_frame(geo, s.routeOffset));
        rows = build_rows(featSequence, frames, d.log);
      }
      emit(featOut, feature_rows_to_csv(rows, artifact_meta(cfg, Stage::Data)));
    } else if (*trainCmd) {
      RunConfig cfg = trainCfg.resolve();
      std::string text = input("data", trainData);
      check_artifact(read_header(text), cfg, Stage::Data, "data '" + trainData + "'");
      TrainedModel m = train(feature_rows_from_csv(text), train_config(cfg));
      Metadata mm = artifact_meta(cfg, Stage::Model);
      write_file(trainOut + "/model.ckpt", prepend_meta(mm, checkpoint_to_text(m.generator, m.discriminator)));
      write_file(trainOut + "/train_log.csv", train_log_to_csv(m.log, mm));
      std::cout << "trained " << m.log.size() << " batches, checkpoint in " << trainOut << "\n";
    } else if (*evalCmd) {
      RunConfig cfg = evalCfg.resolve();
      LoadedModel m = load_for_eval(evalModel, evalData, evalRef, cfg);
      Evaluation e = evaluate_model(m.model.generator, m.rows, m.clusters, cfg);
      write_report(evalReport, cfg, e, m.rows);
      std::cout << report_to_text(e.report);
    } else if (*diagnose) {
      RunConfig cfg = diagnoseCfg.resolve();
      LoadedModel m = load_for_eval(diagModel, diagData, "", cfg);
      Evaluation e = evaluate_model(m.model.generator, m.rows, m.clusters, cfg);
      std::string csv = diagnosis_to_csv(e.report.diagnosis);
      if (!diagOut.empty()) {
        Metadata rm = artifact_meta(cfg, Stage::Report);
        write_file(diagOut + "/diagnosis.csv", prepend_meta(rm, csv));
        write_file(diagOut + "/diagnosis_steering.svg", diagnosis_to_svg(e.report.diagnosis.steering));
        write_file(diagOut + "/diagnosis_speed.svg", diagnosis_to_svg(e.report.diagnosis.speed));
      }
      std::cout << csv;
    } else if (*pidTune) {
      RunConfig cfg = pidCfg.resolve();
      std::vector<Trajectory> preds = sequences_from_csv(input("pred-csv", pidPred));
      std::vector<Trajectory> truths = sequences_from_csv(input("truth-csv", pidTruth));
      if (!(targetLat > 0.0)) throw ConfigError("target-clat: must be positive");
      if (!(targetLon > 0.0)) throw ConfigError("target-clon: must be positive");
      TuneResult r = grid_tune(preds, truths, {targetLat, targetLon}, PidGrid{}, cfg.rate);
      emit(pidOut, tune_result_to_text(r));
    } else if (*pipeline) {
      RunConfig cfg = pipelineCfg.resolve();
      PipelineResult r = run_pipeline(cfg);
      std::cout << r.reportText;
    } else if (*ablateCmd) {
      RunConfig cfg = ablateCfg.resolve();
      std::vector<Variant> vs = parse_variants(variants);
      Dataset d = build_dataset(cfg);
      std::string csv = ablation_to_csv(ablate(d, cfg, vs), artifact_meta(cfg, Stage::Data));
      write_file(ablateOut.empty() ? cfg.outDir + "/ablation.csv" : ablateOut, csv);
      std::cout << csv;
    }
  } catch (const ConfigError& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return 2;
  } catch (const StageError& e) {
    std::cerr << "stage " << e.what() << "\n";
    return 1;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 0;
}
