#include <pybind11/eigen.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>

#include "drivelab/drivemodel.hpp"
#include "drivelab/evalsuite.hpp"
#include "drivelab/mapmatch.hpp"
#include "drivelab/pidbaseline.hpp"
#include "drivelab/pipeline.hpp"
#include "drivelab/roadworld.hpp"
#include "drivelab/serialization.hpp"

namespace py = pybind11;
using namespace drivelab;

namespace {

Trajectory make_trajectory(std::vector<double> s, std::vector<double> v) { return {std::move(s), std::move(v)}; }

py::dict report_dict(const MetricsReport& r) {
  py::dict d;
  d["rows"] = r.rows;
  d["A_s"] = r.accuracy.steering;
  d["A_v"] = r.accuracy.speed;
  d["C_lat"] = r.comfort.lateral;
  d["C_lon"] = r.comfort.longitudinal;
  d["H"] = r.humanLikeness;
  const char* names[3] = {"A", "B", "C"};
  py::dict scenarios;
  for (int i = 0; i < 3; ++i) {
    py::dict s;
    s["rows"] = r.scenarios[i].rows;
    s["A_s"] = r.scenarios[i].accuracy.steering;
    s["A_v"] = r.scenarios[i].accuracy.speed;
    s["H"] = r.scenarios[i].humanLikeness;
    scenarios[names[i]] = s;
  }
  d["scenarios"] = scenarios;
  return d;
}

}  // namespace

PYBIND11_MODULE(_drivelab, m) {
  m.doc() = "Synthetic driving-model laboratory";

  py::register_exception<ConfigError>(m, "ConfigError", PyExc_ValueError);
  py::register_exception<StageError>(m, "StageError", PyExc_RuntimeError);
  py::register_exception<WorldError>(m, "WorldError", PyExc_RuntimeError);
  py::register_exception<MatchError>(m, "MatchError", PyExc_RuntimeError);
  py::register_exception<TrainError>(m, "TrainError", PyExc_RuntimeError);
  py::register_exception<PidError>(m, "PidError", PyExc_ValueError);
  py::register_exception<EvalError>(m, "EvalError", PyExc_ValueError);

  py::class_<RunConfig>(m, "RunConfig")
      .def(py::init<>())
      .def_readwrite("seed", &RunConfig::seed)
      .def_readwrite("intersections", &RunConfig::intersections)
      .def_readwrite("urban_fraction", &RunConfig::urbanFraction)
      .def_readwrite("routes", &RunConfig::routes)
      .def_readwrite("legs_per_route", &RunConfig::legsPerRoute)
      .def_readwrite("gps_sigma", &RunConfig::gpsSigma)
      .def_readwrite("test_fraction", &RunConfig::testFraction)
      .def_readwrite("lambda_", &RunConfig::lambda)
      .def_readwrite("zeta1", &RunConfig::zeta1)
      .def_readwrite("zeta2", &RunConfig::zeta2)
      .def_readwrite("batch", &RunConfig::batch)
      .def_readwrite("epochs", &RunConfig::epochs)
      .def_readwrite("lr", &RunConfig::lr)
      .def_readwrite("use_map", &RunConfig::useMap)
      .def_readwrite("clusters", &RunConfig::clusters)
      .def_readwrite("out_dir", &RunConfig::outDir)
      .def("validate", &RunConfig::validate)
      .def("set", &set_config_field, py::arg("field"), py::arg("value"))
      .def("to_json", &config_to_json)
      .def("hash", &config_hash)
      .def_static("from_json", &config_from_json);

  py::class_<RoadNetwork>(m, "RoadNetwork")
      .def_property_readonly("num_nodes", [](const RoadNetwork& n) { return n.nodes().size(); })
      .def_property_readonly("num_edges", [](const RoadNetwork& n) { return n.edges().size(); })
      .def("intersections", &RoadNetwork::intersections)
      .def("check_invariants", &RoadNetwork::check_invariants)
      .def("to_json", &network_to_json)
      .def_static("from_json", &network_from_json);
  m.def("generate_network", py::overload_cast<std::uint64_t, int, double>(&generate_network), py::arg("seed"),
        py::arg("intersections"), py::arg("urban_fraction"));

  py::class_<Route>(m, "Route")
      .def_property_readonly("num_legs", [](const Route& r) { return r.legs.size(); })
      .def("to_json", &route_to_json);
  m.def("random_route", &random_route, py::arg("network"), py::arg("seed"), py::arg("legs"));

  py::class_<DriveLog>(m, "DriveLog")
      .def_readonly("rate", &DriveLog::rate)
      .def_property_readonly("t", [](const DriveLog& l) {
        std::vector<double> o;
        for (const auto& s : l.samples) o.push_back(s.t);
        return o;
      })
      .def_property_readonly("steering", [](const DriveLog& l) {
        std::vector<double> o;
        for (const auto& s : l.samples) o.push_back(s.steering);
        return o;
      })
      .def_property_readonly("speed", [](const DriveLog& l) {
        std::vector<double> o;
        for (const auto& s : l.samples) o.push_back(s.speed);
        return o;
      })
      .def("__len__", [](const DriveLog& l) { return l.samples.size(); })
      .def("to_csv", [](const DriveLog& l) { return drive_log_to_csv(l); });
  m.def(
      "simulate_reference_driver",
      [](const RoadNetwork& net, const Route& route, double rate, std::uint64_t seed) {
        return simulate_reference_driver(net, route, rate, seed);
      },
      py::arg("network"), py::arg("route"), py::arg("rate") = 10.0, py::arg("seed") = 1);

  py::class_<GpsTrace>(m, "GpsTrace").def("__len__", [](const GpsTrace& g) { return g.samples.size(); });
  m.def("corrupt_gps", &corrupt_gps, py::arg("log"), py::arg("sigma"), py::arg("seed"));

  py::class_<HmmParams>(m, "HmmParams")
      .def(py::init<>())
      .def_readwrite("emission_sigma", &HmmParams::emissionSigma)
      .def_readwrite("transition_beta", &HmmParams::transitionBeta)
      .def_readwrite("candidate_radius", &HmmParams::candidateRadius)
      .def_readwrite("candidates_per_sample", &HmmParams::candidatesPerSample);
  py::class_<MatchedPath>(m, "MatchedPath")
      .def_readonly("total_log_prob", &MatchedPath::totalLogProb)
      .def_property_readonly("edges", [](const MatchedPath& p) {
        std::vector<int> o;
        for (const auto& s : p.samples) o.push_back(s.edge);
        return o;
      })
      .def_property_readonly("offsets", [](const MatchedPath& p) {
        std::vector<double> o;
        for (const auto& s : p.samples) o.push_back(s.offset);
        return o;
      });
  m.def("viterbi_match", &viterbi_match, py::arg("network"), py::arg("trace"), py::arg("params") = HmmParams{});

  m.def("loss_accuracy", [](std::vector<double> ps, std::vector<double> pv, std::vector<double> ts,
                            std::vector<double> tv, double lambda) {
    return loss_accuracy(make_trajectory(ps, pv), make_trajectory(ts, tv), lambda);
  }, py::arg("pred_s"), py::arg("pred_v"), py::arg("true_s"), py::arg("true_v"), py::arg("lambda_") = 1.0);
  m.def("loss_comfort", [](std::vector<double> s, std::vector<double> v, double rate, double lambda) {
    return loss_comfort(make_trajectory(s, v), rate, lambda);
  }, py::arg("s"), py::arg("v"), py::arg("rate") = 10.0, py::arg("lambda_") = 1.0);

  m.def("accuracy_metrics", [](std::vector<double> ps, std::vector<double> pv, std::vector<double> ts,
                               std::vector<double> tv) {
    AccuracyMetrics a = accuracy_metrics(make_trajectory(ps, pv), make_trajectory(ts, tv));
    return py::make_tuple(a.steering, a.speed);
  }, py::arg("pred_s"), py::arg("pred_v"), py::arg("true_s"), py::arg("true_v"));
  m.def("comfort_metrics", [](std::vector<double> s, std::vector<double> v, double rate) {
    ComfortMetrics c = comfort_metrics(make_trajectory(s, v), rate);
    return py::make_tuple(c.lateral, c.longitudinal);
  }, py::arg("s"), py::arg("v"), py::arg("rate") = 10.0);

  m.def("pid_filter", [](const std::vector<double>& r, double kp, double ki, double kd, double rate, double lo,
                         double hi) { return pid_filter(r, {kp, ki, kd}, rate, lo, hi); },
        py::arg("setpoint"), py::arg("kp"), py::arg("ki"), py::arg("kd"), py::arg("rate") = 10.0,
        py::arg("lo") = -kMaxSteeringDeg, py::arg("hi") = kMaxSteeringDeg);
  m.def("pid_tune", [](const std::string& predCsv, const std::string& truthCsv, double clat, double clon,
                       double rate) {
    TuneResult r = grid_tune(sequences_from_csv(predCsv), sequences_from_csv(truthCsv), {clat, clon}, PidGrid{},
                             rate);
    return tune_result_to_text(r);
  }, py::arg("pred_csv"), py::arg("truth_csv"), py::arg("target_clat"), py::arg("target_clon"),
        py::arg("rate") = 10.0);

  py::class_<Dataset>(m, "Dataset")
      .def_property_readonly("num_train_rows", [](const Dataset& d) { return d.trainRows.size(); })
      .def_property_readonly("num_test_rows", [](const Dataset& d) { return d.testRows.size(); })
      .def_property_readonly("train_routes", [](const Dataset& d) { return d.split.train; })
      .def_property_readonly("test_routes", [](const Dataset& d) { return d.split.test; })
      .def_property_readonly("test_targets", [](const Dataset& d) {
        Matrix t(2, static_cast<Eigen::Index>(d.testRows.size()));
        for (std::size_t i = 0; i < d.testRows.size(); ++i) {
          t(0, static_cast<Eigen::Index>(i)) = d.testRows[i].targetS[0];
          t(1, static_cast<Eigen::Index>(i)) = d.testRows[i].targetV[0];
        }
        return t;
      });
  m.def("build_dataset", &build_dataset, py::arg("config"));

  py::class_<TrainedModel>(m, "TrainedModel")
      .def_property_readonly("uses_map", [](const TrainedModel& t) { return t.generator.uses_map(); })
      .def_property_readonly("log", [](const TrainedModel& t) {
        std::vector<std::tuple<int, double, double, double, double>> o;
        for (const auto& r : t.log) {
          o.emplace_back(r.batch, r.lossAccuracy, r.lossComfort, r.lossHuman, r.discriminatorAccuracy);
        }
        return o;
      })
      .def("checkpoint", [](TrainedModel& t) { return checkpoint_to_text(t.generator, t.discriminator); })
      .def_static("from_checkpoint", &checkpoint_from_text);
  m.def("train", [](const Dataset& d, const RunConfig& cfg) { return train(d.trainRows, train_config(cfg)); },
        py::arg("dataset"), py::arg("config"));
  m.def("predict_test", [](const TrainedModel& t, const Dataset& d) { return predict_rows(t.generator, d.testRows); },
        py::arg("model"), py::arg("dataset"));
  m.def("evaluate", [](const TrainedModel& t, const Dataset& d, const RunConfig& cfg) {
    ClusterModel clusters = reference_clusters(d.trainRows, cfg);
    return report_dict(evaluate_model(t.generator, d.testRows, clusters, cfg).report);
  }, py::arg("model"), py::arg("dataset"), py::arg("config"));
  m.def("run_pipeline", [](const RunConfig& cfg) { return run_pipeline(cfg).reportText; }, py::arg("config"));
  m.def("ablate", [](const Dataset& d, const RunConfig& cfg, const std::string& variants) {
    return ablation_to_csv(ablate(d, cfg, parse_variants(variants)));
  }, py::arg("dataset"), py::arg("config"), py::arg("variants"));
  m.def("fnv1a_hex", &fnv1a_hex);
}
