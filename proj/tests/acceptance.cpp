// Acceptance suite: one PASS/FAIL line per criterion, exit status 1 if any fails.

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <functional>
#include <random>
#include <string>
#include <vector>

#include "drivelab/drivemodel.hpp"
#include "drivelab/evalsuite.hpp"
#include "drivelab/mapfeatures.hpp"
#include "drivelab/mapmatch.hpp"
#include "drivelab/pidbaseline.hpp"
#include "drivelab/pipeline.hpp"
#include "drivelab/tensorcore.hpp"
#include "fixtures.hpp"
#include "oracles.hpp"

namespace {

using namespace drivelab;
using Clock = std::chrono::steady_clock;

// Tolerances and budgets.
constexpr double kGradTol = 1e-4;
constexpr double kGradStep = 1e-5;
constexpr int kGradSeeds = 10;
constexpr double kGradBudgetS = 60.0;
constexpr int kViterbiInstances = 100;
constexpr double kViterbiBudgetS = 30.0;
constexpr int kTrainSeeds = 5;
constexpr double kComfortReduction = 0.20;
constexpr double kAccuracyIncrease = 0.15;
constexpr double kComfortBudgetS = 30.0 * 60.0;
constexpr int kOracleDrivelets = 1000;
constexpr double kOracleTol = 1e-9;
constexpr double kPidComfortTol = 0.05;
constexpr double kPipelineBudgetS = 10.0 * 60.0;

int failures = 0;

void report(int id, const std::string& name, bool ok, const std::string& detail) {
  std::printf("%s criterion %d (%s): %s\n", ok ? "PASS" : "FAIL", id, name.c_str(), detail.c_str());
  std::fflush(stdout);
  if (!ok) ++failures;
}

double seconds_since(Clock::time_point t0) { return std::chrono::duration<double>(Clock::now() - t0).count(); }

std::string fmt(const char* f, double a) {
  char buf[128];
  std::snprintf(buf, sizeof buf, f, a);
  return buf;
}

Matrix random_matrix(int r, int c, std::mt19937_64& rng, double scale = 1.0) {
  std::normal_distribution<double> n(0.0, scale);
  Matrix m(r, c);
  for (int i = 0; i < r; ++i)
    for (int j = 0; j < c; ++j) m(i, j) = n(rng);
  return m;
}

double weighted_sum(const Matrix& y, const Matrix& w) { return y.cwiseProduct(w).sum(); }

// ---------------------------------------------------------------------------
// 1. Gradient fidelity

void criterion_gradients() {
  auto t0 = Clock::now();
  double worstLayer = 0.0, worstComposite = 0.0;
  std::string worstName;
  const auto rows = testing::truth_rows(5, 2, 3);
  const auto starts = drivelet_starts(rows);
  for (std::uint64_t seed = 0; seed < kGradSeeds; ++seed) {
    auto track = [&](const GradCheck& g, const std::string& what) {
      if (g.maxRelError > worstLayer) {
        worstLayer = g.maxRelError;
        worstName = what + " " + g.worstParam;
      }
    };
    for (Activation act : {Activation::Tanh, Activation::Relu, Activation::Sigmoid, Activation::Identity}) {
      std::mt19937_64 rng(seed);
      DenseStack net({DenseLayer("a", 5, 7, act, rng), DenseLayer("b", 7, 3, act, rng)});
      for (auto* p : net.params()) p->value = random_matrix(p->value.rows(), p->value.cols(), rng, 0.7);
      Matrix x = random_matrix(5, 4, rng), w = random_matrix(3, 4, rng);
      track(check_gradients(
                net.params(), [&] { return weighted_sum(net.forward(x), w); },
                [&] {
                  zero_grads(net.params());
                  DenseStack::Tape tape;
                  net.forward(x, &tape);
                  net.backward(tape, w);
                },
                kGradStep),
            "dense/" + to_string(act));
    }
    {
      std::mt19937_64 rng(100 + seed);
      GruEncoder g("gru", 8, kEncoderHidden, rng);
      std::vector<Matrix> seq;
      for (int t = 0; t < kHistorySamples; ++t) seq.push_back(random_matrix(8, 2, rng));
      Matrix w = random_matrix(kEncoderHidden, 2, rng);
      track(check_gradients(
                g.params(), [&] { return weighted_sum(g.forward(seq), w); },
                [&] {
                  zero_grads(g.params());
                  GruEncoder::Tape tape;
                  g.forward(seq, &tape);
                  g.backward(tape, w);
                },
                kGradStep),
            "gru");
    }
    {
      std::mt19937_64 rng(200 + seed);
      Discriminator d(rng);
      Matrix x = random_matrix(kDiscriminatorInput, 3, rng, 0.5), w = random_matrix(1, 3, rng);
      track(check_gradients(
                d.params(), [&] { return weighted_sum(d.forward(x), w); },
                [&] {
                  zero_grads(d.params());
                  Discriminator::Tape tape;
                  d.forward(x, &tape);
                  d.backward(tape, w);
                },
                kGradStep),
            "discriminator");
    }
    for (bool useMap : {true, false}) {
      std::mt19937_64 rng(300 + seed);
      Generator g(useMap, rng);
      Discriminator d(rng);
      std::vector<std::size_t> picked = {starts[seed * 7], starts[seed * 7 + 40], starts[seed * 7 + 90]};
      LossWeights w{1.0, 0.1, 1.0, 10.0};
      ParamRefs p = g.params();
      GradCheck c = check_gradients(
          p, [&] { return generator_loss(g, d, rows, picked, w, false).total; },
          [&] {
            zero_grads(p);
            generator_loss(g, d, rows, picked, w, true);
          },
          kGradStep);
      worstComposite = std::max(worstComposite, c.maxBlockRelError);
    }
  }
  double elapsed = seconds_since(t0);
  bool ok = worstLayer < kGradTol && worstComposite < kGradTol && elapsed < kGradBudgetS;
  report(1, "gradient fidelity", ok,
         "worst layer rel err " + fmt("%.2e", worstLayer) + " (" + worstName + "), composite block rel err " +
             fmt("%.2e", worstComposite) + ", " + fmt("%.1f s", elapsed));
}

// ---------------------------------------------------------------------------
// 2. Viterbi optimality

void criterion_viterbi() {
  auto t0 = Clock::now();
  HmmParams hp;
  hp.candidateRadius = 60.0;
  hp.candidatesPerSample = 3;
  int agree = 0, solvable = 0;
  for (int i = 0; i < kViterbiInstances; ++i) {
    auto inst = oracle::random_small_instance(5000 + static_cast<std::uint64_t>(i));
    auto bf = oracle::brute_force_match(inst.net, inst.trace, hp);
    MatchedPath m;
    bool threw = false;
    try {
      m = viterbi_match(inst.net, inst.trace, hp);
    } catch (const MatchError&) {
      threw = true;
    }
    if (threw) {
      agree += bf.edges.empty() ? 1 : 0;
      continue;
    }
    ++solvable;
    bool same = bf.edges.size() == m.samples.size() && m.totalLogProb == bf.logProb;
    for (std::size_t k = 0; same && k < bf.edges.size(); ++k) {
      same = m.samples[k].edge == bf.edges[k] && m.samples[k].offset == bf.offsets[k];
    }
    agree += same ? 1 : 0;
  }
  double elapsed = seconds_since(t0);
  report(2, "viterbi optimality", agree == kViterbiInstances && elapsed < kViterbiBudgetS,
         std::to_string(agree) + "/" + std::to_string(kViterbiInstances) + " identical (" + std::to_string(solvable) +
             " solvable), " + fmt("%.1f s", elapsed));
}

// ---------------------------------------------------------------------------
// 3, 4, 5, 7. Training ablations on the reference pipeline

RunConfig reference_config() {
  RunConfig c;
  c.seed = 1;
  c.intersections = 12;
  c.urbanFraction = 0.5;
  c.routes = 20;
  c.legsPerRoute = 6;
  c.lr = 3e-3;
  c.epochs = 4;
  c.outDir = "unused";
  return c;
}

struct Arm {
  const char* name;
  bool map;
  double zeta1, zeta2;
};

struct Run {
  MetricsReport report;
  Matrix predictions;
  double seconds = 0.0;
};

Run train_and_evaluate(const Dataset& data, const ClusterModel& clusters, const RunConfig& base, const Arm& v,
                       int seed) {
  auto t0 = Clock::now();
  RunConfig c = base;
  c.useMap = v.map;
  c.zeta1 = v.zeta1;
  c.zeta2 = v.zeta2;
  TrainConfig tc = train_config(c);
  tc.seed = stage_seeds(static_cast<std::uint64_t>(seed)).train;
  TrainedModel m = train(data.trainRows, tc);
  Evaluation e = evaluate_model(m.generator, data.testRows, clusters, c);
  return {e.report, e.predictions, seconds_since(t0)};
}

double mean(const std::vector<double>& v) {
  double s = 0.0;
  for (double x : v) s += x;
  return s / static_cast<double>(v.size());
}

void criteria_training() {
  RunConfig cfg = reference_config();
  Dataset data = build_dataset(cfg);
  ClusterModel clusters = reference_clusters(data.trainRows, cfg);
  std::printf("reference pipeline: %zu train rows, %zu test rows, lr %g, %d epochs\n", data.trainRows.size(),
              data.testRows.size(), cfg.lr, cfg.epochs);

  const Arm egoOnly{"ego-only", false, 0.0, 0.0};
  const Arm mapOnly{"map", true, 0.0, 0.0};
  const Arm mapComfort{"map+comfort", true, 0.1, 0.0};
  const Arm full{"map+comfort+adversarial", true, 0.1, 1.0};

  std::vector<Run> ego, base, comfort, adv;
  double comfortSeconds = 0.0;
  for (int s = 1; s <= kTrainSeeds; ++s) {
    for (auto [v, out] : {std::pair{&egoOnly, &ego}, std::pair{&mapOnly, &base}, std::pair{&mapComfort, &comfort},
                          std::pair{&full, &adv}}) {
      out->push_back(train_and_evaluate(data, clusters, cfg, *v, s));
      const Run& r = out->back();
      if (v == &mapOnly || v == &mapComfort) comfortSeconds += r.seconds;
      std::printf("  seed %d %-24s A_s %.3f A_v %.3f C_lat %.2f C_lon %.2f H %.2f | C: A_s %.3f (%.1f s)\n", s,
                  v->name, r.report.accuracy.steering, r.report.accuracy.speed, r.report.comfort.lateral,
                  r.report.comfort.longitudinal, r.report.humanLikeness, r.report.scenarios[2].accuracy.steering,
                  r.seconds);
      std::fflush(stdout);
    }
  }
  auto avg = [](const std::vector<Run>& runs, const std::function<double(const MetricsReport&)>& f) {
    std::vector<double> v;
    for (const auto& r : runs) v.push_back(f(r.report));
    return mean(v);
  };
  auto As = [](const MetricsReport& r) { return r.accuracy.steering; };
  auto Clat = [](const MetricsReport& r) { return r.comfort.lateral; };
  auto Clon = [](const MetricsReport& r) { return r.comfort.longitudinal; };
  auto H = [](const MetricsReport& r) { return r.humanLikeness; };
  auto AsC = [](const MetricsReport& r) { return r.scenarios[2].accuracy.steering; };

  {
    double latRed = 1.0 - avg(comfort, Clat) / avg(base, Clat);
    double lonRed = 1.0 - avg(comfort, Clon) / avg(base, Clon);
    double asInc = avg(comfort, As) / avg(base, As) - 1.0;
    bool ok = latRed >= kComfortReduction && lonRed >= kComfortReduction && asInc <= kAccuracyIncrease &&
              comfortSeconds < kComfortBudgetS;
    report(3, "comfort ablation", ok,
           "C_lat -" + fmt("%.1f%%", 100 * latRed) + ", C_lon -" + fmt("%.1f%%", 100 * lonRed) + ", A_s " +
               fmt("%+.1f%%", 100 * asInc) + " (limit +15%), " + fmt("%.0f s", comfortSeconds));
  }
  {
    double h0 = avg(comfort, H), h1 = avg(adv, H);
    report(4, "adversarial ablation", h1 > h0, "mean H " + fmt("%.3f", h0) + " -> " + fmt("%.3f", h1));
  }
  {
    double e = avg(ego, AsC), m = avg(base, AsC);
    report(5, "map-feature ablation", m < e,
           "scenario C mean A_s ego-only " + fmt("%.3f", e) + " vs map " + fmt("%.3f", m));
  }
  {
    bool ok = true;
    std::string detail;
    for (int s = 0; s < kTrainSeeds; ++s) {
      std::vector<Trajectory> preds, truths;
      split_sequences(base[static_cast<std::size_t>(s)].predictions, data.testRows, preds, truths);
      const MetricsReport& learned = adv[static_cast<std::size_t>(s)].report;
      TuneResult t = grid_tune(preds, truths, learned.comfort, PidGrid{}, cfg.rate);
      double relLat = std::abs(t.comfort.lateral - learned.comfort.lateral) / learned.comfort.lateral;
      double relLon = std::abs(t.comfort.longitudinal - learned.comfort.longitudinal) / learned.comfort.longitudinal;
      bool seedOk = relLat <= kPidComfortTol && relLon <= kPidComfortTol &&
                    t.accuracy.steering >= learned.accuracy.steering;
      ok = ok && seedOk;
      detail += (s ? "; " : "") + std::string("seed ") + std::to_string(s + 1) + ": C dev " +
                fmt("%.1f%%", 100 * relLat) + "/" + fmt("%.1f%%", 100 * relLon) + ", A_s PID " +
                fmt("%.3f", t.accuracy.steering) + " vs learned " + fmt("%.3f", learned.accuracy.steering);
    }
    report(7, "PID methodology", ok, detail);
  }
}

// ---------------------------------------------------------------------------
// 6. Metric oracle equivalence

int oracle_assign(const ClusterModel& m, const ManeuverWindow& w) {
  int best = -1;
  double bestD = INFINITY;
  for (std::size_t c = 0; c < m.centroids.size(); ++c) {
    double d = 0.0;
    for (int i = 0; i < kManeuverSize; ++i) {
      double z = (w[i] - m.mean[i]) / m.scale[i];
      d += (z - m.centroids[c][i]) * (z - m.centroids[c][i]);
    }
    if (d < bestD) {
      bestD = d;
      best = static_cast<int>(c);
    }
  }
  return best;
}

void criterion_metric_oracles() {
  std::mt19937_64 rng(2024);
  std::normal_distribution<double> ns(0.0, 40.0), nv(50.0, 15.0), noise(0.0, 3.0);
  std::vector<Trajectory> preds, truths;
  Trajectory allP, allT;
  for (int i = 0; i < kOracleDrivelets; ++i) {
    Trajectory p, t;
    for (int o = 0; o < kDriveletLength; ++o) {
      t.s.push_back(ns(rng));
      t.v.push_back(std::max(0.0, nv(rng)));
      p.s.push_back(t.s.back() + noise(rng));
      p.v.push_back(std::max(0.0, t.v.back() + noise(rng)));
    }
    preds.push_back(p);
    truths.push_back(t);
    allP.s.insert(allP.s.end(), p.s.begin(), p.s.end());
    allP.v.insert(allP.v.end(), p.v.begin(), p.v.end());
    allT.s.insert(allT.s.end(), t.s.begin(), t.s.end());
    allT.v.insert(allT.v.end(), t.v.begin(), t.v.end());
  }

  double as = 0, av = 0;
  for (std::size_t i = 0; i < allP.s.size(); ++i) {
    as += std::abs(allP.s[i] - allT.s[i]);
    av += std::abs(allP.v[i] - allT.v[i]);
  }
  as /= static_cast<double>(allP.s.size());
  av /= static_cast<double>(allP.v.size());
  double clat = 0, clon = 0;
  int triples = 0;
  for (const auto& p : preds) {
    for (int o = 1; o + 1 < kDriveletLength; ++o) {
      clat += std::abs(p.s[o - 1] - 2 * p.s[o] + p.s[o + 1]) / (0.1 * 0.1);
      clon += std::abs(p.v[o - 1] - 2 * p.v[o] + p.v[o + 1]) / (0.1 * 0.1);
      ++triples;
    }
  }
  clat /= triples;
  clon /= triples;

  std::vector<ManeuverWindow> human, model;
  for (int i = 0; i < kOracleDrivelets; ++i) {
    ManeuverWindow h{}, m{};
    for (int o = 0; o < kDriveletLength; ++o) {
      h[o] = truths[i].s[o];
      h[o + kDriveletLength] = truths[i].v[o];
      m[o] = preds[i].s[o];
      m[o + kDriveletLength] = preds[i].v[o];
    }
    human.push_back(h);
    model.push_back(m);
  }
  ClusterModel cl = fit_clusters(human, kClusters, 99);
  int same = 0;
  for (int i = 0; i < kOracleDrivelets; ++i) same += oracle_assign(cl, human[i]) == oracle_assign(cl, model[i]);
  double h = 100.0 * same / kOracleDrivelets;

  AccuracyMetrics a = accuracy_metrics(allP, allT);
  ComfortMetrics c = comfort_metrics(preds, 10.0);
  double hl = human_likeness(cl, model, human);
  double worst = std::max({std::abs(a.steering - as), std::abs(a.speed - av), std::abs(c.lateral - clat),
                           std::abs(c.longitudinal - clon), std::abs(hl - h)});
  report(6, "metric oracle equivalence", worst <= kOracleTol,
         "max abs deviation " + fmt("%.2e", worst) + " over " + std::to_string(kOracleDrivelets) +
             " drivelets (H = " + fmt("%.2f", hl) + ")");
}

// ---------------------------------------------------------------------------
// 8. Structural constants

void criterion_constants() {
  std::vector<std::string> bad;
  auto expect = [&](bool ok, const std::string& what) {
    if (!ok) bad.push_back(what);
  };
  expect(kM14Size == 160, "m14 length");
  expect(kM56Size == 7, "m56 length");
  expect(kDriveletLength == 5, "O");
  expect(kEgoFrames == 3, "k");
  expect(kDiscriminatorInput == 10, "discriminator input");
  expect(kClusters == 75, "clusters");
  expect(kFeatureHorizonM == 250.0, "250 m cap");
  expect(kScenarioNearM == 40.0, "40 m");
  expect(kScenarioIntersectionM == 20.0, "20 m");
  expect(kSteeringErrorDeg == 10.0, "10 deg");
  expect(kSpeedErrorKmh == 5.0, "5 km/h");

  auto rows = testing::truth_rows(3, 1, 3);
  expect(!rows.empty() && rows[0].window.m14.size() == 160, "runtime m14 length");
  expect(!rows.empty() && rows[0].window.m56.size() == 7, "runtime m56 length");
  expect(inverse_distance_feature(250.5) == 0.0, "runtime 250 m cap");
  RunConfig def;
  def.validate();
  expect(def.driveletLength == 5 && def.egoFrames == 3 && def.clusters == 75, "config defaults");
  std::mt19937_64 rng(1);
  Discriminator d(rng);
  expect(d.forward(Matrix::Zero(10, 1)).rows() == 1, "discriminator accepts 10 inputs");
  std::vector<ManeuverWindow> w;
  std::normal_distribution<double> n(0.0, 1.0);
  for (int i = 0; i < 300; ++i) {
    ManeuverWindow x{};
    for (auto& v : x) v = n(rng);
    w.push_back(x);
  }
  expect(fit_clusters(w, kClusters, 1).centroids.size() == 75, "fitted cluster count");
  std::string detail = bad.empty() ? "all constants hold" : "violated:";
  for (const auto& b : bad) detail += " " + b;
  report(8, "structural constants", bad.empty(), detail);
}

// ---------------------------------------------------------------------------
// 9. Determinism of the full pipeline

void criterion_determinism() {
  RunConfig c;
  auto tmp = std::filesystem::temp_directory_path();
  c.outDir = (tmp / "drivelab_acceptance_a").string();
  std::filesystem::remove_all(c.outDir);
  auto t0 = Clock::now();
  run_pipeline(c);
  double elapsed = seconds_since(t0);
  RunConfig c2 = c;
  c2.outDir = (tmp / "drivelab_acceptance_b").string();
  std::filesystem::remove_all(c2.outDir);
  run_pipeline(c2);
  bool same = true;
  for (const char* f : {"report/metrics.txt", "report/diagnosis.csv", "report/predictions.csv"}) {
    same = same && read_file(c.outDir + "/" + f) == read_file(c2.outDir + "/" + f);
  }
  std::filesystem::remove_all(c.outDir);
  std::filesystem::remove_all(c2.outDir);
  report(9, "determinism", same && elapsed < kPipelineBudgetS,
         std::string(same ? "identical" : "different") + " metrics reports across reruns; pipeline " +
             fmt("%.1f s", elapsed));
}

}  // namespace

int main() {
  criterion_gradients();
  criterion_viterbi();
  criterion_metric_oracles();
  criterion_constants();
  criterion_determinism();
  criteria_training();
  std::printf("%d criteria failed\n", failures);
  return failures == 0 ? 0 : 1;
}
