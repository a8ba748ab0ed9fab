#include "drivelab/drivemodel.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <sstream>

namespace drivelab {

namespace {

constexpr int kHeadingHidden = 10;
constexpr int kEgoHidden = 10;
constexpr int kFusionHidden = 20;
constexpr int kDiscriminatorHidden = 10;

void require_size(const Drivelet& d, std::size_t n, const char* what) {
  if (d.s.size() != n || d.v.size() != n) throw TrainError(std::string(what) + ": drivelet length mismatch");
}

Drivelet column_drivelet(const Matrix& out, Eigen::Index first, int n) {
  Drivelet d;
  for (int o = 0; o < n; ++o) {
    d.s.push_back(out(0, first + o));
    d.v.push_back(out(1, first + o));
  }
  return d;
}

Drivelet target_drivelet(const FeatureRow& row) {
  return {std::vector<double>(row.targetS.begin(), row.targetS.end()),
          std::vector<double>(row.targetV.begin(), row.targetV.end())};
}

void check_finite(double v, const char* component, int batch) {
  if (!std::isfinite(v)) {
    throw TrainError(std::string("non-finite ") + component + " loss at batch " + std::to_string(batch));
  }
}

}  // namespace

WindowBatch make_batch(const std::vector<const FeatureWindow*>& windows) {
  const auto n = static_cast<Eigen::Index>(windows.size());
  WindowBatch b;
  b.m14.assign(kHistorySamples, Matrix(kMapFeaturesPerSample, n));
  b.m56.resize(kM56Size, n);
  b.ego.resize(kEgoSize, n);
  for (Eigen::Index c = 0; c < n; ++c) {
    const FeatureWindow& w = *windows[c];
    if (w.m14.size() != kM14Size || w.m56.size() != kM56Size || w.ego.size() != kEgoSize) {
      throw TrainError("feature window has the wrong shape");
    }
    for (int k = 0; k < kHistorySamples; ++k)
      for (int j = 0; j < kMapFeaturesPerSample; ++j) b.m14[k](j, c) = w.m14[k * kMapFeaturesPerSample + j];
    for (int j = 0; j < kM56Size; ++j) b.m56(j, c) = w.m56[j];
    for (int j = 0; j < kEgoSize; ++j) b.ego(j, c) = w.ego[j];
  }
  return b;
}

Generator::Generator(bool useMap, std::mt19937_64& rng) : useMap_(useMap) {
  if (useMap_) {
    gru_ = GruEncoder("gen.map_history", kMapFeaturesPerSample, kEncoderHidden, rng);
    heading_ = DenseStack({DenseLayer("gen.heading0", kM56Size, kHeadingHidden, Activation::Tanh, rng),
                           DenseLayer("gen.heading1", kHeadingHidden, kHeadingHidden, Activation::Tanh, rng),
                           DenseLayer("gen.heading2", kHeadingHidden, kHeadingHidden, Activation::Tanh, rng)});
  }
  ego_ = DenseStack({DenseLayer("gen.ego", kEgoSize, kEgoHidden, Activation::Tanh, rng)});
  int fusionIn = kEgoHidden + (useMap_ ? kEncoderHidden + kHeadingHidden : 0);
  fusion_ = DenseStack({DenseLayer("gen.fusion", fusionIn, kFusionHidden, Activation::Tanh, rng)});
  head_ = DenseStack({DenseLayer("gen.head", kFusionHidden, 2, Activation::Identity, rng)});
}

Matrix Generator::forward(const WindowBatch& batch, Tape* tape) const {
  const Eigen::Index n = batch.size();
  Matrix egoCode = ego_.forward(batch.ego, tape ? &tape->ego : nullptr);
  Matrix fused;
  if (useMap_) {
    Matrix mapCode = gru_.forward(batch.m14, tape ? &tape->gru : nullptr);
    Matrix headCode = heading_.forward(batch.m56, tape ? &tape->heading : nullptr);
    fused.resize(kEncoderHidden + kHeadingHidden + kEgoHidden, n);
    fused << mapCode, headCode, egoCode;
  } else {
    fused = egoCode;
  }
  Matrix hidden = fusion_.forward(fused, tape ? &tape->fusion : nullptr);
  Matrix raw = head_.forward(hidden, tape ? &tape->head : nullptr);
  Matrix out(2, n);
  for (Eigen::Index c = 0; c < n; ++c) {
    out(0, c) = kMaxSteeringDeg * std::tanh(raw(0, c));
    out(1, c) = kMaxSpeedKmh / (1.0 + std::exp(-raw(1, c)));
  }
  if (tape) {
    tape->raw = raw;
    tape->out = out;
  }
  return out;
}

void Generator::backward(const Tape& tape, const Matrix& dOut) {
  const Eigen::Index n = tape.out.cols();
  if (dOut.rows() != 2 || dOut.cols() != n) throw TrainError("generator output gradient has the wrong shape");
  Matrix draw(2, n);
  for (Eigen::Index c = 0; c < n; ++c) {
    double t = tape.out(0, c) / kMaxSteeringDeg;
    double sg = tape.out(1, c) / kMaxSpeedKmh;
    draw(0, c) = dOut(0, c) * kMaxSteeringDeg * (1.0 - t * t);
    draw(1, c) = dOut(1, c) * kMaxSpeedKmh * sg * (1.0 - sg);
  }
  Matrix dh = head_.backward(tape.head, draw);
  Matrix dfused = fusion_.backward(tape.fusion, dh);
  if (useMap_) {
    gru_.backward(tape.gru, dfused.topRows(kEncoderHidden));
    heading_.backward(tape.heading, dfused.middleRows(kEncoderHidden, kHeadingHidden));
    ego_.backward(tape.ego, dfused.bottomRows(kEgoHidden));
  } else {
    ego_.backward(tape.ego, dfused);
  }
}

ParamRefs Generator::params() {
  ParamRefs out;
  auto add = [&](ParamRefs p) { out.insert(out.end(), p.begin(), p.end()); };
  if (useMap_) {
    add(gru_.params());
    add(heading_.params());
  }
  add(ego_.params());
  add(fusion_.params());
  add(head_.params());
  return out;
}

std::pair<double, double> Generator::predict(const FeatureWindow& w) const {
  Matrix out = forward(make_batch({&w}));
  return {out(0, 0), out(1, 0)};
}

Discriminator::Discriminator(std::mt19937_64& rng) {
  net_ = DenseStack({DenseLayer("disc.fc0", kDiscriminatorInput, kDiscriminatorHidden, Activation::Tanh, rng),
                     DenseLayer("disc.fc1", kDiscriminatorHidden, kDiscriminatorHidden, Activation::Tanh, rng),
                     DenseLayer("disc.fc2", kDiscriminatorHidden, kDiscriminatorHidden, Activation::Tanh, rng),
                     DenseLayer("disc.out", kDiscriminatorHidden, 1, Activation::Sigmoid, rng)});
}

Matrix Discriminator::forward(const Matrix& x, Tape* tape) const {
  if (x.rows() != kDiscriminatorInput) {
    throw TrainError("discriminator expects " + std::to_string(kDiscriminatorInput) + " inputs, got " +
                     std::to_string(x.rows()));
  }
  return net_.forward(x, tape);
}

Matrix Discriminator::backward(const Tape& tape, const Matrix& dOut) { return net_.backward(tape, dOut); }

double Discriminator::probability(const Drivelet& d) const { return forward(normalize_drivelet(d))(0, 0); }

Vector normalize_drivelet(const Drivelet& d) {
  require_size(d, kDriveletLength, "discriminator input");
  Vector x(kDiscriminatorInput);
  for (int o = 0; o < kDriveletLength; ++o) {
    x(o) = d.s[o] / kMaxSteeringDeg;
    x(kDriveletLength + o) = d.v[o] / kMaxSpeedKmh;
  }
  return x;
}

Drivelet predict_drivelet(const Generator& g, const std::vector<FeatureWindow>& windows) {
  if (windows.size() != static_cast<std::size_t>(kDriveletLength)) {
    throw TrainError("a drivelet needs " + std::to_string(kDriveletLength) + " windows, got " +
                     std::to_string(windows.size()));
  }
  std::vector<const FeatureWindow*> ptrs;
  for (const auto& w : windows) ptrs.push_back(&w);
  return column_drivelet(g.forward(make_batch(ptrs)), 0, kDriveletLength);
}

double loss_accuracy(const Drivelet& pred, const Drivelet& truth, double lambda) {
  require_size(truth, pred.size(), "accuracy loss");
  double sum = 0.0;
  for (std::size_t o = 0; o < pred.size(); ++o) {
    sum += smooth_l1_value(pred.s[o] - truth.s[o]) + lambda * smooth_l1_value(pred.v[o] - truth.v[o]);
  }
  return sum;
}

Drivelet loss_accuracy_grad(const Drivelet& pred, const Drivelet& truth, double lambda) {
  require_size(truth, pred.size(), "accuracy loss");
  Drivelet g{std::vector<double>(pred.size()), std::vector<double>(pred.size())};
  for (std::size_t o = 0; o < pred.size(); ++o) {
    g.s[o] = smooth_l1_derivative(pred.s[o] - truth.s[o]);
    g.v[o] = lambda * smooth_l1_derivative(pred.v[o] - truth.v[o]);
  }
  return g;
}

double loss_comfort(const Drivelet& pred, double rate, double lambda) {
  require_size(pred, pred.s.size(), "comfort loss");
  if (pred.size() < 3) throw TrainError("comfort loss needs at least 3 predictions");
  const double scale = rate * rate;
  double sum = 0.0;
  for (std::size_t o = 1; o + 1 < pred.size(); ++o) {
    sum += std::abs(pred.s[o - 1] - 2.0 * pred.s[o] + pred.s[o + 1]) * scale +
           lambda * std::abs(pred.v[o - 1] - 2.0 * pred.v[o] + pred.v[o + 1]) * scale;
  }
  return sum;
}

Drivelet loss_comfort_grad(const Drivelet& pred, double rate, double lambda) {
  if (pred.size() < 3) throw TrainError("comfort loss needs at least 3 predictions");
  const double scale = rate * rate;
  Drivelet g{std::vector<double>(pred.size(), 0.0), std::vector<double>(pred.size(), 0.0)};
  auto sign = [](double x) { return (x > 0.0) - (x < 0.0); };
  for (std::size_t o = 1; o + 1 < pred.size(); ++o) {
    double ss = sign(pred.s[o - 1] - 2.0 * pred.s[o] + pred.s[o + 1]) * scale;
    double sv = lambda * sign(pred.v[o - 1] - 2.0 * pred.v[o] + pred.v[o + 1]) * scale;
    g.s[o - 1] += ss;
    g.s[o] -= 2.0 * ss;
    g.s[o + 1] += ss;
    g.v[o - 1] += sv;
    g.v[o] -= 2.0 * sv;
    g.v[o + 1] += sv;
  }
  return g;
}

double loss_human(const Discriminator& d, const Drivelet& pred) {
  return -std::log(std::clamp(d.probability(pred), kProbClamp, 1.0 - kProbClamp));
}

Drivelet loss_human_grad(Discriminator& d, const Drivelet& pred) {
  Discriminator::Tape tape;
  Matrix p = d.forward(normalize_drivelet(pred), &tape);
  ScalarLoss l = bce(p(0, 0), 1.0);
  Matrix dp(1, 1);
  dp(0, 0) = l.grad;
  Matrix dx = d.backward(tape, dp);
  Drivelet g{std::vector<double>(kDriveletLength), std::vector<double>(kDriveletLength)};
  for (int o = 0; o < kDriveletLength; ++o) {
    g.s[o] = dx(o, 0) / kMaxSteeringDeg;
    g.v[o] = dx(kDriveletLength + o, 0) / kMaxSpeedKmh;
  }
  return g;
}

std::vector<std::size_t> drivelet_starts(const std::vector<FeatureRow>& rows) {
  std::vector<std::size_t> out;
  for (std::size_t i = 0; i + kDriveletLength <= rows.size(); ++i) {
    const auto& last = rows[i + kDriveletLength - 1];
    if (last.sequence == rows[i].sequence && last.index == rows[i].index + kDriveletLength - 1) out.push_back(i);
  }
  return out;
}

namespace {

struct BatchPass {
  Generator::Tape tape;
  Matrix out;  // 2 x (B * O), drivelet-major
};

BatchPass run_generator(const Generator& g, const std::vector<FeatureRow>& rows,
                        const std::vector<std::size_t>& starts, bool withTape) {
  std::vector<const FeatureWindow*> ptrs;
  ptrs.reserve(starts.size() * kDriveletLength);
  for (std::size_t s : starts)
    for (int o = 0; o < kDriveletLength; ++o) ptrs.push_back(&rows[s + o].window);
  BatchPass p;
  p.out = g.forward(make_batch(ptrs), withTape ? &p.tape : nullptr);
  return p;
}

Matrix normalized_columns(const std::vector<Drivelet>& ds) {
  Matrix x(kDiscriminatorInput, static_cast<Eigen::Index>(ds.size()));
  for (std::size_t b = 0; b < ds.size(); ++b) x.col(static_cast<Eigen::Index>(b)) = normalize_drivelet(ds[b]);
  return x;
}

}  // namespace

CompositeLoss generator_loss(Generator& g, Discriminator& d, const std::vector<FeatureRow>& rows,
                             const std::vector<std::size_t>& starts, const LossWeights& w, bool accumulate) {
  if (starts.empty()) throw TrainError("empty drivelet batch");
  BatchPass pass = run_generator(g, rows, starts, accumulate);
  const double nb = static_cast<double>(starts.size());
  std::vector<Drivelet> preds;
  for (std::size_t b = 0; b < starts.size(); ++b)
    preds.push_back(column_drivelet(pass.out, static_cast<Eigen::Index>(b * kDriveletLength), kDriveletLength));

  Discriminator::Tape dtape;
  Matrix prob = d.forward(normalized_columns(preds), accumulate ? &dtape : nullptr);

  CompositeLoss loss;
  Matrix dOut = Matrix::Zero(2, pass.out.cols());
  Matrix dProb(1, prob.cols());
  for (std::size_t b = 0; b < starts.size(); ++b) {
    Drivelet truth = target_drivelet(rows[starts[b]]);
    loss.accuracy += loss_accuracy(preds[b], truth, w.lambda) / nb;
    loss.comfort += loss_comfort(preds[b], w.rate, w.lambda) / nb;
    ScalarLoss h = bce(prob(0, static_cast<Eigen::Index>(b)), 1.0);
    loss.human += h.loss / nb;
    dProb(0, static_cast<Eigen::Index>(b)) = w.zeta2 * h.grad / nb;
    if (accumulate) {
      Drivelet ga = loss_accuracy_grad(preds[b], truth, w.lambda);
      Drivelet gc = loss_comfort_grad(preds[b], w.rate, w.lambda);
      for (int o = 0; o < kDriveletLength; ++o) {
        auto c = static_cast<Eigen::Index>(b * kDriveletLength + o);
        dOut(0, c) += (ga.s[o] + w.zeta1 * gc.s[o]) / nb;
        dOut(1, c) += (ga.v[o] + w.zeta1 * gc.v[o]) / nb;
      }
    }
  }
  loss.total = loss.accuracy + w.zeta1 * loss.comfort + w.zeta2 * loss.human;

  if (accumulate) {
    if (w.zeta2 != 0.0) {
      ParamRefs dp = d.params();
      std::vector<Matrix> saved;
      for (auto* p : dp) saved.push_back(p->grad);
      Matrix dx = d.backward(dtape, dProb);
      for (std::size_t i = 0; i < dp.size(); ++i) dp[i]->grad = saved[i];
      for (std::size_t b = 0; b < starts.size(); ++b)
        for (int o = 0; o < kDriveletLength; ++o) {
          auto c = static_cast<Eigen::Index>(b * kDriveletLength + o);
          dOut(0, c) += dx(o, static_cast<Eigen::Index>(b)) / kMaxSteeringDeg;
          dOut(1, c) += dx(kDriveletLength + o, static_cast<Eigen::Index>(b)) / kMaxSpeedKmh;
        }
    }
    g.backward(pass.tape, dOut);
  }
  return loss;
}

TrainedModel train(const std::vector<FeatureRow>& rows, const TrainConfig& cfg) {
  if (cfg.epochs < 1 || cfg.batchSize < 1) throw TrainError("epochs and batch size must be positive");
  if (!(cfg.lr > 0.0)) throw TrainError("learning rate must be positive");
  const auto& w = cfg.weights;
  if (w.lambda < 0 || w.zeta1 < 0 || w.zeta2 < 0 || !(w.rate > 0)) throw TrainError("loss weights must be non-negative");
  std::vector<std::size_t> starts = drivelet_starts(rows);
  if (starts.empty()) throw TrainError("dataset contains no complete drivelet");

  std::mt19937_64 rng(cfg.seed);
  TrainedModel m{Generator(cfg.useMap, rng), Discriminator(rng), {}};
  AdamState gOpt, dOpt;
  gOpt.lr = dOpt.lr = cfg.lr;
  ParamRefs gp = m.generator.params();
  ParamRefs dp = m.discriminator.params();

  int batchNo = 0;
  for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
    std::vector<std::size_t> order = starts;
    std::shuffle(order.begin(), order.end(), rng);
    for (std::size_t first = 0; first < order.size(); first += cfg.batchSize) {
      std::vector<std::size_t> batch(order.begin() + first,
                                     order.begin() + std::min(order.size(), first + cfg.batchSize));
      const double nb = static_cast<double>(batch.size());

      // Discriminator step on human versus detached machine drivelets.
      Matrix machine = run_generator(m.generator, rows, batch, false).out;
      std::vector<Drivelet> human, fake;
      for (std::size_t b = 0; b < batch.size(); ++b) {
        human.push_back(target_drivelet(rows[batch[b]]));
        fake.push_back(column_drivelet(machine, static_cast<Eigen::Index>(b * kDriveletLength), kDriveletLength));
      }
      Matrix x(kDiscriminatorInput, 2 * static_cast<Eigen::Index>(batch.size()));
      x << normalized_columns(human), normalized_columns(fake);
      zero_grads(dp);
      Discriminator::Tape dt;
      Matrix prob = m.discriminator.forward(x, &dt);
      Matrix dProb(1, x.cols());
      double dLoss = 0.0;
      int correct = 0;
      for (Eigen::Index c = 0; c < x.cols(); ++c) {
        double label = c < static_cast<Eigen::Index>(batch.size()) ? 1.0 : 0.0;
        ScalarLoss l = bce(prob(0, c), label);
        dLoss += l.loss / (2.0 * nb);
        dProb(0, c) = l.grad / (2.0 * nb);
        correct += (prob(0, c) > 0.5) == (label == 1.0);
      }
      check_finite(dLoss, "discriminator", batchNo);
      m.discriminator.backward(dt, dProb);
      adam_step(dp, dOpt);

      // Generator step on the composite loss.
      zero_grads(gp);
      CompositeLoss l = generator_loss(m.generator, m.discriminator, rows, batch, w, true);
      check_finite(l.accuracy, "accuracy", batchNo);
      check_finite(l.comfort, "comfort", batchNo);
      check_finite(l.human, "human-likeness", batchNo);
      adam_step(gp, gOpt);

      m.log.push_back({batchNo, l.accuracy, l.comfort, l.human, correct / (2.0 * nb)});
      ++batchNo;
    }
  }
  return m;
}

Matrix predict_rows(const Generator& g, const std::vector<FeatureRow>& rows) {
  Matrix out(2, static_cast<Eigen::Index>(rows.size()));
  constexpr std::size_t kChunk = 512;
  for (std::size_t first = 0; first < rows.size(); first += kChunk) {
    std::size_t last = std::min(rows.size(), first + kChunk);
    std::vector<const FeatureWindow*> ptrs;
    for (std::size_t i = first; i < last; ++i) ptrs.push_back(&rows[i].window);
    out.middleCols(static_cast<Eigen::Index>(first), static_cast<Eigen::Index>(last - first)) =
        g.forward(make_batch(ptrs));
  }
  return out;
}

std::string checkpoint_to_text(Generator& g, Discriminator& d) {
  std::string out = "# format=drivelab.checkpoint\n# version=1\n";
  out += std::string("# use_map=") + (g.uses_map() ? "1" : "0") + "\n";
  ParamRefs all = g.params();
  for (auto* p : d.params()) all.push_back(p);
  return out + params_to_text(all);
}

TrainedModel checkpoint_from_text(const std::string& text) {
  if (text.find("# format=drivelab.checkpoint") == std::string::npos) {
    throw TensorError("not a drivelab checkpoint");
  }
  bool useMap = text.find("# use_map=0") == std::string::npos;
  std::mt19937_64 rng(0);
  TrainedModel m{Generator(useMap, rng), Discriminator(rng), {}};
  ParamRefs all = m.generator.params();
  for (auto* p : m.discriminator.params()) all.push_back(p);
  params_from_text(text, all);
  return m;
}

}  // namespace drivelab
