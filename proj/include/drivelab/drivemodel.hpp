#pragma once

#include <cstdint>
#include <random>
#include <stdexcept>
#include <string>
#include <vector>

#include "drivelab/mapfeatures.hpp"
#include "drivelab/tensorcore.hpp"

namespace drivelab {

class TrainError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

inline constexpr int kEncoderHidden = 20;
inline constexpr int kDiscriminatorInput = 2 * kDriveletLength;

struct LossWeights {
  double lambda = 1.0;
  double zeta1 = 0.1;
  double zeta2 = 1.0;
  double rate = 10.0;  // Hz
};

/// O consecutive (steering deg, speed km/h) pairs.
struct Drivelet {
  std::vector<double> s;
  std::vector<double> v;
  std::size_t size() const { return s.size(); }
};

/// Inputs of many windows laid out column-wise.
struct WindowBatch {
  std::vector<Matrix> m14;  // 20 steps of (8 x batch)
  Matrix m56;               // 7 x batch
  Matrix ego;               // 9 x batch
  Eigen::Index size() const { return ego.cols(); }
};

WindowBatch make_batch(const std::vector<const FeatureWindow*>& windows);

/// Single-step driving model: recurrent map-history encoder, heading network
/// and ego encoder fused into steering and speed heads.
class Generator {
 public:
  struct Tape {
    GruEncoder::Tape gru;
    DenseStack::Tape heading, ego, fusion, head;
    Matrix raw;  // head pre-squash outputs
    Matrix out;
  };

  Generator() = default;
  Generator(bool useMap, std::mt19937_64& rng);

  bool uses_map() const { return useMap_; }
  /// 2 x batch: row 0 steering (deg), row 1 speed (km/h).
  Matrix forward(const WindowBatch& batch, Tape* tape = nullptr) const;
  void backward(const Tape& tape, const Matrix& dOut);
  ParamRefs params();

  /// Steering and speed predicted 0.5 s ahead of the window.
  std::pair<double, double> predict(const FeatureWindow& w) const;

 private:
  bool useMap_ = true;
  GruEncoder gru_;
  DenseStack heading_, ego_, fusion_, head_;
};

/// Human-vs-machine classifier over normalised drivelets.
class Discriminator {
 public:
  using Tape = DenseStack::Tape;

  Discriminator() = default;
  explicit Discriminator(std::mt19937_64& rng);

  /// Input 10 x batch (normalised); output 1 x batch probability of "human".
  Matrix forward(const Matrix& x, Tape* tape = nullptr) const;
  Matrix backward(const Tape& tape, const Matrix& dOut);
  ParamRefs params() { return net_.params(); }

  double probability(const Drivelet& d) const;

 private:
  DenseStack net_;
};

/// (s/720 x O, v/180 x O) as one column.
Vector normalize_drivelet(const Drivelet& d);

/// Applies the generator to O consecutive windows.
Drivelet predict_drivelet(const Generator& g, const std::vector<FeatureWindow>& windows);

double loss_accuracy(const Drivelet& pred, const Drivelet& truth, double lambda);
double loss_comfort(const Drivelet& pred, double rate, double lambda);
double loss_human(const Discriminator& d, const Drivelet& pred);

/// Gradients of the three losses with respect to the predicted values.
Drivelet loss_accuracy_grad(const Drivelet& pred, const Drivelet& truth, double lambda);
Drivelet loss_comfort_grad(const Drivelet& pred, double rate, double lambda);
Drivelet loss_human_grad(Discriminator& d, const Drivelet& pred);

/// Starting row of every drivelet: O consecutive rows of one sequence.
std::vector<std::size_t> drivelet_starts(const std::vector<FeatureRow>& rows);

struct CompositeLoss {
  double accuracy = 0.0;
  double comfort = 0.0;
  double human = 0.0;
  double total = 0.0;
};

/// Batch-mean composite generator loss over the drivelets starting at the
/// given rows. When `accumulate` is set the generator gradients are added
/// to its parameter blocks; discriminator gradients are discarded.
CompositeLoss generator_loss(Generator& g, Discriminator& d, const std::vector<FeatureRow>& rows,
                             const std::vector<std::size_t>& starts, const LossWeights& w, bool accumulate);

struct TrainConfig {
  LossWeights weights;
  int epochs = 1;
  int batchSize = 16;
  double lr = 1e-4;
  std::uint64_t seed = 1;
  bool useMap = true;
};

struct TrainLogRow {
  int batch = 0;
  double lossAccuracy = 0.0;
  double lossComfort = 0.0;
  double lossHuman = 0.0;
  double discriminatorAccuracy = 0.0;
};

struct TrainedModel {
  Generator generator;
  Discriminator discriminator;
  std::vector<TrainLogRow> log;
};

/// Alternating discriminator / generator training over shuffled drivelets.
TrainedModel train(const std::vector<FeatureRow>& rows, const TrainConfig& cfg);

/// One-step predictions for every row, in row order (2 x rows).
Matrix predict_rows(const Generator& g, const std::vector<FeatureRow>& rows);

std::string checkpoint_to_text(Generator& g, Discriminator& d);
/// Rebuilds both networks from a checkpoint.
TrainedModel checkpoint_from_text(const std::string& text);

}  // namespace drivelab
