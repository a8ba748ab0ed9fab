#pragma once

#include <Eigen/Dense>
#include <cstdint>
#include <functional>
#include <random>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

namespace drivelab {

using Matrix = Eigen::MatrixXd;
using Vector = Eigen::VectorXd;

class TensorError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// A named parameter block with its accumulated gradient. The version
/// counter changes whenever the value is modified, which lets backward
/// passes detect tapes recorded against older parameters.
struct Param {
  std::string name;
  Matrix value;
  Matrix grad;
  std::uint64_t version = 0;

  Param() = default;
  Param(std::string n, Matrix v) : name(std::move(n)), value(std::move(v)), grad(Matrix::Zero(value.rows(), value.cols())) {}

  void zero_grad() { grad.setZero(); }
  void touch() { ++version; }
};

using ParamRefs = std::vector<Param*>;

enum class Activation { Tanh, Relu, Sigmoid, Identity };

std::string to_string(Activation a);
Activation activation_from_string(const std::string& s);

/// Applies the activation elementwise.
Matrix activate(Activation a, const Matrix& z);
/// Derivative with respect to the pre-activation, given pre-activation z and output y.
Matrix activation_grad(Activation a, const Matrix& z, const Matrix& y);

/// Fully connected layer over a batch stored column-wise (in x batch).
class DenseLayer {
 public:
  struct Tape {
    Matrix x, z, y;
    std::uint64_t wVersion = 0, bVersion = 0;
    const DenseLayer* owner = nullptr;
  };

  DenseLayer() = default;
  DenseLayer(std::string name, int in, int out, Activation act, std::mt19937_64& rng);
  DenseLayer(std::string name, Matrix w, Vector b, Activation act);

  int in() const { return static_cast<int>(w_.value.cols()); }
  int out() const { return static_cast<int>(w_.value.rows()); }
  Activation activation() const { return act_; }

  Matrix forward(const Matrix& x, Tape* tape = nullptr) const;
  /// Accumulates parameter gradients and returns the input gradient.
  Matrix backward(const Tape& tape, const Matrix& dy);

  ParamRefs params() { return {&w_, &b_}; }
  const Param& weights() const { return w_; }
  const Param& bias() const { return b_; }

 private:
  Param w_, b_;
  Activation act_ = Activation::Identity;
};

/// Stack of dense layers applied in order.
class DenseStack {
 public:
  struct Tape {
    std::vector<DenseLayer::Tape> layers;
  };

  DenseStack() = default;
  explicit DenseStack(std::vector<DenseLayer> layers) : layers_(std::move(layers)) {}

  Matrix forward(const Matrix& x, Tape* tape = nullptr) const;
  Matrix backward(const Tape& tape, const Matrix& dy);
  ParamRefs params();
  const std::vector<DenseLayer>& layers() const { return layers_; }
  int in() const { return layers_.front().in(); }
  int out() const { return layers_.back().out(); }

 private:
  std::vector<DenseLayer> layers_;
};

/// Gated recurrent encoder returning the final hidden state of a sequence.
/// Each sequence element is an (in x batch) matrix.
class GruEncoder {
 public:
  struct Step {
    Matrix x, hPrev, z, r, n, uh;
  };
  struct Tape {
    std::vector<Step> steps;
    std::vector<std::uint64_t> versions;
    const GruEncoder* owner = nullptr;
  };

  GruEncoder() = default;
  GruEncoder(std::string name, int in, int hidden, std::mt19937_64& rng);

  int in() const { return static_cast<int>(wz_.value.cols()); }
  int hidden() const { return static_cast<int>(uz_.value.rows()); }

  Matrix forward(const std::vector<Matrix>& seq, Tape* tape = nullptr) const;
  /// Accumulates parameter gradients; returns the gradient for each sequence element.
  std::vector<Matrix> backward(const Tape& tape, const Matrix& dh);

  ParamRefs params() { return {&wz_, &uz_, &bz_, &wr_, &ur_, &br_, &wn_, &un_, &bn_}; }

 private:
  std::vector<std::uint64_t> versions() const;

  Param wz_, uz_, bz_, wr_, ur_, br_, wn_, un_, bn_;
};

struct LossGrad {
  double loss = 0.0;
  Matrix grad;  // same shape as the prediction
};

/// Mean-reduced SmoothL1 (beta = 1).
LossGrad smooth_l1(const Matrix& pred, const Matrix& target);
/// Elementwise SmoothL1 value and derivative.
double smooth_l1_value(double e);
double smooth_l1_derivative(double e);

inline constexpr double kProbClamp = 1e-7;

struct ScalarLoss {
  double loss = 0.0;
  double grad = 0.0;  // d loss / d prob
};

/// Binary cross entropy on a clamped probability.
ScalarLoss bce(double prob, double label);

struct AdamState {
  double lr = 1e-4;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
  std::uint64_t step = 0;
  std::vector<Matrix> m, v;
};

/// One bias-corrected Adam update of every parameter from its accumulated
/// gradient. Throws naming the block when a gradient is not finite; no
/// parameter is modified in that case.
void adam_step(const ParamRefs& params, AdamState& state);

void zero_grads(const ParamRefs& params);

/// Largest relative difference between the accumulated analytic gradients
/// and central finite differences of `loss`. `analytic` must zero and fill
/// the gradients. Elementwise relative error uses max(|a|, |n|, floor) as
/// denominator; the block error compares whole blocks with the same rule
/// applied to vector norms.
struct GradCheck {
  double maxRelError = 0.0;
  std::string worstParam;
  double maxBlockRelError = 0.0;
  std::string worstBlock;
  std::size_t checked = 0;
};
GradCheck check_gradients(const ParamRefs& params, const std::function<double()>& loss,
                          const std::function<void()>& analytic, double h = 1e-5, double floor = 1e-6);

/// Structured text: "block <name> <rows> <cols>" followed by one line per row.
std::string params_to_text(const ParamRefs& params);
/// Loads values into existing blocks; names and shapes must match exactly.
void params_from_text(const std::string& text, const ParamRefs& params);

}  // namespace drivelab
