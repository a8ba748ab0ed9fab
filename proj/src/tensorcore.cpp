#include "drivelab/tensorcore.hpp"

#include <charconv>
#include <cmath>
#include <sstream>

namespace drivelab {

namespace {

Matrix uniform_matrix(int rows, int cols, double bound, std::mt19937_64& rng) {
  std::uniform_real_distribution<double> u(-bound, bound);
  Matrix m(rows, cols);
  for (int i = 0; i < rows; ++i)
    for (int j = 0; j < cols; ++j) m(i, j) = u(rng);
  return m;
}

Matrix sigmoid(const Matrix& z) {
  return z.unaryExpr([](double v) { return 1.0 / (1.0 + std::exp(-v)); });
}

void check_shape(const Matrix& m, int rows, const char* what) {
  if (m.rows() != rows) {
    throw TensorError(std::string(what) + ": expected " + std::to_string(rows) + " rows, got " +
                      std::to_string(m.rows()));
  }
}

std::string format(double v) {
  char buf[64];
  auto res = std::to_chars(buf, buf + sizeof(buf), v);
  return std::string(buf, res.ptr);
}

}  // namespace

std::string to_string(Activation a) {
  switch (a) {
    case Activation::Tanh: return "tanh";
    case Activation::Relu: return "relu";
    case Activation::Sigmoid: return "sigmoid";
    case Activation::Identity: return "identity";
  }
  return "identity";
}

Activation activation_from_string(const std::string& s) {
  if (s == "tanh") return Activation::Tanh;
  if (s == "relu") return Activation::Relu;
  if (s == "sigmoid") return Activation::Sigmoid;
  if (s == "identity") return Activation::Identity;
  throw TensorError("unknown activation '" + s + "'");
}

Matrix activate(Activation a, const Matrix& z) {
  switch (a) {
    case Activation::Tanh: return z.array().tanh().matrix();
    case Activation::Relu: return z.cwiseMax(0.0);
    case Activation::Sigmoid: return sigmoid(z);
    case Activation::Identity: return z;
  }
  return z;
}

Matrix activation_grad(Activation a, const Matrix& z, const Matrix& y) {
  switch (a) {
    case Activation::Tanh: return (1.0 - y.array().square()).matrix();
    case Activation::Relu: return z.unaryExpr([](double v) { return v > 0.0 ? 1.0 : 0.0; });
    case Activation::Sigmoid: return (y.array() * (1.0 - y.array())).matrix();
    case Activation::Identity: return Matrix::Ones(z.rows(), z.cols());
  }
  return Matrix::Ones(z.rows(), z.cols());
}

DenseLayer::DenseLayer(std::string name, int in, int out, Activation act, std::mt19937_64& rng) : act_(act) {
  if (in <= 0 || out <= 0) throw TensorError("dense layer '" + name + "' needs positive sizes");
  double bound = std::sqrt(6.0 / (in + out));
  w_ = Param(name + ".W", uniform_matrix(out, in, bound, rng));
  b_ = Param(name + ".b", Matrix::Zero(out, 1));
}

DenseLayer::DenseLayer(std::string name, Matrix w, Vector b, Activation act) : act_(act) {
  if (w.rows() != b.size()) throw TensorError("dense layer '" + name + "': bias size does not match weights");
  w_ = Param(name + ".W", std::move(w));
  b_ = Param(name + ".b", Matrix(b));
}

Matrix DenseLayer::forward(const Matrix& x, Tape* tape) const {
  if (x.rows() != in()) {
    throw TensorError(w_.name + ": input has " + std::to_string(x.rows()) + " rows, layer expects " +
                      std::to_string(in()));
  }
  Matrix z = w_.value * x;
  z.colwise() += b_.value.col(0);
  Matrix y = activate(act_, z);
  if (tape) {
    tape->x = x;
    tape->z = z;
    tape->y = y;
    tape->wVersion = w_.version;
    tape->bVersion = b_.version;
    tape->owner = this;
  }
  return y;
}

Matrix DenseLayer::backward(const Tape& tape, const Matrix& dy) {
  if (tape.owner != this || tape.wVersion != w_.version || tape.bVersion != b_.version) {
    throw TensorError(w_.name + ": stale or foreign tape");
  }
  if (dy.rows() != out() || dy.cols() != tape.y.cols()) throw TensorError(w_.name + ": output gradient shape mismatch");
  Matrix dz = dy.cwiseProduct(activation_grad(act_, tape.z, tape.y));
  w_.grad.noalias() += dz * tape.x.transpose();
  b_.grad += dz.rowwise().sum();
  return w_.value.transpose() * dz;
}

Matrix DenseStack::forward(const Matrix& x, Tape* tape) const {
  if (tape) tape->layers.assign(layers_.size(), {});
  Matrix h = x;
  for (std::size_t i = 0; i < layers_.size(); ++i) h = layers_[i].forward(h, tape ? &tape->layers[i] : nullptr);
  return h;
}

Matrix DenseStack::backward(const Tape& tape, const Matrix& dy) {
  if (tape.layers.size() != layers_.size()) throw TensorError("dense stack: tape does not match layer count");
  Matrix g = dy;
  for (std::size_t i = layers_.size(); i-- > 0;) g = layers_[i].backward(tape.layers[i], g);
  return g;
}

ParamRefs DenseStack::params() {
  ParamRefs out;
  for (auto& l : layers_) {
    auto p = l.params();
    out.insert(out.end(), p.begin(), p.end());
  }
  return out;
}

GruEncoder::GruEncoder(std::string name, int in, int hidden, std::mt19937_64& rng) {
  if (in <= 0 || hidden <= 0) throw TensorError("recurrent encoder '" + name + "' needs positive sizes");
  double k = 1.0 / std::sqrt(static_cast<double>(hidden));
  wz_ = Param(name + ".Wz", uniform_matrix(hidden, in, k, rng));
  uz_ = Param(name + ".Uz", uniform_matrix(hidden, hidden, k, rng));
  bz_ = Param(name + ".bz", Matrix::Zero(hidden, 1));
  wr_ = Param(name + ".Wr", uniform_matrix(hidden, in, k, rng));
  ur_ = Param(name + ".Ur", uniform_matrix(hidden, hidden, k, rng));
  br_ = Param(name + ".br", Matrix::Zero(hidden, 1));
  wn_ = Param(name + ".Wn", uniform_matrix(hidden, in, k, rng));
  un_ = Param(name + ".Un", uniform_matrix(hidden, hidden, k, rng));
  bn_ = Param(name + ".bn", Matrix::Zero(hidden, 1));
}

std::vector<std::uint64_t> GruEncoder::versions() const {
  return {wz_.version, uz_.version, bz_.version, wr_.version, ur_.version,
          br_.version, wn_.version, un_.version, bn_.version};
}

Matrix GruEncoder::forward(const std::vector<Matrix>& seq, Tape* tape) const {
  if (seq.empty()) throw TensorError(wz_.name + ": empty input sequence");
  const Eigen::Index batch = seq.front().cols();
  Matrix h = Matrix::Zero(hidden(), batch);
  if (tape) {
    tape->steps.clear();
    tape->steps.reserve(seq.size());
    tape->versions = versions();
    tape->owner = this;
  }
  for (const auto& x : seq) {
    check_shape(x, in(), "recurrent encoder input");
    if (x.cols() != batch) throw TensorError("recurrent encoder: batch size changes within the sequence");
    Matrix az = wz_.value * x + uz_.value * h;
    az.colwise() += bz_.value.col(0);
    Matrix ar = wr_.value * x + ur_.value * h;
    ar.colwise() += br_.value.col(0);
    Matrix z = sigmoid(az);
    Matrix r = sigmoid(ar);
    Matrix uh = un_.value * h;
    Matrix an = wn_.value * x + r.cwiseProduct(uh);
    an.colwise() += bn_.value.col(0);
    Matrix n = an.array().tanh().matrix();
    Matrix next = (1.0 - z.array()).matrix().cwiseProduct(n) + z.cwiseProduct(h);
    if (tape) tape->steps.push_back({x, h, z, r, n, uh});
    h = std::move(next);
  }
  return h;
}

std::vector<Matrix> GruEncoder::backward(const Tape& tape, const Matrix& dhOut) {
  if (tape.owner != this || tape.versions != versions()) throw TensorError(wz_.name + ": stale or foreign tape");
  if (tape.steps.empty()) throw TensorError(wz_.name + ": empty tape");
  std::vector<Matrix> dx(tape.steps.size());
  Matrix dh = dhOut;
  for (std::size_t t = tape.steps.size(); t-- > 0;) {
    const Step& s = tape.steps[t];
    // h' = (1 - z) n + z h
    Matrix dn = dh.cwiseProduct((1.0 - s.z.array()).matrix());
    Matrix dz = dh.cwiseProduct(s.hPrev - s.n);
    Matrix dhPrev = dh.cwiseProduct(s.z);
    Matrix dan = dn.cwiseProduct((1.0 - s.n.array().square()).matrix());
    Matrix dr = dan.cwiseProduct(s.uh);
    Matrix duh = dan.cwiseProduct(s.r);
    Matrix daz = dz.cwiseProduct((s.z.array() * (1.0 - s.z.array())).matrix());
    Matrix dar = dr.cwiseProduct((s.r.array() * (1.0 - s.r.array())).matrix());

    wz_.grad.noalias() += daz * s.x.transpose();
    uz_.grad.noalias() += daz * s.hPrev.transpose();
    bz_.grad += daz.rowwise().sum();
    wr_.grad.noalias() += dar * s.x.transpose();
    ur_.grad.noalias() += dar * s.hPrev.transpose();
    br_.grad += dar.rowwise().sum();
    wn_.grad.noalias() += dan * s.x.transpose();
    un_.grad.noalias() += duh * s.hPrev.transpose();
    bn_.grad += dan.rowwise().sum();

    dhPrev.noalias() += uz_.value.transpose() * daz + ur_.value.transpose() * dar + un_.value.transpose() * duh;
    dx[t] = wz_.value.transpose() * daz + wr_.value.transpose() * dar + wn_.value.transpose() * dan;
    dh = std::move(dhPrev);
  }
  return dx;
}

double smooth_l1_value(double e) {
  double a = std::abs(e);
  return a < 1.0 ? 0.5 * e * e : a - 0.5;
}

double smooth_l1_derivative(double e) {
  if (std::abs(e) < 1.0) return e;
  return e > 0.0 ? 1.0 : -1.0;
}

LossGrad smooth_l1(const Matrix& pred, const Matrix& target) {
  if (pred.rows() != target.rows() || pred.cols() != target.cols()) {
    throw TensorError("smooth_l1: prediction and target shapes differ");
  }
  if (pred.size() == 0) throw TensorError("smooth_l1: empty input");
  const double n = static_cast<double>(pred.size());
  LossGrad out;
  out.grad.resize(pred.rows(), pred.cols());
  double sum = 0.0;
  for (Eigen::Index j = 0; j < pred.cols(); ++j)
    for (Eigen::Index i = 0; i < pred.rows(); ++i) {
      double e = pred(i, j) - target(i, j);
      sum += smooth_l1_value(e);
      out.grad(i, j) = smooth_l1_derivative(e) / n;
    }
  out.loss = sum / n;
  return out;
}

ScalarLoss bce(double prob, double label) {
  double p = std::clamp(prob, kProbClamp, 1.0 - kProbClamp);
  ScalarLoss out;
  out.loss = -(label * std::log(p) + (1.0 - label) * std::log(1.0 - p));
  // The clamp is flat outside its range, so the derivative vanishes there.
  if (prob < kProbClamp || prob > 1.0 - kProbClamp) {
    out.grad = 0.0;
  } else {
    out.grad = -label / p + (1.0 - label) / (1.0 - p);
  }
  return out;
}

void zero_grads(const ParamRefs& params) {
  for (auto* p : params) p->zero_grad();
}

void adam_step(const ParamRefs& params, AdamState& state) {
  for (const auto* p : params) {
    if (!p->grad.allFinite()) throw TensorError("non-finite gradient in parameter block '" + p->name + "'");
    if (p->grad.rows() != p->value.rows() || p->grad.cols() != p->value.cols()) {
      throw TensorError("gradient shape mismatch in parameter block '" + p->name + "'");
    }
  }
  if (state.m.empty()) {
    for (const auto* p : params) {
      state.m.push_back(Matrix::Zero(p->value.rows(), p->value.cols()));
      state.v.push_back(Matrix::Zero(p->value.rows(), p->value.cols()));
    }
  }
  if (state.m.size() != params.size()) throw TensorError("optimizer state does not match the parameter list");
  ++state.step;
  const double c1 = 1.0 - std::pow(state.beta1, static_cast<double>(state.step));
  const double c2 = 1.0 - std::pow(state.beta2, static_cast<double>(state.step));
  for (std::size_t i = 0; i < params.size(); ++i) {
    Param& p = *params[i];
    if (state.m[i].rows() != p.value.rows() || state.m[i].cols() != p.value.cols()) {
      throw TensorError("optimizer moment shape mismatch for '" + p.name + "'");
    }
    state.m[i] = state.beta1 * state.m[i] + (1.0 - state.beta1) * p.grad;
    state.v[i] = state.beta2 * state.v[i] + (1.0 - state.beta2) * p.grad.cwiseAbs2();
    Matrix mhat = state.m[i] / c1;
    Matrix vhat = state.v[i] / c2;
    p.value.array() -= state.lr * mhat.array() / (vhat.array().sqrt() + state.eps);
    p.touch();
  }
}

GradCheck check_gradients(const ParamRefs& params, const std::function<double()>& loss,
                          const std::function<void()>& analytic, double h, double floor) {
  analytic();
  GradCheck out;
  for (auto* p : params) {
    Matrix g = p->grad;
    Matrix n(g.rows(), g.cols());
    for (Eigen::Index i = 0; i < p->value.size(); ++i) {
      double orig = p->value.data()[i];
      p->value.data()[i] = orig + h;
      p->touch();
      double up = loss();
      p->value.data()[i] = orig - h;
      p->touch();
      double down = loss();
      p->value.data()[i] = orig;
      p->touch();
      double numeric = (up - down) / (2.0 * h);
      n.data()[i] = numeric;
      double a = g.data()[i];
      double rel = std::abs(a - numeric) / std::max({std::abs(a), std::abs(numeric), floor});
      if (rel > out.maxRelError) {
        out.maxRelError = rel;
        out.worstParam = p->name + "[" + std::to_string(i) + "]";
      }
      ++out.checked;
    }
    double block = (g - n).norm() / std::max({g.norm(), n.norm(), floor});
    if (block > out.maxBlockRelError) {
      out.maxBlockRelError = block;
      out.worstBlock = p->name;
    }
  }
  return out;
}

std::string params_to_text(const ParamRefs& params) {
  std::string out;
  for (const auto* p : params) {
    out += "block " + p->name + " " + std::to_string(p->value.rows()) + " " + std::to_string(p->value.cols()) + "\n";
    for (Eigen::Index i = 0; i < p->value.rows(); ++i) {
      for (Eigen::Index j = 0; j < p->value.cols(); ++j) {
        if (j) out += ' ';
        out += format(p->value(i, j));
      }
      out += '\n';
    }
  }
  return out;
}

void params_from_text(const std::string& text, const ParamRefs& params) {
  std::istringstream in(text);
  std::string line;
  std::size_t next = 0;
  while (std::getline(in, line)) {
    if (line.empty() || line[0] == '#') continue;
    std::istringstream head(line);
    std::string kw, name;
    Eigen::Index rows = 0, cols = 0;
    if (!(head >> kw) || kw != "block") continue;
    if (!(head >> name >> rows >> cols)) throw TensorError("malformed block header: '" + line + "'");
    if (next >= params.size()) throw TensorError("checkpoint has more blocks than the model ('" + name + "')");
    Param& p = *params[next++];
    if (p.name != name) throw TensorError("checkpoint block '" + name + "' where '" + p.name + "' was expected");
    if (p.value.rows() != rows || p.value.cols() != cols) {
      throw TensorError("checkpoint block '" + name + "' has shape " + std::to_string(rows) + "x" +
                        std::to_string(cols) + ", model expects " + std::to_string(p.value.rows()) + "x" +
                        std::to_string(p.value.cols()));
    }
    for (Eigen::Index i = 0; i < rows; ++i) {
      if (!std::getline(in, line)) throw TensorError("checkpoint block '" + name + "' is truncated");
      const char* c = line.data();
      const char* end = line.data() + line.size();
      for (Eigen::Index j = 0; j < cols; ++j) {
        while (c < end && *c == ' ') ++c;
        double v = 0.0;
        auto res = std::from_chars(c, end, v);
        if (res.ec != std::errc()) throw TensorError("checkpoint block '" + name + "' has a bad number");
        p.value(i, j) = v;
        c = res.ptr;
      }
    }
    p.touch();
  }
  if (next != params.size()) {
    throw TensorError("checkpoint has " + std::to_string(next) + " blocks, model needs " + std::to_string(params.size()));
  }
}

}  // namespace drivelab
