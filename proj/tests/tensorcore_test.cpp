#include "drivelab/tensorcore.hpp"

#include <cmath>

#include "gtest/gtest.h"

namespace drivelab {
namespace {

Matrix random_matrix(int r, int c, std::mt19937_64& rng, double scale = 1.0) {
  std::normal_distribution<double> n(0.0, scale);
  Matrix m(r, c);
  for (int i = 0; i < r; ++i)
    for (int j = 0; j < c; ++j) m(i, j) = n(rng);
  return m;
}

// Scalar loss sum(y .* weights) gives a dense, non-trivial output gradient.
double weighted_sum(const Matrix& y, const Matrix& w) { return y.cwiseProduct(w).sum(); }

TEST(TensorCoreTest, IdentityLayerPassesInputThrough) {
  DenseLayer l("id", Matrix::Identity(4, 4), Vector::Zero(4), Activation::Identity);
  Matrix x(4, 2);
  x << 1, -2, 3, 4, -5, 6, 7, -8;
  EXPECT_EQ(l.forward(x), x);
}

TEST(TensorCoreTest, SigmoidAtZeroIsHalf) {
  std::mt19937_64 rng(1);
  DenseLayer l("s", random_matrix(3, 5, rng), Vector::Zero(3), Activation::Sigmoid);
  Matrix y = l.forward(Matrix::Zero(5, 1));
  for (int i = 0; i < 3; ++i) EXPECT_EQ(y(i, 0), 0.5);
}

// Direct elementwise reimplementation of a two-layer tanh/relu net.
TEST(TensorCoreTest, TwoLayerNetMatchesLoopOracle) {
  for (std::uint64_t seed = 0; seed < 10; ++seed) {
    std::mt19937_64 rng(seed);
    DenseStack net({DenseLayer("a", 6, 5, Activation::Tanh, rng), DenseLayer("b", 5, 3, Activation::Relu, rng)});
    Matrix b0 = random_matrix(5, 1, rng), b1 = random_matrix(3, 1, rng);
    auto ps = net.params();
    ps[1]->value = b0;
    ps[3]->value = b1;
    Matrix x = random_matrix(6, 4, rng);
    Matrix y = net.forward(x);
    const Matrix& w0 = ps[0]->value;
    const Matrix& w1 = ps[2]->value;
    for (int col = 0; col < 4; ++col) {
      double h[5];
      for (int i = 0; i < 5; ++i) {
        double s = b0(i, 0);
        for (int j = 0; j < 6; ++j) s += w0(i, j) * x(j, col);
        h[i] = std::tanh(s);
      }
      for (int i = 0; i < 3; ++i) {
        double s = b1(i, 0);
        for (int j = 0; j < 5; ++j) s += w1(i, j) * h[j];
        EXPECT_NEAR(y(i, col), std::max(0.0, s), 1e-12);
      }
    }
  }
}

TEST(TensorCoreTest, ShapeMismatchThrows) {
  std::mt19937_64 rng(1);
  DenseLayer l("l", 4, 2, Activation::Tanh, rng);
  EXPECT_THROW(l.forward(Matrix::Zero(3, 1)), TensorError);
  GruEncoder g("g", 8, 20, rng);
  EXPECT_THROW(g.forward({Matrix::Zero(7, 1)}), TensorError);
  EXPECT_THROW(g.forward({}), TensorError);
}

TEST(TensorCoreTest, ZeroOutputGradientGivesZeroGradients) {
  std::mt19937_64 rng(3);
  DenseStack net({DenseLayer("a", 4, 6, Activation::Sigmoid, rng), DenseLayer("b", 6, 2, Activation::Tanh, rng)});
  DenseStack::Tape tape;
  Matrix x = random_matrix(4, 3, rng);
  net.forward(x, &tape);
  zero_grads(net.params());
  Matrix dx = net.backward(tape, Matrix::Zero(2, 3));
  EXPECT_EQ(dx.cwiseAbs().maxCoeff(), 0.0);
  for (auto* p : net.params()) EXPECT_EQ(p->grad.cwiseAbs().maxCoeff(), 0.0);
}

TEST(TensorCoreTest, StaleTapeIsRejected) {
  std::mt19937_64 rng(4);
  DenseLayer l("l", 3, 2, Activation::Tanh, rng);
  DenseLayer::Tape tape;
  l.forward(Matrix::Ones(3, 1), &tape);
  zero_grads(l.params());
  l.params()[0]->grad.setOnes();
  AdamState st;
  adam_step(l.params(), st);
  EXPECT_THROW(l.backward(tape, Matrix::Ones(2, 1)), TensorError);

  GruEncoder g("g", 2, 3, rng);
  GruEncoder::Tape gt;
  g.forward({Matrix::Ones(2, 1)}, &gt);
  g.params()[0]->touch();
  EXPECT_THROW(g.backward(gt, Matrix::Ones(3, 1)), TensorError);
}

TEST(TensorCoreTest, DenseGradientsMatchFiniteDifferences) {
  for (Activation act : {Activation::Tanh, Activation::Relu, Activation::Sigmoid, Activation::Identity}) {
    for (std::uint64_t seed = 0; seed < 10; ++seed) {
      std::mt19937_64 rng(seed);
      DenseStack net({DenseLayer("a", 5, 7, act, rng), DenseLayer("b", 7, 3, act, rng)});
      for (auto* p : net.params()) p->value = random_matrix(p->value.rows(), p->value.cols(), rng, 0.7);
      Matrix x = random_matrix(5, 4, rng);
      Matrix w = random_matrix(3, 4, rng);
      Matrix dxAnalytic;
      auto loss = [&] { return weighted_sum(net.forward(x), w); };
      auto analytic = [&] {
        zero_grads(net.params());
        DenseStack::Tape tape;
        net.forward(x, &tape);
        dxAnalytic = net.backward(tape, w);
      };
      GradCheck gc = check_gradients(net.params(), loss, analytic);
      EXPECT_LT(gc.maxRelError, 1e-4) << to_string(act) << " seed " << seed << " worst " << gc.worstParam;

      // input gradient
      for (int i = 0; i < x.size(); ++i) {
        double orig = x.data()[i];
        x.data()[i] = orig + 1e-5;
        double up = loss();
        x.data()[i] = orig - 1e-5;
        double down = loss();
        x.data()[i] = orig;
        double num = (up - down) / 2e-5;
        double a = dxAnalytic.data()[i];
        EXPECT_LT(std::abs(a - num) / std::max({std::abs(a), std::abs(num), 1e-6}), 1e-4);
      }
    }
  }
}

TEST(TensorCoreTest, RecurrentGradientsMatchFiniteDifferences) {
  for (std::uint64_t seed = 0; seed < 10; ++seed) {
    std::mt19937_64 rng(100 + seed);
    GruEncoder g("gru", 8, 20, rng);
    std::vector<Matrix> seq;
    for (int t = 0; t < 20; ++t) seq.push_back(random_matrix(8, 2, rng));
    Matrix w = random_matrix(20, 2, rng);
    std::vector<Matrix> dseq;
    auto loss = [&] { return weighted_sum(g.forward(seq), w); };
    auto analytic = [&] {
      zero_grads(g.params());
      GruEncoder::Tape tape;
      g.forward(seq, &tape);
      dseq = g.backward(tape, w);
    };
    GradCheck gc = check_gradients(g.params(), loss, analytic);
    EXPECT_LT(gc.maxRelError, 1e-4) << "seed " << seed << " worst " << gc.worstParam;
    EXPECT_EQ(gc.checked, 3u * (20 * 8 + 20 * 20 + 20));

    for (int t : {0, 9, 19}) {
      for (int i = 0; i < seq[t].size(); ++i) {
        double orig = seq[t].data()[i];
        seq[t].data()[i] = orig + 1e-5;
        double up = loss();
        seq[t].data()[i] = orig - 1e-5;
        double down = loss();
        seq[t].data()[i] = orig;
        double num = (up - down) / 2e-5;
        double a = dseq[t].data()[i];
        EXPECT_LT(std::abs(a - num) / std::max({std::abs(a), std::abs(num), 1e-6}), 1e-4);
      }
    }
  }
}

TEST(TensorCoreTest, SmoothL1Values) {
  Matrix p(1, 1), t(1, 1);
  p << 2.0;
  t << 2.0;
  auto z = smooth_l1(p, t);
  EXPECT_EQ(z.loss, 0.0);
  EXPECT_EQ(z.grad(0, 0), 0.0);
  p << 0.5;
  t << 0.0;
  EXPECT_DOUBLE_EQ(smooth_l1(p, t).loss, 0.125);
  p << 3.0;
  auto big = smooth_l1(p, t);
  EXPECT_DOUBLE_EQ(big.loss, 2.5);
  EXPECT_DOUBLE_EQ(big.grad(0, 0), 1.0);
  Matrix p2(1, 4), t2 = Matrix::Zero(1, 4);
  p2 << 0.5, -3.0, 1.0, 0.0;
  auto m = smooth_l1(p2, t2);
  EXPECT_DOUBLE_EQ(m.loss, (0.125 + 2.5 + 0.5 + 0.0) / 4.0);
  EXPECT_DOUBLE_EQ(m.grad(0, 1), -0.25);
  EXPECT_THROW(smooth_l1(p2, Matrix::Zero(1, 3)), TensorError);
}

TEST(TensorCoreTest, BinaryCrossEntropy) {
  EXPECT_NEAR(bce(0.5, 1).loss, std::log(2.0), 1e-15);
  EXPECT_NEAR(bce(0.5, 0).loss, std::log(2.0), 1e-15);
  EXPECT_NEAR(bce(1.0 - 1e-7, 1).loss, 1e-7, 1e-12);
  EXPECT_NEAR(bce(1.0, 1).loss, 1e-7, 1e-12);
  EXPECT_TRUE(std::isfinite(bce(0.0, 1).loss));
  for (double p = 0.05; p < 1.0; p += 0.05) {
    for (double label : {0.0, 1.0}) {
      double h = 1e-6;
      double num = (bce(p + h, label).loss - bce(p - h, label).loss) / (2 * h);
      EXPECT_NEAR(bce(p, label).grad, num, 1e-6 * std::max(1.0, std::abs(num)));
    }
  }
}

TEST(TensorCoreTest, AdamZeroGradientLeavesParams) {
  Param p("x", Matrix::Constant(2, 2, 3.0));
  AdamState st;
  adam_step({&p}, st);
  EXPECT_EQ(p.value, Matrix::Constant(2, 2, 3.0));
  EXPECT_EQ(st.step, 1u);
}

TEST(TensorCoreTest, AdamFirstStepByHand) {
  Param p("x", Matrix::Constant(1, 1, 0.0));
  p.grad(0, 0) = 1.0;
  AdamState st;
  adam_step({&p}, st);
  // m_hat = 1, v_hat = 1
  EXPECT_NEAR(p.value(0, 0), -1e-4 / (1.0 + 1e-8), 1e-18);
}

TEST(TensorCoreTest, AdamDescendsQuadratic) {
  Param p("x", Matrix::Constant(1, 1, 1.0));
  AdamState st;
  double prev = 1.0;
  for (int k = 0; k < 1000; ++k) {
    p.grad(0, 0) = 2.0 * p.value(0, 0);
    adam_step({&p}, st);
    double now = std::abs(p.value(0, 0));
    ASSERT_LT(now, prev) << "step " << k;
    prev = now;
  }
}

TEST(TensorCoreTest, AdamRejectsNonFiniteGradient) {
  Param a("enc.W", Matrix::Ones(2, 2));
  Param b("head.b", Matrix::Ones(1, 1));
  a.grad.setConstant(0.5);
  b.grad(0, 0) = std::nan("");
  AdamState st;
  try {
    adam_step({&a, &b}, st);
    FAIL();
  } catch (const TensorError& e) {
    EXPECT_NE(std::string(e.what()).find("head.b"), std::string::npos);
  }
  EXPECT_EQ(a.value, Matrix::Ones(2, 2));
  EXPECT_EQ(st.step, 0u);
}

TEST(TensorCoreTest, CheckpointRoundTripIsExact) {
  std::mt19937_64 rng(8);
  GruEncoder g("gru", 3, 4, rng);
  DenseLayer d("fc", 4, 2, Activation::Tanh, rng);
  ParamRefs ps = g.params();
  for (auto* p : d.params()) ps.push_back(p);
  for (auto* p : ps) p->value = random_matrix(p->value.rows(), p->value.cols(), rng, 1e3);
  std::string text = params_to_text(ps);

  std::mt19937_64 other(99);
  GruEncoder g2("gru", 3, 4, other);
  DenseLayer d2("fc", 4, 2, Activation::Tanh, other);
  ParamRefs ps2 = g2.params();
  for (auto* p : d2.params()) ps2.push_back(p);
  params_from_text(text, ps2);
  for (std::size_t i = 0; i < ps.size(); ++i) EXPECT_EQ(ps[i]->value, ps2[i]->value);
  EXPECT_EQ(params_to_text(ps2), text);

  DenseLayer wrong("fc", 4, 3, Activation::Tanh, other);
  ParamRefs ps3 = g2.params();
  for (auto* p : wrong.params()) ps3.push_back(p);
  EXPECT_THROW(params_from_text(text, ps3), TensorError);
}

TEST(TensorCoreTest, ForwardStaysFiniteOnExtremeInputs) {
  std::mt19937_64 rng(5);
  DenseStack net({DenseLayer("a", 4, 10, Activation::Tanh, rng), DenseLayer("b", 10, 1, Activation::Sigmoid, rng)});
  GruEncoder g("g", 4, 20, rng);
  std::uniform_real_distribution<double> mag(-8.0, 8.0);
  for (int k = 0; k < 200; ++k) {
    Matrix x = random_matrix(4, 3, rng, std::pow(10.0, mag(rng)));
    EXPECT_TRUE(net.forward(x).allFinite());
    EXPECT_TRUE(g.forward({x, x, x}).allFinite());
  }
}

TEST(TensorCoreTest, SameSeedSameInitialisation) {
  std::mt19937_64 a(42), b(42);
  GruEncoder ga("g", 8, 20, a), gb("g", 8, 20, b);
  auto pa = ga.params(), pb = gb.params();
  for (std::size_t i = 0; i < pa.size(); ++i) EXPECT_EQ(pa[i]->value, pb[i]->value);
}

}  // namespace
}  // namespace drivelab
