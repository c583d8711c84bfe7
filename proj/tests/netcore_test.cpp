#include <gtest/gtest.h>

#include <cmath>
#include <sstream>

#include "deepsdf/netcore/adam.hpp"
#include "deepsdf/netcore/feedforward.hpp"
#include "deepsdf/netcore/lstm.hpp"
#include "deepsdf/netcore/params.hpp"
#include "support.hpp"

using namespace deepsdf;
using namespace deepsdf::netcore;
using deepsdf::testing::finite_difference_check;
using deepsdf::testing::random_matrix;

namespace {

Vector vec(std::initializer_list<double> xs) {
  Vector v(static_cast<Eigen::Index>(xs.size()));
  Eigen::Index i = 0;
  for (double x : xs) v[i++] = x;
  return v;
}

}  // namespace

TEST(Feedforward, ReluZeroesNegativeInputs) {
  Feedforward net({3, {3}, 1, 1.0});
  NetworkParams p = net.zero_params();
  p.matrix("l0.W") = RowMatrix::Identity(3, 3);
  p.matrix("l1.W").setOnes();
  FeedforwardTape tape;
  Matrix x(1, 3);
  x << -1.0, 0.0, 2.0;
  Matrix y = net.forward(p, x, Mode::eval, nullptr, &tape);
  EXPECT_DOUBLE_EQ(tape.act[0](0, 0), 0.0);
  EXPECT_DOUBLE_EQ(tape.act[0](0, 1), 0.0);
  EXPECT_DOUBLE_EQ(tape.act[0](0, 2), 2.0);
  EXPECT_DOUBLE_EQ(y(0, 0), 2.0);
}

TEST(Feedforward, AffineMapWithoutHiddenLayers) {
  Feedforward net({2, {}, 1, 1.0});
  NetworkParams p = net.zero_params();
  p.matrix("l0.W") << 2.0, 3.0;
  p.matrix("l0.b")(0, 0) = 1.0;
  EXPECT_DOUBLE_EQ(net.forward_one(p, vec({1.0, 1.0}))[0], 6.0);
}

TEST(Feedforward, ZeroNetworkOutputsZero) {
  Feedforward net({4, {8, 8}, 3, 1.0});
  Matrix x = random_matrix(10, 4, 3);
  EXPECT_TRUE(net.forward(net.zero_params(), x).isZero(0.0));
}

TEST(Feedforward, DimensionMismatchNamesLayer) {
  Feedforward net({3, {2}, 1, 1.0});
  try {
    net.forward(net.zero_params(), Matrix::Zero(1, 2));
    FAIL() << "expected a dimension error";
  } catch (const DimensionError& e) {
    EXPECT_NE(std::string(e.what()).find("layer 0"), std::string::npos);
  }
}

TEST(Feedforward, AffineGradientWrtInput) {
  Feedforward net({2, {}, 1, 1.0});
  NetworkParams p = net.zero_params();
  p.matrix("l0.W") << 2.0, 3.0;
  FeedforwardTape tape;
  net.forward(p, Matrix::Ones(1, 2), Mode::eval, nullptr, &tape);
  Vector grad = Vector::Zero(static_cast<Eigen::Index>(p.size()));
  Matrix dx = net.backward(p, tape, Matrix::Ones(1, 1), grad);
  EXPECT_DOUBLE_EQ(dx(0, 0), 2.0);
  EXPECT_DOUBLE_EQ(dx(0, 1), 3.0);
}

TEST(Feedforward, ReluSubgradientAtZeroIsZero) {
  Feedforward net({1, {1}, 1, 1.0});
  NetworkParams p = net.zero_params();
  p.matrix("l0.W")(0, 0) = 1.0;
  p.matrix("l1.W")(0, 0) = 1.0;
  FeedforwardTape tape;
  net.forward(p, Matrix::Zero(1, 1), Mode::eval, nullptr, &tape);
  Vector grad = Vector::Zero(static_cast<Eigen::Index>(p.size()));
  Matrix dx = net.backward(p, tape, Matrix::Ones(1, 1), grad);
  EXPECT_EQ(dx(0, 0), 0.0);
}

TEST(Feedforward, InitIsDeterministicPerSeed) {
  Feedforward net({5, {7}, 2, 1.0});
  EXPECT_EQ(net.init_params(9).values(), net.init_params(9).values());
  EXPECT_NE(net.init_params(9).values(), net.init_params(10).values());
}

TEST(Feedforward, InitWeightsHaveZeroMean) {
  Feedforward net({100, {100}, 1, 1.0});
  auto w = net.init_params(4).matrix("l0.W");
  const double mean = w.mean();
  const double se = (1.0 / std::sqrt(100.0)) / std::sqrt(static_cast<double>(w.size()));
  EXPECT_LT(std::abs(mean), 5.0 * se);
}

TEST(Feedforward, EvalModeIsBitIdentical) {
  Feedforward net({3, {16, 16}, 2, 0.9});
  NetworkParams p = net.init_params(1);
  Matrix x = random_matrix(20, 3, 2);
  EXPECT_EQ(net.forward(p, x, Mode::eval), net.forward(p, x, Mode::eval));
}

TEST(Feedforward, DropoutPreservesExpectation) {
  const double keep = 0.95;
  Feedforward net({1, {3}, 1, keep});
  NetworkParams p = net.zero_params();
  p.matrix("l0.W") << 1.0, 2.0, 0.5;
  p.matrix("l0.b") << 0.1, 0.2, 0.3;
  const Eigen::Index n = 20000;
  Matrix x = Matrix::Ones(n, 1);
  Rng rng(5);
  FeedforwardTape tape;
  net.forward(p, x, Mode::train, &rng, &tape);
  const Eigen::RowVectorXd mean = tape.act[0].colwise().mean();
  const double expected[] = {1.1, 2.2, 0.8};
  for (int j = 0; j < 3; ++j) EXPECT_NEAR(mean[j] / expected[j], 1.0, 0.01) << "unit " << j;
}

TEST(Feedforward, TrainModeWithoutRandomSourceIsRejected) {
  Feedforward net({1, {2}, 1, 0.5});
  EXPECT_THROW(net.forward(net.zero_params(), Matrix::Ones(1, 1), Mode::train), UsageError);
}

// Finite-difference oracle on a random read-out of the outputs, dropout active
// with a fixed mask stream so both sides see the same network.
TEST(Feedforward, ParameterAndInputGradientsMatchFiniteDifferences) {
  Feedforward net({5, {16, 8}, 3, 0.9});
  NetworkParams p = net.init_params(21);
  p.values() += 0.1 * random_matrix(static_cast<Eigen::Index>(p.size()), 1, 22).col(0);
  Matrix x = random_matrix(12, 5, 23);
  const Matrix readout = random_matrix(12, 3, 24);
  auto loss = [&] {
    Rng rng(99);
    return (net.forward(p, x, Mode::train, &rng).array() * readout.array()).sum();
  };
  Rng rng(99);
  FeedforwardTape tape;
  net.forward(p, x, Mode::train, &rng, &tape);
  Vector grad = Vector::Zero(static_cast<Eigen::Index>(p.size()));
  Matrix dx = net.backward(p, tape, readout, grad);

  auto check = finite_difference_check(p.values(), grad, loss, 200);
  EXPECT_GE(check.checked, 100u);
  EXPECT_LT(check.worst, 1e-4) << check.where;

  Vector xv = Eigen::Map<Vector>(x.data(), x.size());
  Vector dxv = Eigen::Map<Vector>(dx.data(), dx.size());
  auto input_loss = [&] {
    Matrix xi = Eigen::Map<Matrix>(xv.data(), x.rows(), x.cols());
    Rng r(99);
    return (net.forward(p, xi, Mode::train, &r).array() * readout.array()).sum();
  };
  auto ci = finite_difference_check(xv, dxv, input_loss, 60);
  EXPECT_LT(ci.worst, 1e-4) << ci.where;
}

TEST(Lstm, ZeroParametersGiveHalfGates) {
  Lstm lstm({2, 1});
  auto [h, c] = lstm.step(lstm.zero_params(), Vector::Zero(2), Vector::Zero(1), Vector::Zero(1));
  EXPECT_DOUBLE_EQ(c[0], 0.0);
  EXPECT_DOUBLE_EQ(h[0], 0.0);
  auto [h1, c1] = lstm.step(lstm.zero_params(), Vector::Zero(2), Vector::Zero(1), Vector::Ones(1));
  EXPECT_DOUBLE_EQ(c1[0], 0.5);
  EXPECT_NEAR(h1[0], 0.23105, 1e-5);
  EXPECT_DOUBLE_EQ(h1[0], 0.5 * std::tanh(0.5));
}

TEST(Lstm, ZeroParametersEncodeToZero) {
  Lstm lstm({3, 4});
  EXPECT_TRUE(lstm.encode(lstm.zero_params(), random_matrix(10, 3, 1)).isZero(0.0));
}

// Scalar cell evaluated directly from the gate equations.
TEST(Lstm, StepMatchesHandEvaluation) {
  Lstm lstm({1, 1});
  NetworkParams p = lstm.zero_params();
  const double wx[4] = {0.5, -0.3, 0.8, 0.2};   // candidate, input, forget, output
  const double wh[4] = {0.1, 0.4, -0.6, 0.7};
  const double b[4] = {0.05, -0.1, 0.3, 0.0};
  for (int k = 0; k < 4; ++k) {
    p.matrix("Wx")(k, 0) = wx[k];
    p.matrix("Wh")(k, 0) = wh[k];
    p.matrix("b")(0, k) = b[k];
  }
  const double x = 1.3, hp = -0.4, cp = 0.9;
  auto sig = [](double z) { return 1.0 / (1.0 + std::exp(-z)); };
  const double cand = std::tanh(wx[0] * x + wh[0] * hp + b[0]);
  const double in = sig(wx[1] * x + wh[1] * hp + b[1]);
  const double fg = sig(wx[2] * x + wh[2] * hp + b[2]);
  const double out = sig(wx[3] * x + wh[3] * hp + b[3]);
  const double c = fg * cp + in * cand;
  auto [h1, c1] = lstm.step(p, vec({x}), vec({hp}), vec({cp}));
  EXPECT_NEAR(c1[0], c, 1e-15);
  EXPECT_NEAR(h1[0], out * std::tanh(c), 1e-15);
}

TEST(Lstm, EncodeIsCausal) {
  Lstm lstm({2, 3});
  NetworkParams p = lstm.init_params(3);
  Matrix xs = random_matrix(20, 2, 4);
  Matrix a = lstm.encode(p, xs);
  xs.bottomRows(8) = random_matrix(8, 2, 5);
  Matrix b = lstm.encode(p, xs);
  EXPECT_EQ(a.topRows(12), b.topRows(12));
  EXPECT_NE(a.bottomRows(8), b.bottomRows(8));
}

TEST(Lstm, BackpropThroughTimeMatchesFiniteDifferences) {
  Lstm lstm({3, 4});
  NetworkParams p = lstm.init_params(7);
  p.values() += 0.2 * random_matrix(static_cast<Eigen::Index>(p.size()), 1, 8).col(0);
  Matrix xs = random_matrix(15, 3, 9);
  const Matrix readout = random_matrix(15, 4, 10);
  auto loss = [&] { return (lstm.encode(p, xs).array() * readout.array()).sum(); };
  LstmTape tape;
  lstm.encode(p, xs, &tape);
  Vector grad = Vector::Zero(static_cast<Eigen::Index>(p.size()));
  Matrix dx = lstm.backward(p, tape, readout, grad);
  auto check = finite_difference_check(p.values(), grad, loss, 200);
  EXPECT_GE(check.checked, 100u);
  EXPECT_LT(check.worst, 1e-4) << check.where;

  Vector xv = Eigen::Map<Vector>(xs.data(), xs.size());
  Vector dxv = Eigen::Map<Vector>(dx.data(), dx.size());
  auto input_loss = [&] {
    Matrix xi = Eigen::Map<Matrix>(xv.data(), xs.rows(), xs.cols());
    return (lstm.encode(p, xi).array() * readout.array()).sum();
  };
  auto ci = finite_difference_check(xv, dxv, input_loss, 45);
  EXPECT_LT(ci.worst, 1e-4) << ci.where;
}

TEST(Lstm, InputJacobianMatchesFiniteDifferenceWithStateHeld) {
  Lstm lstm({2, 3});
  NetworkParams p = lstm.init_params(11);
  Matrix xs = random_matrix(6, 2, 12);
  LstmTape tape;
  Matrix states = lstm.encode(p, xs, &tape);
  const Eigen::Index t = 4;
  Matrix jac = lstm.input_jacobian(p, tape, t);
  const double eps = 1e-6;
  for (Eigen::Index j = 0; j < 2; ++j) {
    Vector x = xs.row(t).transpose();
    Vector hp = states.row(t - 1).transpose(), cp = tape.cell.row(t - 1).transpose();
    x[j] += eps;
    Vector up = lstm.step(p, x, hp, cp).first;
    x[j] -= 2 * eps;
    Vector down = lstm.step(p, x, hp, cp).first;
    EXPECT_LT(((up - down) / (2 * eps) - jac.col(j)).cwiseAbs().maxCoeff(), 1e-8);
  }
}

TEST(Adam, ZeroGradientLeavesParametersUnchanged) {
  NetworkParams p;
  p.add("w", 1, 3);
  p.values() << 1.0, -2.0, 3.0;
  const Vector before = p.values();
  AdamState st(3, 1e-3);
  adam_update(st, p, Vector::Zero(3));
  EXPECT_EQ(p.values(), before);
  EXPECT_EQ(st.step, 1u);
}

TEST(Adam, FirstStepMovesByLearningRate) {
  NetworkParams p;
  p.add("w", 1, 1);
  AdamState st(1, 1e-3);
  adam_update(st, p, Vector::Ones(1));
  // m_hat = 1, v_hat = 1 after bias correction
  EXPECT_NEAR(p.values()[0], -1e-3 / (1.0 + 1e-8), 1e-18);
}

TEST(Adam, NonFiniteGradientNamesCoordinate) {
  NetworkParams p;
  p.add("l0.W", 2, 2);
  AdamState st(4, 1e-3);
  Vector g = Vector::Zero(4);
  g[3] = std::nan("");
  try {
    adam_update(st, p, g);
    FAIL() << "expected a numerical error";
  } catch (const NumericalError& e) {
    EXPECT_NE(std::string(e.what()).find("l0.W[1,1]"), std::string::npos) << e.what();
  }
  EXPECT_EQ(st.step, 0u);
}

TEST(Params, CheckpointRoundTripIsExact) {
  Feedforward net({4, {9}, 2, 1.0});
  NetworkParams p = net.init_params(31);
  p.values()[0] = 1.0 / 3.0;
  p.values()[1] = -1e-300;
  std::stringstream s;
  write_params(s, p);
  NetworkParams q = read_params(s);
  EXPECT_TRUE(q.same_layout(p));
  EXPECT_EQ(q.values(), p.values());
}

TEST(Params, CheckpointRejectsForeignFile) {
  std::stringstream s("not-a-checkpoint 1\n");
  EXPECT_THROW(read_params(s), DataError);
}

TEST(Params, DuplicateBlockIsRejected) {
  NetworkParams p;
  p.add("w", 1, 1);
  EXPECT_THROW(p.add("w", 2, 2), DataError);
}
