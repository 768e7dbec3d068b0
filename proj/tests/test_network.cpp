#include "emasketch/network.hpp"
#include "emasketch/random.hpp"
#include "gradcheck.hpp"
#include "oracles.hpp"

#include <gtest/gtest.h>

#include <cmath>

using namespace emasketch;

namespace {

MLPConfig make_cfg(std::vector<Index> dims, Activation act = Activation::tanh,
                   OutputKind out = OutputKind::softmax_xent) {
  MLPConfig c;
  c.layer_dims = std::move(dims);
  c.activation = act;
  c.output = out;
  return c;
}

std::vector<Index> labels_for(Index n, Index classes, std::uint64_t seed) {
  GaussianStream g(seed);
  std::vector<Index> y;
  for (Index i = 0; i < n; ++i) y.push_back(static_cast<Index>(g.uniform() * classes));
  return y;
}

}  // namespace

TEST(MLPConfig, Validation) {
  auto c = make_cfg({4, 8, 8, 3});
  EXPECT_NO_THROW(c.validate());
  c.sketched_layers = {2};
  EXPECT_THROW(c.validate(), ConfigError);  // exact mode
  c.grad_mode = GradMode::sketched;
  EXPECT_NO_THROW(c.validate());
  c.sketched_layers = {1};  // 4 -> 8 is not width preserving
  EXPECT_THROW(c.validate(), ConfigError);
  c.grad_mode = GradMode::monitor_only;
  EXPECT_NO_THROW(c.validate());
  c.sketched_layers = {3};  // output layer
  EXPECT_THROW(c.validate(), ConfigError);
  EXPECT_EQ(MLPConfig::uniform_hidden_layers({784, 128, 128, 128, 10}),
            (std::vector<Index>{2, 3}));
  EXPECT_EQ(MLPConfig::all_hidden_layers({784, 128, 128, 128, 10}),
            (std::vector<Index>{1, 2, 3}));
}

TEST(InitParams, DeterministicAndBounded) {
  const auto c = make_cfg({20, 30, 10}, Activation::relu);
  const auto a = init_params(c, 5), b = init_params(c, 5);
  ASSERT_EQ(a.size(), 2u);
  EXPECT_TRUE(a == b);
  EXPECT_LE(max_abs(a[0].W), std::sqrt(6.0 / 20.0));
  EXPECT_GT(max_abs(a[0].W), 0.9 * std::sqrt(6.0 / 20.0));
  const auto x = init_params(make_cfg({20, 30, 10}), 5);
  EXPECT_LE(max_abs(x[0].W), std::sqrt(6.0 / 50.0));
  const auto biased = init_params(c, 5, {InitScheme::kaiming_uniform, 1.0, -3.0});
  EXPECT_TRUE((biased[0].b.array() == -3.0).all());
  EXPECT_TRUE(biased[1].b.isZero(0.0));
}

TEST(Forward, ZeroInputZeroBiasTanh) {
  const auto c = make_cfg({5, 7, 7, 3});
  const auto p = init_params(c, 1);
  const auto r = forward(p, c, Matrix::Zero(4, 5));
  EXPECT_TRUE(r.logits.isZero(0.0));
  for (const auto& a : r.trace.activations) EXPECT_TRUE(a->isZero(0.0));
}

TEST(Forward, SingleLinearLayerIdentity) {
  const auto c = make_cfg({4, 4});
  Params p(1);
  p[0].W = Matrix::Identity(4, 4);
  p[0].b = Vector::Zero(4);
  const Matrix x = GaussianStream(3).normal_matrix(6, 4);
  EXPECT_TRUE(forward(p, c, x).logits == x);
}

TEST(Forward, MonitorOnlyLogitsBitIdentical) {
  auto c = make_cfg({6, 8, 8, 8, 3}, Activation::relu);
  const auto p = init_params(c, 2);
  auto m = c;
  m.grad_mode = GradMode::monitor_only;
  m.sketched_layers = MLPConfig::all_hidden_layers(m.layer_dims);
  auto bank = SketchBank::create(SketchConfig::for_rank(2, 0.9, 16), m, 9);
  GaussianStream g(4);
  for (int i = 0; i < 10; ++i) {
    const Matrix x = g.normal_matrix(16, 6);
    const auto exact = forward(p, c, x);
    const auto mon = forward(p, m, x, &bank);
    EXPECT_TRUE(exact.logits == mon.logits);
    for (Index l = 0; l < 4; ++l) EXPECT_TRUE(mon.trace.has_activation(l));
  }
  EXPECT_EQ(bank.at(1).n_updates, 10u);
}

TEST(Forward, RejectsWrongInputWidth) {
  const auto c = make_cfg({5, 3});
  EXPECT_THROW(forward(init_params(c, 1), c, Matrix::Zero(2, 4)), ShapeError);
}

TEST(BackwardExact, FiniteDifferences232) {
  const auto c = make_cfg({2, 3, 2});
  const auto p = init_params(c, 11);
  const Matrix x = GaussianStream(12).normal_matrix(4, 2);
  const auto rep = gradcheck::check(p, c, x, Targets::classes(labels_for(4, 2, 13)));
  EXPECT_GT(rep.checked, 10);
  EXPECT_LE(rep.max_rel_error, 1e-5);
}

TEST(BackwardExact, FiniteDifferencesDeeper) {
  const auto c = make_cfg({10, 16, 16, 10});
  const auto p = init_params(c, 21);
  const Matrix x = GaussianStream(22).normal_matrix(8, 10);
  const auto rep = gradcheck::check(p, c, x, Targets::classes(labels_for(8, 10, 23)));
  EXPECT_GT(rep.checked, 400);
  EXPECT_LE(rep.max_rel_error, 1e-5);
}

TEST(BackwardExact, FiniteDifferencesMseRelu) {
  const auto c = make_cfg({5, 7, 7, 3}, Activation::relu, OutputKind::mse);
  const auto p = init_params(c, 31, {InitScheme::activation_default, 1.0, 0.1});
  GaussianStream g(32);
  const Matrix x = g.normal_matrix(6, 5);
  const Matrix y = g.normal_matrix(6, 3);
  const auto rep = gradcheck::check(p, c, x, Targets::regression(y));
  EXPECT_LE(rep.max_rel_error, 1e-5);
}

TEST(BackwardExact, ZeroDeltaGivesZeroGradients) {
  const auto c = make_cfg({3, 4, 2}, Activation::tanh, OutputKind::mse);
  const auto p = init_params(c, 41);
  const Matrix x = GaussianStream(42).normal_matrix(5, 3);
  const auto fwd = forward(p, c, x);
  const auto lr = loss_and_delta(fwd.logits, Targets::regression(fwd.logits), OutputKind::mse);
  EXPECT_EQ(lr.loss, 0.0);
  const auto g = backward_exact(fwd.trace, p, c, lr.delta_out);
  for (std::size_t l = 0; l < g.dW.size(); ++l) {
    EXPECT_TRUE(g.dW[l].isZero(0.0));
    EXPECT_TRUE(g.db[l].isZero(0.0));
  }
}

TEST(BackwardExact, LinearMseClosedForm) {
  const auto c = make_cfg({4, 3}, Activation::tanh, OutputKind::mse);
  const auto p = init_params(c, 51);
  GaussianStream g(52);
  const Matrix x = g.normal_matrix(7, 4);
  const Matrix y = g.normal_matrix(7, 3);
  const auto fwd = forward(p, c, x);
  const auto lr = loss_and_delta(fwd.logits, Targets::regression(y), OutputKind::mse);
  const auto grads = backward_exact(fwd.trace, p, c, lr.delta_out);
  const Matrix yhat = oracle::matmul(x, oracle::transpose(p[0].W));
  const Matrix expected = (2.0 / 7.0) * oracle::matmul(oracle::transpose(yhat - y), x);
  EXPECT_LE(max_abs(grads.dW[0] - expected), 1e-10);
}

TEST(BackwardSketched, NoSketchedLayersEqualsExact) {
  auto c = make_cfg({6, 8, 8, 3});
  const auto p = init_params(c, 61);
  auto s = c;
  s.grad_mode = GradMode::sketched;
  auto bank = SketchBank::create(SketchConfig::for_rank(1, 0.9, 5), s, 62);
  const Matrix x = GaussianStream(63).normal_matrix(5, 6);
  const Targets t = Targets::classes(labels_for(5, 3, 64));
  const auto fe = forward(p, c, x);
  const auto fs = forward(p, s, x, &bank);
  const auto de = loss_and_delta(fe.logits, t, c.output).delta_out;
  const auto ge = backward_exact(fe.trace, p, c, de);
  const auto gs = backward_sketched(fs.trace, p, s, de, bank);
  for (std::size_t l = 0; l < ge.dW.size(); ++l) {
    EXPECT_TRUE(ge.dW[l] == gs.dW[l]);
    EXPECT_TRUE(ge.db[l] == gs.db[l]);
  }
}

TEST(BackwardSketched, TraceDropsActivationsAfterWarmup) {
  MLPConfig c = make_cfg({6, 8, 8, 8, 3});
  c.grad_mode = GradMode::sketched;
  c.sketched_layers = {2, 3};
  const auto p = init_params(c, 71);
  auto cfg = SketchConfig::for_rank(1, 0.9, 10);
  cfg.warmup_iters = 3;
  auto bank = SketchBank::create(cfg, c, 72);
  GaussianStream g(73);
  for (int it = 1; it <= 6; ++it) {
    const auto fwd = forward(p, c, g.normal_matrix(10, 6), &bank);
    const bool warm = it > 3;
    EXPECT_TRUE(fwd.trace.has_activation(0));
    EXPECT_TRUE(fwd.trace.has_activation(1));
    EXPECT_EQ(fwd.trace.has_activation(2), !warm) << "iteration " << it;
    EXPECT_EQ(fwd.trace.has_activation(3), !warm) << "iteration " << it;
  }
}

TEST(BackwardSketched, DeltaPropagationUnchanged) {
  MLPConfig c = make_cfg({6, 8, 8, 8, 3});
  const auto p = init_params(c, 81);
  MLPConfig s = c;
  s.grad_mode = GradMode::sketched;
  s.sketched_layers = {2, 3};
  auto cfg = SketchConfig::for_rank(2, 0.9, 10);
  cfg.warmup_iters = 1;
  auto bank = SketchBank::create(cfg, s, 82);
  GaussianStream g(83);
  for (int it = 0; it < 5; ++it) {
    const Matrix x = g.normal_matrix(10, 6);
    const Targets t = Targets::classes(labels_for(10, 3, 84 + it));
    const auto fe = forward(p, c, x);
    const auto fs = forward(p, s, x, &bank);
    const auto de = loss_and_delta(fe.logits, t, c.output).delta_out;
    const auto ge = backward_exact(fe.trace, p, c, de);
    const auto gs = backward_sketched(fs.trace, p, s, de, bank);
    for (std::size_t l = 0; l < ge.grad_input.size(); ++l) {
      EXPECT_LE(max_abs(ge.grad_input[l] - gs.grad_input[l]), 1e-12);
      EXPECT_LE(max_abs(ge.delta[l] - gs.delta[l]), 1e-12);
    }
    // Layers fed by unsketched activations keep exact weight gradients.
    EXPECT_LE(max_abs(ge.dW[0] - gs.dW[0]), 1e-12);
    EXPECT_LE(max_abs(ge.dW[1] - gs.dW[1]), 1e-12);
  }
}

// Identical batches whose rows all coincide: every activation is rank one.
// The dense oracle keeps its own sketches and reconstructs with plain matrix
// algebra. Its error against the exact gradient is frozen below.
TEST(BackwardSketched, RankOneActivationsAfterTwoHundredBatches) {
  constexpr double kOracleRelativeError = 1.0016355452;
  constexpr double kOracleCosine = 0.0179363227;
  constexpr double kMetricTol = 1e-6;

  MLPConfig c = make_cfg({6, 8, 8, 3});
  const auto p = init_params(c, 91);
  MLPConfig s = c;
  s.grad_mode = GradMode::sketched;
  s.sketched_layers = {2};
  const double beta = 0.9;
  auto bank = SketchBank::create(SketchConfig::for_rank(1, beta, 12), s, 92);
  GaussianStream g(93);
  const Matrix row = g.normal_matrix(1, 6);
  const Matrix x = Matrix::Ones(12, 1) * row;
  const Targets t = Targets::classes(labels_for(12, 3, 94));
  const auto& pr = bank.proj;
  Matrix psi_diag = Matrix::Zero(pr.Phi.cols(), pr.Phi.cols());
  for (Index i = 0; i < psi_diag.rows(); ++i) psi_diag(i, i) = pr.psi(2)(i);
  Matrix xo = Matrix::Zero(8, pr.Upsilon.cols());
  Matrix yo = Matrix::Zero(8, pr.Omega.cols());
  Matrix zo = Matrix::Zero(8, pr.Phi.cols());
  GradientSet ge, gs;
  for (int it = 0; it < 200; ++it) {
    const auto fe = forward(p, c, x);
    const auto fs = forward(p, s, x, &bank);
    const auto de = loss_and_delta(fe.logits, t, c.output).delta_out;
    ge = backward_exact(fe.trace, p, c, de);
    gs = backward_sketched(fs.trace, p, s, de, bank);
    const Matrix a1t = oracle::transpose(*fe.trace.activations[1]);
    const Matrix a2t = oracle::transpose(*fe.trace.activations[2]);
    xo = beta * xo + (1 - beta) * oracle::matmul(a1t, pr.Upsilon);
    yo = beta * yo + (1 - beta) * oracle::matmul(a2t, pr.Omega);
    zo = beta * zo + (1 - beta) * oracle::matmul(oracle::matmul(a2t, pr.Phi), psi_diag);
  }
  const Matrix a_ref = oracle::naive_activation_reconstruction(xo, yo, zo, pr.Omega);
  const Matrix reference = oracle::matmul(oracle::transpose(ge.delta[2]), a_ref);
  const Matrix& exact = ge.dW[2];
  const Matrix& approx = gs.dW[2];
  EXPECT_LE(max_abs(approx - reference), 1e-9 * (1.0 + max_abs(reference)));

  const auto rel_of = [&](const Matrix& m) { return (m - exact).norm() / exact.norm(); };
  const auto cos_of = [&](const Matrix& m) {
    return (m.array() * exact.array()).sum() / (m.norm() * exact.norm());
  };
  std::printf("rank-one sketched gradient: oracle rel %.10f cos %.10f, library rel %.10f cos %.10f\n",
              rel_of(reference), cos_of(reference), rel_of(approx), cos_of(approx));
  RecordProperty("relative_error", std::to_string(rel_of(approx)));
  RecordProperty("cosine", std::to_string(cos_of(approx)));
  EXPECT_NEAR(rel_of(reference), kOracleRelativeError, kMetricTol);
  EXPECT_NEAR(cos_of(reference), kOracleCosine, kMetricTol);
  EXPECT_NEAR(rel_of(approx), kOracleRelativeError, kMetricTol);
  EXPECT_NEAR(cos_of(approx), kOracleCosine, kMetricTol);
}

TEST(Loss, UniformLogitsGiveLogC) {
  const auto r = loss_and_delta(Matrix::Zero(5, 7), Targets::classes({0, 1, 2, 3, 6}),
                                OutputKind::softmax_xent);
  EXPECT_NEAR(r.loss, std::log(7.0), 1e-14);
}

TEST(Loss, ConfidentCorrectPrediction) {
  Matrix logits = Matrix::Zero(3, 4);
  logits(0, 1) = logits(1, 0) = logits(2, 3) = 60.0;
  const auto r = loss_and_delta(logits, Targets::classes({1, 0, 3}), OutputKind::softmax_xent);
  EXPECT_LT(r.loss, 1e-20);
  EXPECT_LT(max_abs(r.delta_out), 1e-20);
}

TEST(Loss, DeltaMatchesFiniteDifferences) {
  const Matrix logits = GaussianStream(101).normal_matrix(4, 3);
  const Targets t = Targets::classes({2, 0, 1, 1});
  const auto r = loss_and_delta(logits, t, OutputKind::softmax_xent);
  for (Index i = 0; i < 4; ++i)
    for (Index j = 0; j < 3; ++j) {
      Matrix up = logits, down = logits;
      const double h = 1e-6;
      up(i, j) += h;
      down(i, j) -= h;
      const double fd = (loss_and_delta(up, t, OutputKind::softmax_xent).loss -
                         loss_and_delta(down, t, OutputKind::softmax_xent).loss) /
                        (2 * h);
      EXPECT_LE(std::abs(fd - r.delta_out(i, j)), 1e-6 * std::abs(r.delta_out(i, j)) + 1e-10);
    }
}

TEST(Loss, RejectsBadLabels) {
  EXPECT_THROW(loss_and_delta(Matrix::Zero(2, 3), Targets::classes({0, 3}),
                              OutputKind::softmax_xent),
               DataError);
  EXPECT_THROW(loss_and_delta(Matrix::Zero(2, 3), Targets::classes({0}), OutputKind::softmax_xent),
               ShapeError);
}

namespace {

Params scalar_params(double w) {
  Params p(1);
  p[0].W = Matrix::Constant(1, 1, w);
  p[0].b = Vector::Zero(1);
  return p;
}

GradientSet scalar_grad(double g) {
  GradientSet s;
  s.dW = {Matrix::Constant(1, 1, g)};
  s.db = {Vector::Zero(1)};
  return s;
}

}  // namespace

TEST(Adam, ZeroGradientLeavesParameters) {
  auto p = scalar_params(0.5);
  auto adam = AdamState::init(p, 1e-3);
  adam_step(p, scalar_grad(0.0), adam);
  EXPECT_EQ(p[0].W(0, 0), 0.5);
  EXPECT_EQ(adam.t, 1u);
}

TEST(Adam, ConstantGradientStepApproachesLearningRate) {
  const double lr = 1e-3, g = 0.37;
  auto p = scalar_params(0.0);
  auto adam = AdamState::init(p, lr);
  // Scalar re-derivation of the bias-corrected update.
  double m = 0.0, v = 0.0, w = 0.0;
  double last_step = 0.0;
  for (int t = 1; t <= 10000; ++t) {
    const double before = p[0].W(0, 0);
    adam_step(p, scalar_grad(g), adam);
    last_step = before - p[0].W(0, 0);
    m = 0.9 * m + 0.1 * g;
    v = 0.999 * v + 0.001 * g * g;
    const double mh = m / (1.0 - std::pow(0.9, t));
    const double vh = v / (1.0 - std::pow(0.999, t));
    w -= lr * mh / (std::sqrt(vh) + 1e-8);
  }
  EXPECT_NEAR(p[0].W(0, 0), w, 1e-9);
  EXPECT_NEAR(last_step, lr, 0.01 * lr);
}

TEST(Adam, IdenticalRunsIdenticalTrajectories) {
  const auto c = make_cfg({4, 6, 3});
  auto run = [&] {
    auto p = init_params(c, 111);
    auto adam = AdamState::init(p, 1e-2);
    GaussianStream g(112);
    for (int i = 0; i < 20; ++i) {
      const Matrix x = g.normal_matrix(8, 4);
      const auto fwd = forward(p, c, x);
      const auto lr = loss_and_delta(fwd.logits, Targets::classes(labels_for(8, 3, i)), c.output);
      adam_step(p, backward_exact(fwd.trace, p, c, lr.delta_out), adam);
    }
    return p;
  };
  EXPECT_TRUE(run() == run());
}

TEST(Sgd, StepIsLearningRateTimesGradient) {
  auto p = scalar_params(1.0);
  sgd_step(p, scalar_grad(2.0), 0.1);
  EXPECT_DOUBLE_EQ(p[0].W(0, 0), 0.8);
}
