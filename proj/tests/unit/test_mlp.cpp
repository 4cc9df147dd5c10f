#include <gtest/gtest.h>

#include <cmath>

#include "peakload/errors.hpp"
#include "peakload/kernels.hpp"
#include "peakload/mlp.hpp"
#include "peakload/rng.hpp"

using namespace peakload;
using namespace peakload::mlp;

namespace {

Matrix random_matrix(Eigen::Index r, Eigen::Index c, Rng& rng, double scale = 1.0) {
  Matrix m(r, c);
  for (Eigen::Index i = 0; i < m.size(); ++i) m.data()[i] = scale * rng.normal();
  return m;
}

MlpHyperparams params_with(std::vector<Activation> acts, int units, int first_features) {
  MlpHyperparams p;
  for (int c = 0; c < first_features; ++c) p.features[static_cast<std::size_t>(c)] = true;
  p.depth = static_cast<int>(acts.size());
  for (std::size_t i = 0; i < acts.size(); ++i) {
    p.layers[i].activation = acts[i];
    p.layers[i].units = units;
  }
  return p;
}

/// Rows of a toy regression: y_min = y_max = 2 x0, other inputs noise.
FeatureMatrix toy_matrix(std::size_t n, std::uint64_t seed) {
  Rng rng(seed);
  FeatureMatrix m;
  m.X.resize(static_cast<Eigen::Index>(n), kNumInputs);
  m.y_min.resize(static_cast<Eigen::Index>(n));
  m.y_max.resize(static_cast<Eigen::Index>(n));
  const Timestamp t0{std::chrono::sys_days{std::chrono::year{2020} / 1 / 1}};
  for (std::size_t i = 0; i < n; ++i) {
    const auto r = static_cast<Eigen::Index>(i);
    for (int c = 0; c < kNumInputs; ++c) m.X(r, c) = rng.uniform(-1, 1);
    m.y_min(r) = 2.0 * m.X(r, 0);
    m.y_max(r) = 2.0 * m.X(r, 0);
    m.timestamps.push_back(t0 + kSlotLength * static_cast<long>(i));
  }
  m.row_valid.assign(n, 1);
  m.imputed.assign(n, 0);
  return m;
}

Errc code_of(auto&& fn) {
  try {
    fn();
  } catch (const Error& e) {
    return e.code();
  }
  ADD_FAILURE() << "no error thrown";
  return Errc::Usage;
}

bool same_weights(const Network& a, const Network& b) {
  if (a.W.size() != b.W.size()) return false;
  for (std::size_t l = 0; l < a.W.size(); ++l)
    if (!(a.W[l] == b.W[l]) || !(a.b[l] == b.b[l])) return false;
  return true;
}

}  // namespace

TEST(Activations, SpotValues) {
  Matrix z(1, 2);
  z << 0.0, -1.0;
  EXPECT_EQ(activate(Activation::Elu, z)(0, 0), 0.0);
  EXPECT_NEAR(activate(Activation::Elu, z)(0, 1), std::exp(-1.0) - 1.0, 1e-15);
  EXPECT_EQ(activate(Activation::Relu, z)(0, 1), 0.0);
  EXPECT_EQ(activate(Activation::Sigmoid, z)(0, 0), 0.5);
  EXPECT_NEAR(activate(Activation::Softplus, z)(0, 0), std::log(2.0), 1e-15);
  EXPECT_EQ(activate(Activation::Tanh, z)(0, 0), 0.0);
  Rng rng(1);
  const Matrix big = random_matrix(5, 7, rng, 30.0);
  const Matrix s = activate(Activation::Softmax, big);
  for (Eigen::Index r = 0; r < s.rows(); ++r) EXPECT_NEAR(s.row(r).sum(), 1.0, 1e-12);
  EXPECT_TRUE(s.allFinite());
  for (auto a : kActivations) EXPECT_EQ(parse_activation(activation_name(a)), a);
  EXPECT_EQ(code_of([] { parse_activation("swish"); }), Errc::InvalidConfig);
}

TEST(Forward, ZeroNetworkAndHandComputed) {
  auto net = init_network(params_with({Activation::Tanh, Activation::Elu}, 5, 3), 3, 1);
  for (auto& w : net.W) w.setZero();
  for (auto& b : net.b) b.setZero();
  Rng rng(2);
  EXPECT_EQ(forward(net, random_matrix(4, 3, rng)).cwiseAbs().maxCoeff(), 0.0);

  Network h;
  h.W.resize(2);
  h.b.resize(2);
  h.W[0].resize(2, 2);
  h.W[0] << 1, 2, 3, -1;
  h.b[0] = RowVector{{0.5, -0.5}};
  h.W[1].resize(2, 2);
  h.W[1] << 1, -1, 2, 0.5;
  h.b[1] = RowVector{{0.1, 0.2}};
  h.activation = {Activation::Relu};
  h.l1_activity = {0.0};
  h.l1_weight = {0.0};
  Matrix x(1, 2);
  x << 1, -1;
  // z = (1*1 - 1*3 + 0.5, 1*2 + 1 - 0.5) = (-1.5, 2.5); relu -> (0, 2.5)
  const Matrix out = forward(h, x);
  EXPECT_NEAR(out(0, 0), 0 * 1 + 2.5 * 2 + 0.1, 1e-12);
  EXPECT_NEAR(out(0, 1), 0 * -1 + 2.5 * 0.5 + 0.2, 1e-12);
  EXPECT_EQ(code_of([&] { forward(h, Matrix(1, 3)); }), Errc::ShapeMismatch);
}

TEST(Grad, MatchesCentralDifferencesForAllActivations) {
  const std::vector<std::vector<Activation>> nets = {
      {Activation::Elu, Activation::Tanh},
      {Activation::Sigmoid, Activation::Softplus, Activation::Softmax},
      {Activation::Relu, Activation::Elu},
      {Activation::Softmax, Activation::Sigmoid, Activation::Tanh},
      {Activation::Softplus, Activation::Relu, Activation::Sigmoid},
  };
  double worst = 0.0;
  for (std::size_t k = 0; k < nets.size(); ++k) {
    Rng rng(100 + k);
    auto net = init_network(params_with(nets[k], 6, 4), 4, 7 + k);
    for (auto& b : net.b) b = random_matrix(1, b.size(), rng, 0.3);
    // Regularized on odd networks, plain MSE on even ones.
    for (std::size_t l = 0; l < net.hidden_layers(); ++l) {
      net.l1_activity[l] = k % 2 ? 0.01 * static_cast<double>(l + 1) : 0.0;
      net.l1_weight[l] = k % 2 ? 0.003 : 0.0;
    }
    const Matrix X = random_matrix(9, 4, rng);
    const Matrix Y = random_matrix(9, 2, rng);
    const auto g = grad(net, X, Y);
    EXPECT_NEAR(g.loss, loss(net, X, Y), 1e-12);
    const double h = 1e-5;
    for (std::size_t l = 0; l < net.W.size(); ++l) {
      for (Eigen::Index i = 0; i < net.W[l].size(); ++i) {
        Network p = net, m = net;
        p.W[l].data()[i] += h;
        m.W[l].data()[i] -= h;
        const double fd = (loss(p, X, Y) - loss(m, X, Y)) / (2 * h);
        const double an = g.W[l].data()[i];
        const double rel = std::abs(fd - an) / std::max(1e-6, std::abs(fd) + std::abs(an));
        worst = std::max(worst, rel);
        EXPECT_LT(rel, 1e-4) << "net " << k << " layer " << l << " W " << i << " fd " << fd << " an " << an;
      }
      for (Eigen::Index i = 0; i < net.b[l].size(); ++i) {
        Network p = net, m = net;
        p.b[l](i) += h;
        m.b[l](i) -= h;
        const double fd = (loss(p, X, Y) - loss(m, X, Y)) / (2 * h);
        const double an = g.b[l](i);
        const double rel = std::abs(fd - an) / std::max(1e-6, std::abs(fd) + std::abs(an));
        EXPECT_LT(rel, 1e-4) << "net " << k << " layer " << l << " b " << i;
      }
    }
  }
  RecordProperty("worst_relative_error", std::to_string(worst));
}

TEST(Grad, ZeroResidualAndL1Subgradient) {
  Rng rng(4);
  auto net = init_network(params_with({Activation::Tanh, Activation::Sigmoid}, 5, 3), 3, 9);
  const Matrix X = random_matrix(6, 3, rng);
  const Matrix Y = forward(net, X);
  const auto g = grad(net, X, Y);
  for (const auto& w : g.W) EXPECT_EQ(w.cwiseAbs().maxCoeff(), 0.0);
  for (const auto& b : g.b) EXPECT_EQ(b.cwiseAbs().maxCoeff(), 0.0);

  const double r = 0.37;
  net.l1_weight[0] = r;
  net.W[0](0, 0) = 0.0;
  const Matrix Y2 = forward(net, X);
  const auto g2 = grad(net, X, Y2);
  for (Eigen::Index i = 0; i < net.W[0].size(); ++i) {
    const double w = net.W[0].data()[i];
    const double expect = w > 0 ? r : (w < 0 ? -r : 0.0);
    EXPECT_NEAR(g2.W[0].data()[i], expect, 1e-15);
  }
  EXPECT_EQ(g2.W[1].cwiseAbs().maxCoeff(), 0.0);
}

TEST(Adam, FirstStepOnScalarQuadratic) {
  // f(w) = (w - 3)^2 for every weight of a one-layer network.
  Network net;
  net.W = {Matrix::Constant(1, 2, 0.5)};
  net.b = {RowVector::Zero(2)};
  const double lr = 0.01;
  Adam adam(net, lr);
  Gradients g;
  g.W = {Matrix::Constant(1, 2, 2.0 * (0.5 - 3.0))};
  g.b = {RowVector::Zero(2)};
  adam.step(net, g);
  const double gv = 2.0 * (0.5 - 3.0);
  const double expected = 0.5 - lr * gv / (std::sqrt(gv * gv) + 1e-8);
  EXPECT_NEAR(net.W[0](0, 0), expected, 1e-10 * lr);
  EXPECT_LE(std::abs(net.W[0](0, 0) - 0.5), lr * (1 + 1e-12));
  EXPECT_EQ(net.b[0].cwiseAbs().maxCoeff(), 0.0);
  EXPECT_EQ(adam.steps(), 1);
}

TEST(Adam, ZeroLearningRateLeavesWeights) {
  Rng rng(5);
  auto net = init_network(params_with({Activation::Relu, Activation::Tanh}, 8, 4), 4, 3);
  const Network before = net;
  Adam adam(net, 0.0);
  const Matrix X = random_matrix(20, 4, rng), Y = random_matrix(20, 2, rng);
  for (int s = 0; s < 25; ++s) adam.step(net, grad(net, X, Y));
  EXPECT_TRUE(same_weights(before, net));
}

TEST(Dropout, InvertedScalingStatistics) {
  Rng rng(6);
  const double p = 0.3;
  Matrix mask(100, 100);  // 10^4 draws
  dropout_mask(mask, p, rng);
  const double n = static_cast<double>(mask.size());
  const double mean = mask.mean();
  const double se = std::sqrt(p / (1.0 - p) / n);
  EXPECT_LT(std::abs(mean - 1.0), 3.0 * se);
  const double zeros = static_cast<double>((mask.array() == 0.0).count()) / n;
  EXPECT_LT(std::abs(zeros - p), 3.0 * std::sqrt(p * (1 - p) / n));
  for (Eigen::Index i = 0; i < mask.size(); ++i)
    EXPECT_TRUE(mask.data()[i] == 0.0 || mask.data()[i] == 1.0 / (1.0 - p));
}

TEST(Train, LearnsLinearTarget) {
  const auto m = toy_matrix(3000, 1);
  auto p = params_with({Activation::Tanh, Activation::Tanh}, 16, 1);
  p.learning_rate = 1e-2;
  TrainOptions o;
  o.max_epochs = 150;
  o.patience = 20;
  const auto fit = train(p, m, 3, o);
  const auto cut = validation_cut(m.rows(), 0.25);
  double mean = 0.0, var = 0.0;
  for (auto i = static_cast<Eigen::Index>(cut); i < m.y_max.size(); ++i) mean += m.y_max(i);
  mean /= static_cast<double>(m.rows() - cut);
  for (auto i = static_cast<Eigen::Index>(cut); i < m.y_max.size(); ++i) var += std::pow(m.y_max(i) - mean, 2);
  var /= static_cast<double>(m.rows() - cut);
  EXPECT_LT(fit.best_validation, 1e-2 * var);
  EXPECT_LE(fit.stopped_epoch - fit.best_epoch, o.patience);
  EXPECT_EQ(fit.train_rows, cut);
  EXPECT_EQ(fit.validation_rows, m.rows() - cut);
  const auto pred = predict(fit, m);
  EXPECT_EQ(pred.rows(), static_cast<Eigen::Index>(m.rows()));
  EXPECT_EQ(pred.cols(), 2);
}

TEST(Train, ValidationSplitIsChronological) {
  EXPECT_EQ(validation_cut(100, 0.25), 75u);
  EXPECT_EQ(validation_cut(101, 0.25), 75u);
  EXPECT_EQ(validation_cut(4, 0.25), 3u);
}

TEST(Train, EarlyStoppingGap) {
  const auto m = toy_matrix(1400, 2);
  auto p = params_with({Activation::Relu, Activation::Softplus, Activation::Elu}, 32, 21);
  p.learning_rate = 0.05;
  TrainOptions o;
  o.max_epochs = 300;
  o.patience = 7;
  const auto fit = train(p, m, 11, o);
  EXPECT_LT(fit.stopped_epoch, o.max_epochs);
  EXPECT_LE(fit.stopped_epoch - fit.best_epoch, o.patience);
  EXPECT_GE(fit.best_epoch, 1);
}

TEST(Train, BitReproducibleAcrossRunsAndJobs) {
  const auto m = toy_matrix(1200, 3);
  auto p = params_with({Activation::Elu, Activation::Sigmoid}, 12, 5);
  p.dropout = 0.2;
  p.layers[0].l1_activity = 1e-4;
  p.layers[1].l1_weight = 1e-4;
  TrainOptions o;
  o.max_epochs = 20;
  const int saved = kernels::jobs();
  kernels::set_jobs(1);
  const auto a = train(p, m, 42, o);
  const auto b = train(p, m, 42, o);
  kernels::set_jobs(8);
  const auto c = train(p, m, 42, o);
  kernels::set_jobs(saved);
  EXPECT_TRUE(same_weights(a.net, b.net));
  EXPECT_TRUE(same_weights(a.net, c.net));
  EXPECT_EQ(a.best_validation, c.best_validation);
  EXPECT_EQ(a.stopped_epoch, c.stopped_epoch);
  const auto d = train(p, m, 43, o);
  EXPECT_FALSE(same_weights(a.net, d.net));
}

TEST(Train, TooFewRows) {
  const auto m = toy_matrix(500, 4);
  EXPECT_EQ(code_of([&] { train(params_with({Activation::Relu, Activation::Relu}, 4, 2), m, 1); }), Errc::TooFewRows);
}

TEST(Hyperparams, RangesAndSerialization) {
  EXPECT_EQ(MlpHyperparams::tunables(), 43);
  auto p = params_with({Activation::Relu, Activation::Tanh, Activation::Softmax}, 17, 3);
  p.dropout = 0.4;
  p.layers[2].l1_weight = 0.02;
  EXPECT_NO_THROW(p.validate());
  const auto back = params_from(params_json(p));
  EXPECT_EQ(params_json(back), params_json(p));
  auto bad = p;
  bad.features.fill(false);
  EXPECT_EQ(code_of([&] { bad.validate(); }), Errc::InvalidConfig);
  bad = p;
  bad.dropout = 1.0;
  EXPECT_EQ(code_of([&] { bad.validate(); }), Errc::InvalidConfig);
  EXPECT_TRUE(p.in_search_space());
  bad = p;
  bad.layers[0].units = 129;
  EXPECT_FALSE(bad.in_search_space());
  bad = p;
  bad.depth = 1;
  EXPECT_FALSE(bad.in_search_space());
  bad = p;
  bad.learning_rate = 0.5;
  EXPECT_FALSE(bad.in_search_space());
  bad = p;
  bad.layers[1].l1_activity = 20.0;
  EXPECT_FALSE(bad.in_search_space());
}

TEST(Train, ZeroLearningRateKeepsInitialWeights) {
  const auto m = toy_matrix(1400, 6);
  auto p = params_with({Activation::Tanh, Activation::Relu}, 6, 3);
  p.learning_rate = 0.0;
  TrainOptions o;
  o.max_epochs = 4;
  const auto fit = train(p, m, 21, o);
  EXPECT_TRUE(same_weights(fit.net, init_network(p, 3, derive_seed(21, 1))));
}

TEST(MlpFit, RoundTripPreservesPredictions) {
  const auto m = toy_matrix(1000, 5);
  auto p = params_with({Activation::Softplus, Activation::Elu}, 8, 4);
  TrainOptions o;
  o.max_epochs = 5;
  const auto fit = train(p, m, 8, o);
  const auto back = from_json(to_json(fit));
  EXPECT_TRUE(same_weights(fit.net, back.net));
  const auto a = predict(fit, m), b = predict(back, m);
  EXPECT_LE((a - b).cwiseAbs().maxCoeff(), 1e-12);
  EXPECT_TRUE(fit.net.all_finite());
  EXPECT_EQ(fit.net.W.front().rows(), 4);
  EXPECT_EQ(fit.net.W.back().cols(), 2);
}
