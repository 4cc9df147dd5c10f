#include "peakload/mlp.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <limits>
#include <sstream>

#include "peakload/csv.hpp"
#include "peakload/errors.hpp"
#include "peakload/rng.hpp"

namespace peakload::mlp {

using nlohmann::json;

namespace {

constexpr double kNaN = std::numeric_limits<double>::quiet_NaN();

double sigmoid(double x) {
  if (x >= 0) return 1.0 / (1.0 + std::exp(-x));
  const double e = std::exp(x);
  return e / (1.0 + e);
}

double sign0(double x) { return x > 0 ? 1.0 : (x < 0 ? -1.0 : 0.0); }

/// dL/dZ given dL/dH, the pre-activation Z and the activation output H.
Matrix activation_backward(Activation a, const Matrix& Z, const Matrix& H, const Matrix& dH) {
  switch (a) {
    case Activation::Elu:
      return dH.array() * (Z.array() > 0).select(Matrix::Ones(Z.rows(), Z.cols()).array(), H.array() + 1.0);
    case Activation::Relu:
      return dH.array() * (Z.array() > 0).cast<double>();
    case Activation::Sigmoid:
      return dH.array() * H.array() * (1.0 - H.array());
    case Activation::Softplus:
      return dH.array() * Z.unaryExpr(&sigmoid).array();
    case Activation::Tanh:
      return dH.array() * (1.0 - H.array().square());
    case Activation::Softmax: {
      const Eigen::VectorXd inner = (dH.array() * H.array()).rowwise().sum();
      return H.array() * (dH.colwise() - inner).array();
    }
  }
  return dH;
}

struct Trace {
  std::vector<Matrix> Z;  // pre-activations per hidden layer
  std::vector<Matrix> H;  // H[0] = input, H[i] = hidden output i
  Matrix out;
};

Trace run(const Network& net, const Matrix& X) {
  if (net.W.empty()) fail(Errc::ShapeMismatch, "mlp.forward", "network has no layers");
  if (static_cast<std::size_t>(X.cols()) != net.inputs())
    fail(Errc::ShapeMismatch, "mlp.forward",
         "input has " + std::to_string(X.cols()) + " columns, network expects " + std::to_string(net.inputs()));
  Trace t;
  t.H.push_back(X);
  for (std::size_t i = 0; i < net.hidden_layers(); ++i) {
    Matrix Z = t.H.back() * net.W[i];
    Z.rowwise() += net.b[i];
    Matrix H = activate(net.activation[i], Z);
    if (!H.allFinite()) fail(Errc::NonFiniteActivation, "mlp.forward", "hidden layer " + std::to_string(i + 1));
    t.Z.push_back(std::move(Z));
    t.H.push_back(std::move(H));
  }
  t.out = t.H.back() * net.W.back();
  t.out.rowwise() += net.b.back();
  if (!t.out.allFinite()) fail(Errc::NonFiniteActivation, "mlp.forward", "output layer");
  return t;
}

double penalties(const Network& net, const Trace& t) {
  double p = 0.0;
  const double n = static_cast<double>(t.H.front().rows());
  for (std::size_t i = 0; i < net.hidden_layers(); ++i) {
    if (net.l1_activity[i] > 0) p += net.l1_activity[i] * t.H[i + 1].cwiseAbs().sum() / n;
    if (net.l1_weight[i] > 0) p += net.l1_weight[i] * net.W[i].cwiseAbs().sum();
  }
  return p;
}

}  // namespace

std::string_view activation_name(Activation a) noexcept {
  switch (a) {
    case Activation::Elu: return "elu";
    case Activation::Relu: return "relu";
    case Activation::Sigmoid: return "sigmoid";
    case Activation::Softmax: return "softmax";
    case Activation::Softplus: return "softplus";
    case Activation::Tanh: return "tanh";
  }
  return "?";
}

Activation parse_activation(std::string_view name) {
  for (auto a : kActivations)
    if (activation_name(a) == name) return a;
  fail(Errc::InvalidConfig, "mlp.params", "unknown activation '" + std::string(name) + "'");
}

Matrix activate(Activation a, const Matrix& Z) {
  switch (a) {
    case Activation::Elu:
      return Z.unaryExpr([](double x) { return x > 0 ? x : std::expm1(x); });
    case Activation::Relu:
      return Z.cwiseMax(0.0);
    case Activation::Sigmoid:
      return Z.unaryExpr(&sigmoid);
    case Activation::Softplus:
      return Z.unaryExpr([](double x) { return std::log1p(std::exp(-std::abs(x))) + std::max(x, 0.0); });
    case Activation::Tanh:
      return Z.array().tanh();
    case Activation::Softmax: {
      Matrix E = (Z.colwise() - Z.rowwise().maxCoeff()).array().exp();
      const Eigen::VectorXd sums = E.rowwise().sum();
      return E.array().colwise() / sums.array();
    }
  }
  return Z;
}

std::vector<int> MlpHyperparams::selected() const {
  std::vector<int> out;
  for (int i = 0; i < kNumInputs; ++i)
    if (features[static_cast<std::size_t>(i)]) out.push_back(i);
  return out;
}

int MlpHyperparams::tunables() noexcept {
  // features + depth + dropout flag and rate + per layer (activation, units,
  // two flags, two rates) + learning rate
  return kNumInputs + 1 + 2 + kMaxDepth * 6 + 1;
}

void MlpHyperparams::validate() const {
  const char* where = "mlp.params";
  if (selected().empty()) fail(Errc::InvalidConfig, where, "no input feature selected");
  if (depth < 1 || depth > kMaxDepth) fail(Errc::InvalidConfig, where, "depth must be 1..3");
  if (dropout && !(*dropout > 0.0 && *dropout < 1.0)) fail(Errc::InvalidConfig, where, "dropout must lie in (0, 1)");
  for (int i = 0; i < depth; ++i) {
    const auto& l = layers[static_cast<std::size_t>(i)];
    if (l.units < 1 || l.units > 1024) fail(Errc::InvalidConfig, where, "layer width out of range");
    for (const auto& r : {l.l1_activity, l.l1_weight})
      if (r && !(*r >= 0.0 && std::isfinite(*r))) fail(Errc::InvalidConfig, where, "L1 rate must be >= 0");
  }
  if (!(learning_rate >= 0.0) || !std::isfinite(learning_rate))
    fail(Errc::InvalidConfig, where, "learning rate must be >= 0");
}

bool MlpHyperparams::in_search_space() const {
  if (selected().empty() || depth < 2 || depth > kMaxDepth) return false;
  if (dropout && !(*dropout > 0.0 && *dropout < 1.0)) return false;
  for (int i = 0; i < depth; ++i) {
    const auto& l = layers[static_cast<std::size_t>(i)];
    if (l.units < kMinUnits || l.units > kMaxUnits) return false;
    for (const auto& r : {l.l1_activity, l.l1_weight})
      if (r && !(*r > kMinL1 && *r < kMaxL1)) return false;
  }
  return learning_rate > kMinLearningRate && learning_rate < kMaxLearningRate;
}

std::size_t Network::parameter_count() const noexcept {
  std::size_t n = 0;
  for (std::size_t i = 0; i < W.size(); ++i) n += static_cast<std::size_t>(W[i].size() + b[i].size());
  return n;
}

bool Network::all_finite() const {
  for (std::size_t i = 0; i < W.size(); ++i)
    if (!W[i].allFinite() || !b[i].allFinite()) return false;
  return true;
}

Network init_network(const MlpHyperparams& params, int inputs, std::uint64_t seed) {
  Rng rng(seed);
  Network net;
  int fan_in = inputs;
  auto layer = [&](int fan_out) {
    const double limit = std::sqrt(6.0 / (fan_in + fan_out));
    Matrix W(fan_in, fan_out);
    for (Eigen::Index r = 0; r < W.rows(); ++r)
      for (Eigen::Index c = 0; c < W.cols(); ++c) W(r, c) = limit * (2.0 * rng.uniform() - 1.0);
    net.W.push_back(std::move(W));
    net.b.push_back(RowVector::Zero(fan_out));
    fan_in = fan_out;
  };
  for (int i = 0; i < params.depth; ++i) {
    const auto& l = params.layers[static_cast<std::size_t>(i)];
    layer(l.units);
    net.activation.push_back(l.activation);
    net.l1_activity.push_back(l.l1_activity.value_or(0.0));
    net.l1_weight.push_back(l.l1_weight.value_or(0.0));
  }
  layer(2);
  return net;
}

Matrix forward(const Network& net, const Matrix& X) { return run(net, X).out; }

double loss(const Network& net, const Matrix& X, const Matrix& Y) {
  const Trace t = run(net, X);
  const double mse = (t.out - Y).squaredNorm() / static_cast<double>(Y.size());
  return mse + penalties(net, t);
}

Gradients grad(const Network& net, const Matrix& Xin, const Matrix& Y, const Matrix* input_mask) {
  if (Y.rows() != Xin.rows() || Y.cols() != 2) fail(Errc::ShapeMismatch, "mlp.grad", "targets must be rows x 2");
  if (Xin.rows() == 0) fail(Errc::ShapeMismatch, "mlp.grad", "empty batch");
  const Trace t = input_mask ? run(net, Xin.cwiseProduct(*input_mask)) : run(net, Xin);
  const double n = static_cast<double>(Xin.rows());
  Gradients g;
  const Matrix resid = t.out - Y;
  g.mse = resid.squaredNorm() / static_cast<double>(Y.size());
  g.loss = g.mse + penalties(net, t);
  g.W.resize(net.W.size());
  g.b.resize(net.b.size());

  Matrix delta = resid * (2.0 / static_cast<double>(Y.size()));
  const std::size_t L = net.hidden_layers();
  g.W[L] = t.H[L].transpose() * delta;
  g.b[L] = delta.colwise().sum();
  for (std::size_t i = L; i-- > 0;) {
    Matrix dH = delta * net.W[i + 1].transpose();
    if (net.l1_activity[i] > 0) dH += (net.l1_activity[i] / n) * t.H[i + 1].unaryExpr(&sign0);
    delta = activation_backward(net.activation[i], t.Z[i], t.H[i + 1], dH);
    g.W[i] = t.H[i].transpose() * delta;
    if (net.l1_weight[i] > 0) g.W[i] += net.l1_weight[i] * net.W[i].unaryExpr(&sign0);
    g.b[i] = delta.colwise().sum();
  }
  for (std::size_t i = 0; i < g.W.size(); ++i)
    if (!g.W[i].allFinite() || !g.b[i].allFinite())
      fail(Errc::NonFiniteGradient, "mlp.grad", "layer " + std::to_string(i + 1));
  return g;
}

Adam::Adam(const Network& shape, double learning_rate, double beta1, double beta2, double epsilon)
    : lr_(learning_rate), b1_(beta1), b2_(beta2), eps_(epsilon) {
  for (std::size_t i = 0; i < shape.W.size(); ++i) {
    mW_.push_back(Matrix::Zero(shape.W[i].rows(), shape.W[i].cols()));
    vW_.push_back(mW_.back());
    mb_.push_back(RowVector::Zero(shape.b[i].size()));
    vb_.push_back(mb_.back());
  }
}

void Adam::step(Network& net, const Gradients& g) {
  ++t_;
  const double c1 = 1.0 - std::pow(b1_, static_cast<double>(t_));
  const double c2 = 1.0 - std::pow(b2_, static_cast<double>(t_));
  auto update = [&](auto& param, auto& m, auto& v, const auto& grad) {
    m = b1_ * m + (1.0 - b1_) * grad;
    v = b2_ * v + (1.0 - b2_) * grad.cwiseProduct(grad);
    param.array() -= lr_ * (m.array() / c1) / ((v.array() / c2).sqrt() + eps_);
  };
  for (std::size_t i = 0; i < net.W.size(); ++i) {
    update(net.W[i], mW_[i], vW_[i], g.W[i]);
    update(net.b[i], mb_[i], vb_[i], g.b[i]);
  }
}

std::size_t validation_cut(std::size_t rows, double validation_fraction) {
  const auto held = static_cast<std::size_t>(std::ceil(validation_fraction * static_cast<double>(rows)));
  return rows - std::min(rows, held);
}

namespace {

Matrix gather(const FeatureMatrix& m, const std::vector<std::size_t>& rows, const std::vector<int>& cols) {
  Matrix X(static_cast<Eigen::Index>(rows.size()), static_cast<Eigen::Index>(cols.size()));
  for (std::size_t r = 0; r < rows.size(); ++r)
    for (std::size_t c = 0; c < cols.size(); ++c)
      X(static_cast<Eigen::Index>(r), static_cast<Eigen::Index>(c)) =
          m.X(static_cast<Eigen::Index>(rows[r]), cols[c]);
  return X;
}

Matrix targets(const FeatureMatrix& m, const std::vector<std::size_t>& rows) {
  Matrix Y(static_cast<Eigen::Index>(rows.size()), 2);
  for (std::size_t r = 0; r < rows.size(); ++r) {
    Y(static_cast<Eigen::Index>(r), 0) = m.y_min(static_cast<Eigen::Index>(rows[r]));
    Y(static_cast<Eigen::Index>(r), 1) = m.y_max(static_cast<Eigen::Index>(rows[r]));
  }
  return Y;
}

Matrix standardize_inputs(const Standardizer& s, const Matrix& X) {
  Matrix Z(X.rows(), X.cols());
  for (Eigen::Index c = 0; c < X.cols(); ++c) {
    const auto cc = static_cast<std::size_t>(c);
    if (s.degenerate[cc])
      Z.col(c).setZero();
    else
      Z.col(c) = (X.col(c).array() - s.mean[cc]) / s.sd[cc];
  }
  return Z;
}

}  // namespace

MlpFit train(const MlpHyperparams& params, const FeatureMatrix& matrix, std::uint64_t seed,
             const TrainOptions& options) {
  const char* where = "mlp.train";
  params.validate();
  if (options.batch_size < 1 || options.max_epochs < 0 || options.patience < 1 ||
      !(options.validation_fraction > 0.0 && options.validation_fraction < 1.0))
    fail(Errc::InvalidConfig, where, "invalid training options");
  const auto rows = matrix.trainable_rows();
  if (rows.size() < 2 * static_cast<std::size_t>(options.batch_size))
    fail(Errc::TooFewRows, where,
         std::to_string(rows.size()) + " trainable rows, need at least " + std::to_string(2 * options.batch_size));
  const std::size_t cut = validation_cut(rows.size(), options.validation_fraction);
  if (cut == 0 || cut == rows.size()) fail(Errc::TooFewRows, where, "empty training or validation part");
  const std::vector<std::size_t> train_rows(rows.begin(), rows.begin() + static_cast<std::ptrdiff_t>(cut));
  const std::vector<std::size_t> val_rows(rows.begin() + static_cast<std::ptrdiff_t>(cut), rows.end());

  MlpFit fit;
  fit.params = params;
  fit.inputs = params.selected();
  fit.seed = seed;
  fit.train_rows = train_rows.size();
  fit.validation_rows = val_rows.size();
  const Matrix Xtr_raw = gather(matrix, train_rows, fit.inputs);
  {
    std::vector<std::size_t> all(train_rows.size());
    for (std::size_t i = 0; i < all.size(); ++i) all[i] = i;
    fit.stats = Standardizer::fit(Xtr_raw, all, DegeneratePolicy::Drop);
  }
  const Matrix Xtr = standardize_inputs(fit.stats, Xtr_raw);
  const Matrix Ytr = targets(matrix, train_rows);
  const Matrix Xva = standardize_inputs(fit.stats, gather(matrix, val_rows, fit.inputs));
  const Matrix Yva = targets(matrix, val_rows);

  fit.net = init_network(params, static_cast<int>(fit.inputs.size()), derive_seed(seed, 1));
  Rng rng(derive_seed(seed, 2));
  Adam adam(fit.net, params.learning_rate);
  Network best = fit.net;
  double best_val = std::numeric_limits<double>::infinity();
  int best_epoch = 0;

  std::vector<std::size_t> order(train_rows.size());
  for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
  const auto bs = static_cast<std::size_t>(options.batch_size);
  Matrix Xb, Yb, mask;
  int epoch = 0;
  for (epoch = 1; epoch <= options.max_epochs; ++epoch) {
    rng.shuffle(order);
    for (std::size_t s = 0; s < order.size(); s += bs) {
      const auto len = static_cast<Eigen::Index>(std::min(bs, order.size() - s));
      Xb.resize(len, Xtr.cols());
      Yb.resize(len, 2);
      for (Eigen::Index r = 0; r < len; ++r) {
        Xb.row(r) = Xtr.row(static_cast<Eigen::Index>(order[s + static_cast<std::size_t>(r)]));
        Yb.row(r) = Ytr.row(static_cast<Eigen::Index>(order[s + static_cast<std::size_t>(r)]));
      }
      const Matrix* mp = nullptr;
      if (params.dropout) {
        mask.resize(len, Xtr.cols());
        dropout_mask(mask, *params.dropout, rng);
        mp = &mask;
      }
      Gradients g;
      try {
        g = grad(fit.net, Xb, Yb, mp);
      } catch (const Error& e) {
        fail(Errc::DivergedLoss, where, std::string("epoch ") + std::to_string(epoch) + ": " + e.what());
      }
      if (!std::isfinite(g.loss)) fail(Errc::DivergedLoss, where, "training loss is not finite");
      adam.step(fit.net, g);
    }
    double val = std::numeric_limits<double>::quiet_NaN();
    try {
      val = (forward(fit.net, Xva) - Yva).squaredNorm() / static_cast<double>(Yva.size());
    } catch (const Error&) {
    }
    if (!std::isfinite(val)) fail(Errc::DivergedLoss, where, "validation loss is not finite at epoch " + std::to_string(epoch));
    if (val < best_val) {
      best_val = val;
      best = fit.net;
      best_epoch = epoch;
    } else if (epoch - best_epoch >= options.patience) {
      break;
    }
  }
  fit.stopped_epoch = std::min(epoch, options.max_epochs);
  if (best_epoch == 0) {
    // no epochs run: report the initial network
    best_val = (forward(fit.net, Xva) - Yva).squaredNorm() / static_cast<double>(Yva.size());
    best = fit.net;
  }
  fit.net = std::move(best);
  fit.best_epoch = best_epoch;
  fit.best_validation = best_val;
  return fit;
}

void dropout_mask(Matrix& mask, double rate, Rng& rng) {
  const double keep = 1.0 - rate;
  for (Eigen::Index i = 0; i < mask.size(); ++i) mask.data()[i] = rng.uniform() < keep ? 1.0 / keep : 0.0;
}

Matrix prepare_inputs(const MlpFit& fit, const FeatureMatrix& matrix) {
  std::vector<std::size_t> all(matrix.rows());
  for (std::size_t i = 0; i < all.size(); ++i) all[i] = i;
  for (int c : fit.inputs)
    if (c >= matrix.X.cols()) fail(Errc::ShapeMismatch, "mlp.predict", "matrix lacks input column " + std::to_string(c));
  return standardize_inputs(fit.stats, gather(matrix, all, fit.inputs));
}

Eigen::MatrixXd predict(const MlpFit& fit, const FeatureMatrix& matrix) {
  const Matrix X = prepare_inputs(fit, matrix);
  Eigen::MatrixXd out = Eigen::MatrixXd::Constant(X.rows(), 2, kNaN);
  std::vector<Eigen::Index> ok;
  for (Eigen::Index r = 0; r < X.rows(); ++r)
    if (X.row(r).allFinite()) ok.push_back(r);
  Matrix Xok(static_cast<Eigen::Index>(ok.size()), X.cols());
  for (std::size_t i = 0; i < ok.size(); ++i) Xok.row(static_cast<Eigen::Index>(i)) = X.row(ok[i]);
  if (!ok.empty()) {
    const Matrix Y = forward(fit.net, Xok);
    for (std::size_t i = 0; i < ok.size(); ++i) out.row(ok[i]) = Y.row(static_cast<Eigen::Index>(i));
  }
  return out;
}

json params_json(const MlpHyperparams& p) {
  json j;
  j["features"] = p.features;
  j["depth"] = p.depth;
  j["dropout"] = p.dropout ? json(*p.dropout) : json(nullptr);
  json layers = json::array();
  for (const auto& l : p.layers) {
    layers.push_back({{"activation", activation_name(l.activation)},
                      {"units", l.units},
                      {"l1_activity", l.l1_activity ? json(*l.l1_activity) : json(nullptr)},
                      {"l1_weight", l.l1_weight ? json(*l.l1_weight) : json(nullptr)}});
  }
  j["layers"] = std::move(layers);
  j["learning_rate"] = p.learning_rate;
  return j;
}

MlpHyperparams params_from(const json& j) {
  MlpHyperparams p;
  try {
    p.features = j.at("features").get<std::array<bool, kNumInputs>>();
    p.depth = j.at("depth");
    if (!j.at("dropout").is_null()) p.dropout = j.at("dropout").get<double>();
    const auto& layers = j.at("layers");
    if (layers.size() != kMaxDepth) fail(Errc::BadSchema, "mlp.params", "expected three layer entries");
    for (std::size_t i = 0; i < kMaxDepth; ++i) {
      const auto& l = layers.at(i);
      p.layers[i].activation = parse_activation(l.at("activation").get<std::string>());
      p.layers[i].units = l.at("units");
      if (!l.at("l1_activity").is_null()) p.layers[i].l1_activity = l.at("l1_activity").get<double>();
      if (!l.at("l1_weight").is_null()) p.layers[i].l1_weight = l.at("l1_weight").get<double>();
    }
    p.learning_rate = j.at("learning_rate");
  } catch (const json::exception& e) {
    fail(Errc::BadSchema, "mlp.params", e.what());
  }
  return p;
}

namespace {

json matrix_json(const Matrix& M) {
  json rows = json::array();
  for (Eigen::Index r = 0; r < M.rows(); ++r) {
    json row = json::array();
    for (Eigen::Index c = 0; c < M.cols(); ++c) row.push_back(M(r, c));
    rows.push_back(std::move(row));
  }
  return rows;
}

Matrix matrix_from(const json& j, Eigen::Index cols_if_empty) {
  const auto r = static_cast<Eigen::Index>(j.size());
  const Eigen::Index c = r ? static_cast<Eigen::Index>(j.at(0).size()) : cols_if_empty;
  Matrix M(r, c);
  for (Eigen::Index i = 0; i < r; ++i) {
    if (static_cast<Eigen::Index>(j.at(i).size()) != c) fail(Errc::BadSchema, "mlp.load", "ragged matrix");
    for (Eigen::Index k = 0; k < c; ++k) M(i, k) = j.at(i).at(k).get<double>();
  }
  return M;
}

}  // namespace

std::string to_json(const MlpFit& fit) {
  json j;
  j["kind"] = "mlp";
  j["format"] = 1;
  j["params"] = params_json(fit.params);
  j["inputs"] = fit.inputs;
  j["standardizer"] = {{"mean", fit.stats.mean}, {"sd", fit.stats.sd}, {"degenerate", fit.stats.degenerate}};
  j["seed"] = fit.seed;
  j["stopped_epoch"] = fit.stopped_epoch;
  j["best_epoch"] = fit.best_epoch;
  j["best_validation"] = fit.best_validation;
  j["train_rows"] = fit.train_rows;
  j["validation_rows"] = fit.validation_rows;
  json layers = json::array();
  for (std::size_t i = 0; i < fit.net.W.size(); ++i) {
    json l = {{"W", matrix_json(fit.net.W[i])}, {"b", std::vector<double>(fit.net.b[i].data(), fit.net.b[i].data() + fit.net.b[i].size())}};
    if (i < fit.net.hidden_layers()) {
      l["activation"] = activation_name(fit.net.activation[i]);
      l["l1_activity"] = fit.net.l1_activity[i];
      l["l1_weight"] = fit.net.l1_weight[i];
    }
    layers.push_back(std::move(l));
  }
  j["layers"] = std::move(layers);
  return j.dump(1) + "\n";
}

MlpFit from_json(std::string_view text) {
  const char* where = "mlp.load";
  MlpFit fit;
  try {
    const json j = json::parse(text);
    if (j.at("kind") != "mlp") fail(Errc::BadSchema, where, "document is not an MLP fit");
    fit.params = params_from(j.at("params"));
    fit.inputs = j.at("inputs").get<std::vector<int>>();
    fit.stats.mean = j.at("standardizer").at("mean").get<std::vector<double>>();
    fit.stats.sd = j.at("standardizer").at("sd").get<std::vector<double>>();
    fit.stats.degenerate = j.at("standardizer").at("degenerate").get<std::vector<std::uint8_t>>();
    fit.seed = j.at("seed");
    fit.stopped_epoch = j.at("stopped_epoch");
    fit.best_epoch = j.at("best_epoch");
    fit.best_validation = j.at("best_validation");
    fit.train_rows = j.at("train_rows");
    fit.validation_rows = j.at("validation_rows");
    const auto& layers = j.at("layers");
    Eigen::Index prev = static_cast<Eigen::Index>(fit.inputs.size());
    for (std::size_t i = 0; i < layers.size(); ++i) {
      const auto& l = layers.at(i);
      Matrix W = matrix_from(l.at("W"), 0);
      const auto b = l.at("b").get<std::vector<double>>();
      if (W.rows() != prev || static_cast<Eigen::Index>(b.size()) != W.cols())
        fail(Errc::ShapeMismatch, where, "layer shapes do not chain");
      prev = W.cols();
      fit.net.W.push_back(std::move(W));
      fit.net.b.push_back(Eigen::Map<const RowVector>(b.data(), static_cast<Eigen::Index>(b.size())));
      if (i + 1 < layers.size()) {
        fit.net.activation.push_back(parse_activation(l.at("activation").get<std::string>()));
        fit.net.l1_activity.push_back(l.at("l1_activity"));
        fit.net.l1_weight.push_back(l.at("l1_weight"));
      }
    }
    if (prev != 2) fail(Errc::ShapeMismatch, where, "output layer must have two units");
  } catch (const json::exception& e) {
    fail(Errc::BadSchema, where, e.what());
  }
  return fit;
}

void save(const MlpFit& fit, const std::string& path) { csv::write_atomic(path, to_json(fit)); }

MlpFit load(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) fail(Errc::Io, "mlp.load", "cannot open " + path);
  std::stringstream ss;
  ss << in.rdbuf();
  return from_json(ss.str());
}

}  // namespace peakload::mlp
