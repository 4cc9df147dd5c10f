#pragma once

#include <array>
#include <cstdint>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include <Eigen/Dense>

#include "json.hpp"

#include "peakload/features.hpp"
#include "peakload/rng.hpp"

namespace peakload::mlp {

enum class Activation { Elu, Relu, Sigmoid, Softmax, Softplus, Tanh };
inline constexpr std::array<Activation, 6> kActivations = {Activation::Elu,     Activation::Relu,
                                                           Activation::Sigmoid, Activation::Softmax,
                                                           Activation::Softplus, Activation::Tanh};

std::string_view activation_name(Activation a) noexcept;
Activation parse_activation(std::string_view name);

using Matrix = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using RowVector = Eigen::RowVectorXd;

/// Applies the activation to Z. Softmax normalizes each row.
Matrix activate(Activation a, const Matrix& Z);

inline constexpr int kMaxDepth = 3;
inline constexpr int kMinUnits = 4;
inline constexpr int kMaxUnits = 128;
inline constexpr double kMinL1 = 1e-5;
inline constexpr double kMaxL1 = 10.0;
inline constexpr double kMinLearningRate = 1e-5;
inline constexpr double kMaxLearningRate = 1e-1;

struct LayerParams {
  Activation activation = Activation::Relu;
  int units = 32;
  std::optional<double> l1_activity;
  std::optional<double> l1_weight;
};

struct MlpHyperparams {
  std::array<bool, kNumInputs> features{};
  int depth = 2;
  std::optional<double> dropout;
  /// Always three entries; only the first `depth` are used.
  std::array<LayerParams, kMaxDepth> layers{};
  double learning_rate = 1e-3;

  std::vector<int> selected() const;
  /// Structural check used by training; throws InvalidConfig. Accepts
  /// settings outside the search space (depth 1, learning rate 0).
  void validate() const;
  /// True when every value lies in the tuner's declared ranges.
  bool in_search_space() const;
  /// Count of tunable quantities in the search space (43).
  static int tunables() noexcept;
};

/// Weights in the row-vector convention: H_i = a_i(H_{i-1} W_i + b_i).
/// The last layer is linear with two outputs (min, max).
struct Network {
  std::vector<Matrix> W;
  std::vector<RowVector> b;
  std::vector<Activation> activation;  // one per hidden layer
  std::vector<double> l1_activity;     // 0 when off
  std::vector<double> l1_weight;

  std::size_t hidden_layers() const noexcept { return activation.size(); }
  std::size_t inputs() const noexcept { return W.empty() ? 0 : static_cast<std::size_t>(W.front().rows()); }
  std::size_t parameter_count() const noexcept;
  bool all_finite() const;
};

/// Shape from hyperparameters, Glorot-uniform weights, zero biases.
Network init_network(const MlpHyperparams& params, int inputs, std::uint64_t seed);

/// Rows x 2 predictions. Throws ShapeMismatch or NonFiniteActivation.
Matrix forward(const Network& net, const Matrix& X);

struct Gradients {
  std::vector<Matrix> W;
  std::vector<RowVector> b;
  double loss = 0.0;       // data MSE plus penalties
  double mse = 0.0;
};

/// Gradient of MSE (averaged over rows and both outputs) plus L1 penalties.
/// `input_mask`, when given, multiplies X elementwise (dropout).
Gradients grad(const Network& net, const Matrix& X, const Matrix& Y, const Matrix* input_mask = nullptr);

/// Objective value only, same definition as Gradients::loss.
double loss(const Network& net, const Matrix& X, const Matrix& Y);

class Adam {
 public:
  explicit Adam(const Network& shape, double learning_rate, double beta1 = 0.9, double beta2 = 0.999,
                double epsilon = 1e-8);
  void step(Network& net, const Gradients& g);
  long steps() const noexcept { return t_; }

 private:
  double lr_, b1_, b2_, eps_;
  long t_ = 0;
  std::vector<Matrix> mW_, vW_;
  std::vector<RowVector> mb_, vb_;
};

struct TrainOptions {
  int max_epochs = 1500;
  int patience = 50;
  int batch_size = 336;
  double validation_fraction = 0.25;
};

struct MlpFit {
  MlpHyperparams params;
  std::vector<int> inputs;  // selected FeatureMatrix columns
  Standardizer stats;       // over `inputs`, from the training part
  Network net;
  std::uint64_t seed = 0;
  int stopped_epoch = 0;    // epochs run
  int best_epoch = 0;       // 1-based epoch of the restored weights
  double best_validation = 0.0;
  std::size_t train_rows = 0;
  std::size_t validation_rows = 0;
};

/// Trainable rows of `matrix`: the chronologically last share is held out
/// for early stopping. Throws TooFewRows or DivergedLoss.
MlpFit train(const MlpHyperparams& params, const FeatureMatrix& matrix, std::uint64_t seed,
             const TrainOptions& options = {});

/// Inverted dropout: each entry is 0 with probability `rate`, else 1/(1-rate).
void dropout_mask(Matrix& mask, double rate, Rng& rng);

/// Raw selected inputs, standardized with the fit's statistics.
Matrix prepare_inputs(const MlpFit& fit, const FeatureMatrix& matrix);
/// Rows x 2 (min, max). Rows with incomplete selected inputs give NaN.
Eigen::MatrixXd predict(const MlpFit& fit, const FeatureMatrix& matrix);

/// Split used by train(): [0, cut) train, [cut, n) validation.
std::size_t validation_cut(std::size_t rows, double validation_fraction);

nlohmann::json params_json(const MlpHyperparams& params);
MlpHyperparams params_from(const nlohmann::json& j);
std::string to_json(const MlpFit& fit);
MlpFit from_json(std::string_view text);
void save(const MlpFit& fit, const std::string& path);
MlpFit load(const std::string& path);

}  // namespace peakload::mlp
