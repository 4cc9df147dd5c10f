#pragma once

#include <array>
#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "peakload/features.hpp"
#include "peakload/mlp.hpp"
#include "peakload/rng.hpp"

namespace peakload::tuner {

enum class Sampler { Random, Adaptive };

struct TunerConfig {
  int budget = 60;
  int top_k = 5;
  Sampler sampler = Sampler::Random;
  std::uint64_t base_seed = 7;
  mlp::TrainOptions train;
  /// Trials per adaptive round after the random warm-up.
  int adaptive_batch = 4;
  void validate() const;
};

/// One hyperparameter set drawn from the search space.
mlp::MlpHyperparams sample(Rng& rng);

struct TrialResult {
  std::size_t index = 0;
  mlp::MlpHyperparams params;
  double mse = 0.0;  // +inf when training failed
  std::vector<double> step_mse;
  bool short_history = false;
  double wall_seconds = 0.0;
  std::uint64_t seed = 0;
  std::string error;
};

/// Month starts {T-2, T-1, T, end}: step i trains on rows before bounds[i]
/// and predicts [bounds[i], bounds[i+1]).
using InnerBounds = std::array<Timestamp, 4>;
/// The three months preceding `outer_start`.
InnerBounds inner_bounds(Timestamp outer_start);

/// Three-step expanding-window score. MSE pools both targets over all
/// predicted rows. Throws InsufficientHistory.
TrialResult run_trial(const mlp::MlpHyperparams& params, const FeatureMatrix& matrix, const InnerBounds& bounds,
                      std::uint64_t seed, const mlp::TrainOptions& train = {});

/// Ascending by MSE, ties by trial index. Throws TooFewTrials.
std::vector<TrialResult> select_top(const std::vector<TrialResult>& trials, std::size_t k);

/// One JSON object per line (no timing fields, so logs are reproducible).
std::string trial_record(const TrialResult& trial, std::uint64_t base_seed);
/// Parses a trial log; malformed trailing lines from an interrupted run are
/// skipped. Only records with the given base seed are returned, by index.
std::vector<TrialResult> read_log(const std::string& path, std::optional<std::uint64_t> base_seed = std::nullopt);

struct TuneResult {
  std::vector<TrialResult> trials;  // by index
  std::vector<TrialResult> top;
  std::size_t resumed = 0;
};

/// Runs the study on in-sample rows strictly before `outer_start`. Trials
/// found in `log_path` are reused; new ones are appended in index order.
TuneResult tune(const FeatureMatrix& matrix, Timestamp outer_start, const TunerConfig& config,
                const std::string& log_path = {});

}  // namespace peakload::tuner
