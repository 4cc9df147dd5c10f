#pragma once

#include <cstdint>
#include <functional>
#include <map>
#include <string>
#include <string_view>
#include <vector>

#include <Eigen/Dense>

#include "peakload/features.hpp"
#include "peakload/gam.hpp"
#include "peakload/mlp.hpp"
#include "peakload/timeseries.hpp"
#include "peakload/tuner.hpp"

namespace peakload::pipeline {

/// Predicted deviations for one model over one month's evaluation slots.
struct PredictionSet {
  std::string model;
  Timestamp month{};
  std::vector<Timestamp> timestamps;
  std::vector<double> load;
  std::vector<double> d_min;
  std::vector<double> d_max;

  std::size_t size() const noexcept { return timestamps.size(); }
  double pred_min(std::size_t i) const { return load[i] + d_min[i]; }
  double pred_max(std::size_t i) const { return load[i] + d_max[i]; }
};

/// Observed values on the slots of a month where load, min and max exist.
struct Truth {
  Timestamp month{};
  std::vector<Timestamp> timestamps;
  std::vector<double> load;
  std::vector<double> load_min;
  std::vector<double> load_max;
  std::size_t size() const noexcept { return timestamps.size(); }
};

Truth month_truth(const TimeSeriesFrame& frame, Timestamp month);

/// Per-slot mean over member predictions (rows x 2 each), in the given
/// order. Throws NoMembers.
Eigen::MatrixXd average_members(const std::vector<Eigen::MatrixXd>& members);

/// Trains R runs of each parameter set on `train` (member m of set k uses
/// seed derive_seed(base_seed, k, r)) and averages their predictions on
/// `test`, rows x 2.
Eigen::MatrixXd ensemble_predict(const std::vector<mlp::MlpHyperparams>& sets, int runs, const FeatureMatrix& train,
                                 const FeatureMatrix& test, std::uint64_t base_seed,
                                 const mlp::TrainOptions& options = {});

/// Uniform mean across models. Throws SlotMismatch.
PredictionSet combine(const std::vector<PredictionSet>& sets, std::string name = "combination");

/// Delta-hat = 0 on every slot of the month. Throws RangeOutsideData.
PredictionSet naive_predict(const TimeSeriesFrame& frame, Timestamp month);

/// Places row predictions (rows x 2 aligned with `rows_timestamps`) on the
/// truth slots. Slots without a finite prediction fall back to zero.
PredictionSet align(std::string model, const Truth& truth, const std::vector<Timestamp>& rows_timestamps,
                    const Eigen::MatrixXd& predictions, std::size_t* fallbacks = nullptr);

/// Projects onto d_min <= 0 <= d_max.
void clamp_deltas(PredictionSet& set);

struct Metrics {
  double rmse = 0.0;
  double rmse_min = 0.0;
  double rmse_max = 0.0;
  double score = 0.0;
};

/// Joint RMSE over 2|T| squared errors; Score relative to the naive
/// benchmark on the same slots. Throws SlotMismatch or EmptyMonth.
Metrics score(const PredictionSet& predictions, const Truth& truth);

inline constexpr std::string_view kNaive = "naive";
inline constexpr std::string_view kDnn = "dnn";
inline constexpr std::string_view kCombination = "combination";

struct BacktestConfig {
  std::vector<Timestamp> months;  // test month starts
  std::vector<std::string> models = {"naive", "gam.simple", "gam.red", "gam.full", "dnn", "combination"};
  std::vector<std::string> combination_members = {"gam.full", "gam.red", "dnn"};
  FeatureOptions features;
  int k0 = 27;
  int k1 = 9;
  int k2 = 9;
  bool absolute_wind = false;
  gam::GamOptions gam;
  /// 0 keeps all history (expanding); otherwise a fixed number of months.
  int window_months = 0;
  /// DNN training uses only this many most recent months (0 = all).
  int dnn_window_months = 0;
  tuner::TunerConfig tuner;
  int ensemble_runs = 10;
  /// Tune only for the first test month and reuse its top sets afterwards.
  bool reuse_top = false;
  bool clamp = false;
  bool parallel_months = false;  // honoured only without DNN models
  std::uint64_t seed = 7;
  std::string tuner_log_dir;
  std::function<void(const std::string&)> progress;
};

struct BacktestReport {
  std::vector<std::string> models;
  std::vector<Timestamp> months;
  /// metrics[model][month index]
  std::map<std::string, std::vector<Metrics>> metrics;

  Metrics average(const std::string& model) const;
};

struct BacktestResult {
  BacktestReport report;
  std::vector<PredictionSet> predictions;
  std::size_t fallback_slots = 0;
  /// Latest timestamp seen in any training matrix, per month.
  std::vector<Timestamp> last_training_time;
};

BacktestResult backtest(const TimeSeriesFrame& frame, const BacktestConfig& config);

inline constexpr std::array<std::string_view, 4> kMetricNames = {"rmse", "rmse_min", "rmse_max", "score"};

std::string format_report_csv(const BacktestReport& report, std::string_view header_comment = {});
BacktestReport parse_report_csv(std::string_view text);
std::string format_report_table(const BacktestReport& report);
std::string format_predictions_csv(const std::vector<PredictionSet>& sets, std::string_view header_comment = {});

}  // namespace peakload::pipeline
