#pragma once

#include <array>
#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include <Eigen/Dense>

#include "peakload/timeseries.hpp"

namespace peakload {

inline constexpr int kNumInputs = 21;

/// Canonical input columns, in matrix order.
enum Col : int {
  kLoadLag1 = 0,
  kLoad = 1,
  kLoadLead1 = 2,
  kDsocdLag4 = 3,
  kDsocd = 7,
  kDsocdLead4 = 11,
  kTemp = 12,
  kSolar = 13,
  kWindN = 14,
  kWindE = 15,
  kPress = 16,
  kHumid = 17,
  kDayHour = 18,
  kWeekHour = 19,
  kYearHour = 20,
};

extern const std::array<std::string_view, kNumInputs> kInputNames;
std::optional<int> input_index(std::string_view name) noexcept;
bool is_weather_input(int column) noexcept;

/// Second-order central difference; endpoints (and neighbours of missing
/// values) are NaN.
std::vector<double> dsocd(std::span<const double> load);

enum class DsocdMode { Consistent, PaperLiteral };

/// phase = (half-hour slot of the UTC day + offset) mod 48. The default maps
/// 00:00 to phase 1 and 23:30 to phase 0.
struct PhaseConvention {
  int offset = 1;
};

std::vector<int> slot_phases(const TimeSeriesFrame& frame, PhaseConvention convention = {});

/// Day-boundary adjustment. Phases 1..46 pass through. Phase 0 is
/// (1/3)x[t-2] + (2/3)x[t+1]. Phase 47 is (2/3)x[t-1] + (1/3)x[t+2] in
/// Consistent mode and (2/3)x[t-2] + (1/3)x[t+1] in PaperLiteral mode.
/// Anchors outside the series (or missing) leave the element NaN.
std::vector<double> adjusted_dsocd(std::span<const double> raw, std::span<const int> phases,
                                   DsocdMode mode = DsocdMode::Consistent);

struct FeatureOptions {
  DsocdMode mode = DsocdMode::Consistent;
  PhaseConvention phase;
};

/// Input matrix with targets. Rows whose features are incomplete have
/// row_valid = 0; rows whose leads ran past the end of the data were filled
/// with the last available value and have imputed = 1.
struct FeatureMatrix {
  std::vector<Timestamp> timestamps;
  Eigen::MatrixXd X;
  Eigen::VectorXd y_min;
  Eigen::VectorXd y_max;
  std::vector<std::uint8_t> row_valid;
  std::vector<std::uint8_t> imputed;

  std::size_t rows() const noexcept { return timestamps.size(); }
  /// Rows with complete features and finite targets.
  std::vector<std::size_t> trainable_rows() const;
  FeatureMatrix select_rows(std::span<const std::size_t> rows) const;
  FeatureMatrix slice(std::size_t begin, std::size_t end) const;
  /// First row index with timestamp >= t.
  std::size_t lower_bound(Timestamp t) const;
};

FeatureMatrix build_matrix(const TimeSeriesFrame& frame, const CalendarInputs& calendar,
                           const FeatureOptions& options = {});
/// Rows [row_begin, row_end) of the frame; lags and leads may reach outside.
FeatureMatrix build_matrix(const TimeSeriesFrame& frame, const CalendarInputs& calendar,
                           const FeatureOptions& options, std::size_t row_begin, std::size_t row_end);

enum class DegeneratePolicy { Drop, Throw };

/// Per-column z-score statistics from a training range (sample sd, n - 1).
struct Standardizer {
  std::vector<double> mean;
  std::vector<double> sd;
  std::vector<std::uint8_t> degenerate;  // column dropped (mapped to 0)

  static Standardizer fit(const Eigen::MatrixXd& X, std::span<const std::size_t> rows,
                          DegeneratePolicy policy = DegeneratePolicy::Drop);
  Eigen::MatrixXd apply(const Eigen::MatrixXd& X) const;
  Eigen::MatrixXd invert(const Eigen::MatrixXd& Z) const;
  std::size_t columns() const noexcept { return mean.size(); }
};

/// Standardizes X in place of a copy; targets are untouched.
FeatureMatrix standardize(const FeatureMatrix& matrix, const Standardizer& stats);
std::pair<FeatureMatrix, Standardizer> standardize_fit(const FeatureMatrix& matrix,
                                                       DegeneratePolicy policy = DegeneratePolicy::Drop);

std::string feature_csv_header();
std::string format_feature_csv(const FeatureMatrix& matrix, std::string_view header_comment = {});

}  // namespace peakload
