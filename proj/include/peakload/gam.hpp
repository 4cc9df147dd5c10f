#pragma once

#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include <Eigen/Dense>

#include "peakload/features.hpp"
#include "peakload/spline.hpp"

namespace peakload::gam {

enum class Variant { Full, Red, Simple, NoWeather };
enum class Target { Min, Max };

std::string_view variant_name(Variant v) noexcept;  // "full", "red", ...
std::string_view target_name(Target t) noexcept;    // "min", "max"
/// Accepts "red" or "gam.red" (case-insensitive); UnknownVariant otherwise.
Variant parse_variant(std::string_view text);
Target parse_target(std::string_view text);

struct GamSpec {
  Variant variant = Variant::Red;
  Target target = Target::Max;
  std::vector<int> univariate;                   // FeatureMatrix column indices
  std::vector<std::pair<int, int>> interactions;
  int k0 = 27;
  int k1 = 9;
  int k2 = 9;
  /// Replace windN by the absolute wind speed and drop windE.
  bool absolute_wind = false;

  std::size_t basis_columns() const noexcept;
};

GamSpec build_spec(Variant variant, Target target, bool absolute_wind = false);

/// Term name for a column: canonical input name, or "wind_speed".
std::string column_name(int column, bool absolute_wind);

struct GamOptions {
  spline::KnotPlacement knots = spline::KnotPlacement::Quantile;
  /// Bin each input into at most this many equal-width bins before building
  /// the fitting design (0 disables).
  int discretize_bins = 0;
  spline::SelectionOptions selection;
};

struct TermFit {
  std::string name;
  int column_a = -1;
  int column_b = -1;  // -1 for univariate terms
  spline::BSplineBasis basis_a;
  spline::BSplineBasis basis_b;
  /// Coefficients on the unconstrained basis (k or k1 * k2 entries).
  Eigen::VectorXd coefficients;
  /// Unscaled covariance of `coefficients` (rank = constrained width).
  Eigen::MatrixXd covariance;
  int width = 0;  // constrained parameter count
  double lambda = 0.0;
  double edf = 0.0;

  bool is_interaction() const noexcept { return column_b >= 0; }
  Eigen::MatrixXd raw_design(const Eigen::MatrixXd& X, bool absolute_wind) const;
};

struct GamFit {
  GamSpec spec;
  std::vector<TermFit> terms;
  /// Terms skipped because an input was constant on the fit rows.
  std::vector<std::string> dropped_terms;
  std::vector<std::string> warnings;
  double intercept = 0.0;
  double scale = 0.0;  // sigma^2 = RSS / (n - EDF)
  double rss = 0.0;
  double edf_total = 0.0;
  double training_rmse = 0.0;
  std::size_t rows = 0;
  double criterion = 0.0;
  int sweeps = 0;
  bool edf_monotone = true;
};

GamFit fit(const GamSpec& spec, const FeatureMatrix& matrix, const GamOptions& options = {});
/// Fits both targets on one shared design; result order is {min, max}.
std::pair<GamFit, GamFit> fit_both(const GamSpec& spec, const FeatureMatrix& matrix, const GamOptions& options = {});

/// Intercept plus the sum of term contributions. Rows with non-finite inputs
/// give NaN.
Eigen::VectorXd predict(const GamFit& fit, const FeatureMatrix& matrix);
/// Contribution of one term per row (no intercept).
Eigen::VectorXd predict_term(const GamFit& fit, std::size_t term, const FeatureMatrix& matrix);

struct TermStat {
  std::string term;
  double edf = 0.0;
  double f = 0.0;  // approximate Wald F
  bool low_edf = false;
};

/// Sorted by EDF descending (ties by term name).
std::vector<TermStat> term_stats(const GamFit& fit);
std::string format_term_stats_csv(const std::vector<TermStat>& stats, std::string_view header_comment = {});

std::string to_json(const GamFit& fit);
GamFit from_json(std::string_view text);
void save(const GamFit& fit, const std::string& path);
GamFit load(const std::string& path);

}  // namespace peakload::gam
