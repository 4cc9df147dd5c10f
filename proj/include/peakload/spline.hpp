#pragma once

#include <span>
#include <string>
#include <vector>

#include <Eigen/Dense>

namespace peakload::spline {

enum class KnotPlacement { Quantile, Equal };

/// Clamped cubic B-spline basis of dimension k over [lower, upper].
/// Evaluation outside the range clamps x to the nearest boundary.
class BSplineBasis {
 public:
  static constexpr int kDegree = 3;

  BSplineBasis() = default;
  /// Interior knots from quantiles of the distinct values of x (or equally
  /// spaced). Quantile placement falls back to equal spacing when x has too
  /// few distinct values.
  static BSplineBasis from_data(std::span<const double> x, int k, KnotPlacement placement = KnotPlacement::Quantile);
  /// Full knot vector with four repeated boundary knots at each end.
  static BSplineBasis from_knots(std::vector<double> knots);

  int dim() const noexcept { return static_cast<int>(knots_.size()) - kDegree - 1; }
  double lower() const noexcept { return knots_[kDegree]; }
  double upper() const noexcept { return knots_[knots_.size() - kDegree - 1]; }
  const std::vector<double>& knots() const noexcept { return knots_; }

  Eigen::MatrixXd eval(std::span<const double> x) const;
  /// Writes dim() values for one point (at most four are non-zero).
  void eval_row(double x, double* out) const;

 private:
  std::vector<double> knots_;
};

/// D^T D for the order-th difference operator on k coefficients.
Eigen::MatrixXd difference_penalty(int k, int order = 2);

/// Orthonormal basis Z of {theta : C^T theta = 0}.
Eigen::MatrixXd constraint_null_space(const Eigen::MatrixXd& C);

/// Row-wise Kronecker product: column a * B2.cols() + b holds B1(:, a) * B2(:, b).
Eigen::MatrixXd row_kronecker(const Eigen::MatrixXd& B1, const Eigen::MatrixXd& B2);

/// Smoothing term ready for fitting: design block (after identifiability
/// constraints), symmetric PSD penalty, and its smoothing parameter.
struct PenalizedTerm {
  std::string name;
  Eigen::MatrixXd design;
  Eigen::MatrixXd penalty;
  double lambda = 0.0;
};

/// Sum-to-zero constrained univariate term. `Z` receives the constraint
/// basis (k x (k-1)) when non-null.
PenalizedTerm make_univariate_term(std::string name, const Eigen::MatrixXd& raw_design, Eigen::MatrixXd* Z = nullptr);

/// Pure interaction term: the product design with every main-effect column
/// of both margins (and the intercept) projected out on the fit data. The
/// penalty is S1 (x) I + I (x) S2 with a single tied smoothing parameter.
PenalizedTerm make_interaction_term(std::string name, const Eigen::MatrixXd& raw1, const Eigen::MatrixXd& raw2,
                                    Eigen::MatrixXd* Z = nullptr);

enum class Criterion { BIC, GCV };

struct FitOptions {
  bool compute_hat = true;
  bool compute_covariance = true;
};

struct FitResult {
  double intercept = 0.0;
  std::vector<Eigen::VectorXd> term_coefficients;
  std::vector<double> lambdas;
  std::vector<double> term_edf;
  double edf_total = 0.0;  // includes the intercept
  double rss = 0.0;
  double scale = 0.0;      // rss / (n - edf_total)
  Eigen::VectorXd fitted;
  Eigen::VectorXd hat_diagonal;
  /// Unscaled coefficient covariance block (A^-1)_jj per term.
  std::vector<Eigen::MatrixXd> term_covariance;
};

struct SelectionOptions {
  Criterion criterion = Criterion::BIC;
  std::vector<double> grid;  // empty: 12 log-spaced points in [1e-4, 1e6]
  int max_sweeps = 5;
};

struct Selection {
  std::vector<double> lambdas;
  double criterion = 0.0;
  int sweeps = 0;
  /// False if any per-term grid scan saw total EDF increase with lambda.
  bool edf_monotone = true;
};

std::vector<double> default_grid();
double criterion_value(Criterion criterion, double rss, double edf, double n);

/// Stacked design [1 | B_1 | ... | B_m] with its Gram matrix. Shared between
/// responses so both targets of a model reuse one cross-product.
class PenalizedSystem {
 public:
  explicit PenalizedSystem(std::vector<PenalizedTerm> terms);
  /// Design already stacked as [1 | B_1 | ... | B_m]; penalty sizes give the
  /// block widths. Avoids holding the term blocks twice for large models.
  PenalizedSystem(std::vector<std::string> names, std::vector<Eigen::MatrixXd> penalties, Eigen::MatrixXd design);

  Eigen::Index rows() const noexcept { return design_.rows(); }
  Eigen::Index cols() const noexcept { return design_.cols(); }
  std::size_t term_count() const noexcept { return names_.size(); }
  const std::string& term_name(std::size_t j) const { return names_[j]; }
  Eigen::Index offset(std::size_t j) const { return offsets_[j]; }
  Eigen::Index width(std::size_t j) const { return widths_[j]; }
  const Eigen::MatrixXd& design() const noexcept { return design_; }

  FitResult fit(const Eigen::VectorXd& y, std::span<const double> lambdas, const FitOptions& options = {}) const;
  Selection select(const Eigen::VectorXd& y, const SelectionOptions& options = {}) const;

 private:
  Eigen::MatrixXd penalized_matrix(std::span<const double> lambdas) const;
  Eigen::MatrixXd inverse(const Eigen::MatrixXd& A) const;
  void init();

  std::vector<std::string> names_;
  std::vector<Eigen::Index> offsets_;
  std::vector<Eigen::Index> widths_;
  std::vector<Eigen::MatrixXd> penalties_;
  std::vector<Eigen::MatrixXd> penalty_roots_;  // S_j = R_j R_j^T
  Eigen::MatrixXd design_;
  Eigen::MatrixXd gram_;
};

/// One-shot fit using each term's own lambda.
FitResult fit_penalized_ls(const std::vector<PenalizedTerm>& terms, const Eigen::VectorXd& y,
                           const FitOptions& options = {});

Selection select_smoothing(const std::vector<PenalizedTerm>& terms, const Eigen::VectorXd& y,
                           const SelectionOptions& options = {});

}  // namespace peakload::spline
