#include "peakload/spline.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include "peakload/errors.hpp"
#include "peakload/kernels.hpp"

namespace peakload::spline {

namespace {

std::vector<double> equal_interior(double lo, double hi, int count) {
  std::vector<double> out;
  for (int j = 1; j <= count; ++j) out.push_back(lo + (hi - lo) * j / (count + 1));
  return out;
}

}  // namespace

BSplineBasis BSplineBasis::from_data(std::span<const double> x, int k, KnotPlacement placement) {
  if (k < kDegree + 1) fail(Errc::DimensionMismatch, "spline.basis", "basis dimension must be at least 4");
  std::vector<double> u;
  u.reserve(x.size());
  for (double v : x)
    if (std::isfinite(v)) u.push_back(v);
  if (u.empty()) fail(Errc::EmptyInput, "spline.basis", "no finite values to place knots");
  std::sort(u.begin(), u.end());
  u.erase(std::unique(u.begin(), u.end()), u.end());
  double lo = u.front(), hi = u.back();
  if (!(hi > lo)) {
    lo -= 0.5;
    hi += 0.5;
  }
  const int interior = k - kDegree - 1;
  std::vector<double> inner;
  if (placement == KnotPlacement::Quantile && static_cast<int>(u.size()) >= interior + 2) {
    const double m = static_cast<double>(u.size() - 1);
    for (int j = 1; j <= interior; ++j) {
      double pos = m * j / (interior + 1);
      auto i = static_cast<std::size_t>(std::floor(pos));
      double frac = pos - static_cast<double>(i);
      double q = i + 1 < u.size() ? u[i] + frac * (u[i + 1] - u[i]) : u[i];
      inner.push_back(q);
    }
    bool ok = true;
    double prev = lo;
    for (double q : inner) {
      if (!(q > prev)) ok = false;
      prev = q;
    }
    if (!(hi > prev)) ok = false;
    if (!ok) inner = equal_interior(lo, hi, interior);
  } else {
    inner = equal_interior(lo, hi, interior);
  }
  std::vector<double> knots(kDegree + 1, lo);
  knots.insert(knots.end(), inner.begin(), inner.end());
  knots.insert(knots.end(), kDegree + 1, hi);
  BSplineBasis b;
  b.knots_ = std::move(knots);
  return b;
}

BSplineBasis BSplineBasis::from_knots(std::vector<double> knots) {
  if (knots.size() < 2 * (kDegree + 1)) fail(Errc::DimensionMismatch, "spline.basis", "knot vector too short");
  for (std::size_t i = 1; i < knots.size(); ++i)
    if (knots[i] < knots[i - 1]) fail(Errc::DimensionMismatch, "spline.basis", "knots must be non-decreasing");
  BSplineBasis b;
  b.knots_ = std::move(knots);
  if (!(b.upper() > b.lower())) fail(Errc::DimensionMismatch, "spline.basis", "empty knot range");
  return b;
}

void BSplineBasis::eval_row(double x, double* out) const {
  const int k = dim();
  std::fill(out, out + k, 0.0);
  if (std::isnan(x)) {
    std::fill(out, out + k, std::numeric_limits<double>::quiet_NaN());
    return;
  }
  const auto& t = knots_;
  x = std::clamp(x, lower(), upper());
  // span s with t[s] <= x < t[s+1], s in [3, k-1]
  int s = kDegree;
  {
    auto it = std::upper_bound(t.begin() + kDegree, t.begin() + k, x);
    s = static_cast<int>(it - t.begin()) - 1;
    s = std::clamp(s, kDegree, k - 1);
  }
  double N[kDegree + 1];
  double left[kDegree + 1], right[kDegree + 1];
  N[0] = 1.0;
  for (int j = 1; j <= kDegree; ++j) {
    left[j] = x - t[s + 1 - j];
    right[j] = t[s + j] - x;
    double saved = 0.0;
    for (int r = 0; r < j; ++r) {
      double denom = right[r + 1] + left[j - r];
      double temp = denom > 0.0 ? N[r] / denom : 0.0;
      N[r] = saved + right[r + 1] * temp;
      saved = left[j - r] * temp;
    }
    N[j] = saved;
  }
  for (int r = 0; r <= kDegree; ++r) out[s - kDegree + r] = N[r];
}

Eigen::MatrixXd BSplineBasis::eval(std::span<const double> x) const {
  if (x.empty()) fail(Errc::EmptyInput, "spline.eval_basis", "no evaluation points");
  const int k = dim();
  Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor> B(static_cast<Eigen::Index>(x.size()), k);
  for (std::size_t i = 0; i < x.size(); ++i) eval_row(x[i], B.row(static_cast<Eigen::Index>(i)).data());
  return B;
}

Eigen::MatrixXd difference_penalty(int k, int order) {
  if (order < 0 || order >= k) fail(Errc::DimensionMismatch, "spline.penalty", "difference order must be below k");
  Eigen::MatrixXd D = Eigen::MatrixXd::Identity(k, k);
  for (int o = 0; o < order; ++o) {
    Eigen::MatrixXd next(D.rows() - 1, k);
    for (Eigen::Index r = 0; r + 1 < D.rows(); ++r) next.row(r) = D.row(r + 1) - D.row(r);
    D = std::move(next);
  }
  return D.transpose() * D;
}

Eigen::MatrixXd constraint_null_space(const Eigen::MatrixXd& C) {
  const Eigen::Index k = C.rows();
  Eigen::ColPivHouseholderQR<Eigen::MatrixXd> qr(C);
  qr.setThreshold(1e-10);
  const Eigen::Index r = qr.rank();
  Eigen::MatrixXd Q = qr.householderQ() * Eigen::MatrixXd::Identity(k, k);
  return Q.rightCols(k - r);
}

Eigen::MatrixXd row_kronecker(const Eigen::MatrixXd& B1, const Eigen::MatrixXd& B2) {
  if (B1.rows() != B2.rows()) fail(Errc::DimensionMismatch, "spline.row_kronecker", "row counts differ");
  const Eigen::Index k1 = B1.cols(), k2 = B2.cols();
  Eigen::MatrixXd T(B1.rows(), k1 * k2);
  for (Eigen::Index a = 0; a < k1; ++a)
    for (Eigen::Index b = 0; b < k2; ++b) T.col(a * k2 + b) = B1.col(a).cwiseProduct(B2.col(b));
  return T;
}

PenalizedTerm make_univariate_term(std::string name, const Eigen::MatrixXd& raw, Eigen::MatrixXd* Z) {
  const auto k = static_cast<int>(raw.cols());
  Eigen::MatrixXd C = raw.transpose() * Eigen::VectorXd::Ones(raw.rows());
  Eigen::MatrixXd z = constraint_null_space(C);
  PenalizedTerm term;
  term.name = std::move(name);
  term.design = raw * z;
  term.penalty = z.transpose() * difference_penalty(k) * z;
  term.penalty = 0.5 * (term.penalty + term.penalty.transpose()).eval();
  if (Z) *Z = std::move(z);
  return term;
}

PenalizedTerm make_interaction_term(std::string name, const Eigen::MatrixXd& raw1, const Eigen::MatrixXd& raw2,
                                    Eigen::MatrixXd* Z) {
  const auto k1 = static_cast<int>(raw1.cols()), k2 = static_cast<int>(raw2.cols());
  Eigen::MatrixXd T = row_kronecker(raw1, raw2);
  Eigen::MatrixXd margins(raw1.rows(), k1 + k2);
  margins << raw1, raw2;
  Eigen::MatrixXd C = kernels::gemm_tn(T, margins);
  const double norm = C.cwiseAbs().maxCoeff();
  if (norm > 0.0) C /= norm;
  Eigen::MatrixXd z = constraint_null_space(C);

  const Eigen::MatrixXd S1 = difference_penalty(k1), S2 = difference_penalty(k2);
  const int p = k1 * k2;
  Eigen::MatrixXd S = Eigen::MatrixXd::Zero(p, p);
  for (int a = 0; a < k1; ++a)
    for (int c = 0; c < k1; ++c)
      for (int b = 0; b < k2; ++b) S(a * k2 + b, c * k2 + b) += S1(a, c);
  for (int a = 0; a < k1; ++a)
    for (int b = 0; b < k2; ++b)
      for (int d = 0; d < k2; ++d) S(a * k2 + b, a * k2 + d) += S2(b, d);

  PenalizedTerm term;
  term.name = std::move(name);
  term.design = kernels::gemm(T, z);
  term.penalty = z.transpose() * S * z;
  term.penalty = 0.5 * (term.penalty + term.penalty.transpose()).eval();
  if (Z) *Z = std::move(z);
  return term;
}

std::vector<double> default_grid() {
  std::vector<double> g;
  for (int i = 0; i < 12; ++i) g.push_back(std::pow(10.0, -4.0 + 10.0 * i / 11.0));
  return g;
}

double criterion_value(Criterion criterion, double rss, double edf, double n) {
  if (criterion == Criterion::GCV) {
    double d = n - edf;
    if (!(d > 0.0)) return std::numeric_limits<double>::infinity();
    return n * rss / (d * d);
  }
  return n * std::log(rss / n) + std::log(n) * edf;
}

PenalizedSystem::PenalizedSystem(std::vector<PenalizedTerm> terms) {
  if (terms.empty()) fail(Errc::DimensionMismatch, "spline.fit", "no terms");
  const Eigen::Index n = terms.front().design.rows();
  Eigen::Index p = 1;
  for (const auto& t : terms) {
    if (t.design.rows() != n) fail(Errc::DimensionMismatch, "spline.fit", "term " + t.name + " has a different row count");
    if (t.penalty.rows() != t.design.cols() || t.penalty.cols() != t.design.cols())
      fail(Errc::DimensionMismatch, "spline.fit", "penalty of term " + t.name + " does not match its design");
    p += t.design.cols();
  }
  design_.resize(n, p);
  design_.col(0).setOnes();
  Eigen::Index o = 1;
  for (auto& t : terms) {
    design_.middleCols(o, t.design.cols()) = t.design;
    o += t.design.cols();
    names_.push_back(std::move(t.name));
    penalties_.push_back(std::move(t.penalty));
    t.design.resize(0, 0);
  }
  init();
}

PenalizedSystem::PenalizedSystem(std::vector<std::string> names, std::vector<Eigen::MatrixXd> penalties,
                                 Eigen::MatrixXd design)
    : names_(std::move(names)), penalties_(std::move(penalties)), design_(std::move(design)) {
  if (names_.empty() || names_.size() != penalties_.size())
    fail(Errc::DimensionMismatch, "spline.fit", "one penalty per named term required");
  Eigen::Index p = 1;
  for (const auto& S : penalties_) {
    if (S.rows() != S.cols()) fail(Errc::DimensionMismatch, "spline.fit", "penalty must be square");
    p += S.rows();
  }
  if (design_.cols() != p) fail(Errc::DimensionMismatch, "spline.fit", "design width differs from penalty blocks");
  init();
}

void PenalizedSystem::init() {
  if (design_.rows() == 0) fail(Errc::DimensionMismatch, "spline.fit", "no rows");
  Eigen::Index o = 1;
  for (std::size_t j = 0; j < penalties_.size(); ++j) {
    offsets_.push_back(o);
    widths_.push_back(penalties_[j].rows());
    o += penalties_[j].rows();
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(penalties_[j]);
    const double top = es.eigenvalues().size() ? es.eigenvalues().cwiseAbs().maxCoeff() : 0.0;
    std::vector<Eigen::Index> keep;
    for (Eigen::Index i = 0; i < es.eigenvalues().size(); ++i)
      if (es.eigenvalues()(i) > 1e-10 * std::max(top, 1e-300)) keep.push_back(i);
    Eigen::MatrixXd R(widths_[j], static_cast<Eigen::Index>(keep.size()));
    for (std::size_t c = 0; c < keep.size(); ++c)
      R.col(static_cast<Eigen::Index>(c)) = es.eigenvectors().col(keep[c]) * std::sqrt(es.eigenvalues()(keep[c]));
    penalty_roots_.push_back(std::move(R));
  }
  if (!design_.allFinite()) fail(Errc::DimensionMismatch, "spline.fit", "design contains non-finite values");
  gram_ = kernels::gram(design_);
}

Eigen::MatrixXd PenalizedSystem::penalized_matrix(std::span<const double> lambdas) const {
  if (lambdas.size() != names_.size()) fail(Errc::DimensionMismatch, "spline.fit", "one smoothing parameter per term");
  Eigen::MatrixXd A = gram_;
  for (std::size_t j = 0; j < names_.size(); ++j) {
    if (!(lambdas[j] >= 0.0) || !std::isfinite(lambdas[j]))
      fail(Errc::DimensionMismatch, "spline.fit", "smoothing parameter of " + names_[j] + " must be finite and >= 0");
    A.block(offsets_[j], offsets_[j], widths_[j], widths_[j]) += lambdas[j] * penalties_[j];
  }
  return A;
}

Eigen::MatrixXd PenalizedSystem::inverse(const Eigen::MatrixXd& A) const {
  const Eigen::Index p = A.rows();
  Eigen::LLT<Eigen::MatrixXd> llt(A);
  if (llt.info() == Eigen::Success) {
    const Eigen::VectorXd d = llt.matrixLLT().diagonal();
    const double ratio = d.minCoeff() / d.maxCoeff();
    if (ratio * ratio > 1e-13) {
      Eigen::MatrixXd inv = llt.solve(Eigen::MatrixXd::Identity(p, p));
      inv = 0.5 * (inv + inv.transpose()).eval();
      if (inv.allFinite()) return inv;
    }
  }
  // Near-singular: locate the weakest pivot to name the offending term.
  Eigen::LDLT<Eigen::MatrixXd> ldlt(A);
  const Eigen::VectorXd D = ldlt.vectorD();
  Eigen::Index worst = 0;
  D.minCoeff(&worst);
  Eigen::VectorXi perm = Eigen::VectorXi::LinSpaced(p, 0, static_cast<int>(p - 1));
  perm = ldlt.transpositionsP().transpose() * perm;
  const Eigen::Index col = perm(worst);
  std::string who = "intercept";
  for (std::size_t j = 0; j < names_.size(); ++j)
    if (col >= offsets_[j] && col < offsets_[j] + widths_[j]) who = names_[j];
  fail(Errc::SingularSystem, "spline.fit", "penalized normal equations are singular near term " + who);
}

FitResult PenalizedSystem::fit(const Eigen::VectorXd& y, std::span<const double> lambdas, const FitOptions& options) const {
  if (y.size() != rows()) fail(Errc::DimensionMismatch, "spline.fit", "response length differs from design rows");
  if (!y.allFinite()) fail(Errc::DimensionMismatch, "spline.fit", "response contains non-finite values");
  const Eigen::MatrixXd Ainv = inverse(penalized_matrix(lambdas));
  const Eigen::VectorXd c = design_.transpose() * y;
  const Eigen::VectorXd beta = Ainv * c;

  FitResult r;
  r.lambdas.assign(lambdas.begin(), lambdas.end());
  r.intercept = beta(0);
  r.fitted = design_ * beta;
  r.rss = (y - r.fitted).squaredNorm();
  r.edf_total = 0.0;
  for (Eigen::Index i = 0; i < cols(); ++i) r.edf_total += Ainv.row(i).dot(gram_.row(i));
  for (std::size_t j = 0; j < names_.size(); ++j) {
    const Eigen::Index o = offsets_[j], w = widths_[j];
    r.term_coefficients.push_back(beta.segment(o, w));
    r.term_edf.push_back(Ainv.middleRows(o, w).cwiseProduct(gram_.middleRows(o, w)).sum());
    if (options.compute_covariance) r.term_covariance.push_back(Ainv.block(o, o, w, w));
  }
  const double dof = static_cast<double>(rows()) - r.edf_total;
  r.scale = dof > 0.0 ? r.rss / dof : std::numeric_limits<double>::quiet_NaN();
  if (options.compute_hat) r.hat_diagonal = kernels::row_quadratic(design_, Ainv);
  return r;
}

Selection PenalizedSystem::select(const Eigen::VectorXd& y, const SelectionOptions& options) const {
  if (y.size() != rows()) fail(Errc::DimensionMismatch, "spline.select", "response length differs from design rows");
  if (!y.allFinite()) fail(Errc::DimensionMismatch, "spline.select", "response contains non-finite values");
  std::vector<double> grid = options.grid.empty() ? default_grid() : options.grid;
  std::sort(grid.begin(), grid.end());
  if (!(grid.front() >= 0.0)) fail(Errc::DimensionMismatch, "spline.select", "grid values must be >= 0");
  const std::size_t m = names_.size();
  const double n = static_cast<double>(rows());
  const Eigen::VectorXd c = design_.transpose() * y;
  const double yy = y.squaredNorm();
  const double rss_floor = std::max(1e-14 * yy, 1e-300);

  std::vector<std::size_t> idx(m, grid.size() - 1);
  std::vector<double> lam(m, grid.back());
  Selection sel;

  for (int sweep = 0; sweep < std::max(1, options.max_sweeps); ++sweep) {
    sel.sweeps = sweep + 1;
    Eigen::MatrixXd Ainv = inverse(penalized_matrix(lam));
    Eigen::VectorXd beta = Ainv * c;
    double bc = beta.dot(c);
    double bHb = beta.dot(gram_ * beta);
    double edf = Ainv.cwiseProduct(gram_).sum();
    double crit = criterion_value(options.criterion, std::max(yy - 2 * bc + bHb, rss_floor), edf, n);
    bool changed = false;

    for (std::size_t j = 0; j < m; ++j) {
      const Eigen::MatrixXd& U = penalty_roots_[j];
      if (U.cols() == 0) continue;
      const Eigen::MatrixXd P = Ainv.middleCols(offsets_[j], widths_[j]) * U;
      Eigen::MatrixXd M = U.transpose() * P.middleRows(offsets_[j], widths_[j]);
      M = 0.5 * (M + M.transpose()).eval();
      Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(M);
      const Eigen::VectorXd mu = es.eigenvalues().cwiseMax(0.0);
      const Eigen::MatrixXd G = P * es.eigenvectors();
      // H A^-1 = I - S(lambda) A^-1 with S block diagonal, so H G never
      // needs a dense p x p product.
      Eigen::MatrixXd HP(P.rows(), P.cols());
      HP.row(0).setZero();
      for (std::size_t i = 0; i < m; ++i)
        HP.middleRows(offsets_[i], widths_[i]).noalias() = -lam[i] * penalties_[i] * P.middleRows(offsets_[i], widths_[i]);
      HP.middleRows(offsets_[j], widths_[j]) += U;
      const Eigen::MatrixXd HG = HP * es.eigenvectors();
      const Eigen::MatrixXd K = G.transpose() * HG;
      const Eigen::VectorXd g = G.transpose() * c;
      const Eigen::VectorXd e = HG.transpose() * beta;

      auto weights = [&](double lambda, Eigen::VectorXd& w) {
        const double delta = lambda - lam[j];
        w.resize(mu.size());
        for (Eigen::Index i = 0; i < mu.size(); ++i) {
          const double den = 1.0 + delta * mu(i);
          if (!(den > 1e-12)) return false;
          w(i) = delta / den;
        }
        return true;
      };

      std::vector<double> crits(grid.size(), std::numeric_limits<double>::infinity());
      std::vector<double> edfs(grid.size(), std::numeric_limits<double>::quiet_NaN());
      Eigen::VectorXd w;
      for (std::size_t l = 0; l < grid.size(); ++l) {
        if (!weights(grid[l], w)) continue;
        const Eigen::VectorXd v = w.cwiseProduct(g);
        const double bc_l = bc - v.dot(g);
        const double bHb_l = bHb - 2 * v.dot(e) + v.dot(K * v);
        const double rss_l = std::max(yy - 2 * bc_l + bHb_l, rss_floor);
        edfs[l] = edf - w.dot(K.diagonal());
        crits[l] = criterion_value(options.criterion, rss_l, edfs[l], n);
      }
      for (std::size_t l = 1; l < grid.size(); ++l)
        if (edfs[l] > edfs[l - 1] + 1e-8 * std::max(1.0, std::abs(edfs[l - 1]))) sel.edf_monotone = false;

      // ties go to the larger smoothing parameter
      std::size_t best = idx[j];
      double best_crit = crits[idx[j]];
      for (std::size_t l = grid.size(); l-- > 0;)
        if (crits[l] < best_crit - 1e-12 * std::abs(best_crit)) {
          best = l;
          best_crit = crits[l];
        }
      if (best == idx[j]) continue;

      weights(grid[best], w);
      const Eigen::VectorXd v = w.cwiseProduct(g);
      const double bc_new = bc - v.dot(g);
      const double bHb_new = bHb - 2 * v.dot(e) + v.dot(K * v);
      beta -= G * v;
      Ainv -= kernels::gemm(G * w.asDiagonal(), G.transpose());
      bc = bc_new;
      bHb = bHb_new;
      edf = edfs[best];
      crit = best_crit;
      idx[j] = best;
      lam[j] = grid[best];
      changed = true;
    }
    sel.criterion = crit;
    if (!changed) break;
  }
  sel.lambdas = lam;
  return sel;
}

FitResult fit_penalized_ls(const std::vector<PenalizedTerm>& terms, const Eigen::VectorXd& y, const FitOptions& options) {
  std::vector<double> lambdas;
  for (const auto& t : terms) lambdas.push_back(t.lambda);
  PenalizedSystem sys(terms);
  return sys.fit(y, lambdas, options);
}

Selection select_smoothing(const std::vector<PenalizedTerm>& terms, const Eigen::VectorXd& y,
                           const SelectionOptions& options) {
  PenalizedSystem sys(terms);
  return sys.select(y, options);
}

}  // namespace peakload::spline
