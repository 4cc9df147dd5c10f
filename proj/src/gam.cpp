#include "peakload/gam.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <fstream>
#include <limits>
#include <map>
#include <memory>
#include <set>
#include <sstream>

#include "json.hpp"
#include "peakload/csv.hpp"
#include "peakload/errors.hpp"
#include "peakload/kernels.hpp"

namespace peakload::gam {

using nlohmann::json;

namespace {

constexpr double kNaN = std::numeric_limits<double>::quiet_NaN();

std::string lower(std::string_view s) {
  std::string out(s);
  for (auto& c : out) c = static_cast<char>(std::tolower(static_cast<unsigned char>(c)));
  return out;
}

Eigen::VectorXd column_values(const Eigen::MatrixXd& X, int column, bool absolute_wind) {
  if (column < 0 || column >= X.cols())
    fail(Errc::MissingColumn, "gam.predict", "matrix has no column " + std::to_string(column));
  if (absolute_wind && column == kWindN) {
    if (X.cols() <= kWindE) fail(Errc::MissingColumn, "gam.predict", "matrix has no windE column");
    return (X.col(kWindN).array().square() + X.col(kWindE).array().square()).sqrt();
  }
  return X.col(column);
}

std::vector<double> to_std(const Eigen::VectorXd& v) { return {v.data(), v.data() + v.size()}; }

std::vector<double> discretize(const std::vector<double>& v, int bins) {
  if (bins <= 0 || v.empty()) return v;
  const auto [lo_it, hi_it] = std::minmax_element(v.begin(), v.end());
  const double lo = *lo_it, hi = *hi_it;
  if (!(hi > lo)) return v;
  const double width = (hi - lo) / bins;
  std::vector<double> out(v.size());
  for (std::size_t i = 0; i < v.size(); ++i) {
    int b = std::min(bins - 1, static_cast<int>((v[i] - lo) / width));
    out[i] = lo + (b + 0.5) * width;
  }
  return out;
}

json matrix_json(const Eigen::MatrixXd& M) {
  json rows = json::array();
  for (Eigen::Index r = 0; r < M.rows(); ++r) {
    json row = json::array();
    for (Eigen::Index c = 0; c < M.cols(); ++c) row.push_back(M(r, c));
    rows.push_back(std::move(row));
  }
  return rows;
}

Eigen::MatrixXd matrix_from(const json& j) {
  const auto r = static_cast<Eigen::Index>(j.size());
  const auto c = r ? static_cast<Eigen::Index>(j.at(0).size()) : 0;
  Eigen::MatrixXd M(r, c);
  for (Eigen::Index i = 0; i < r; ++i) {
    if (static_cast<Eigen::Index>(j.at(i).size()) != c) fail(Errc::BadSchema, "gam.load", "ragged matrix");
    for (Eigen::Index k = 0; k < c; ++k) M(i, k) = j.at(i).at(k).is_null() ? kNaN : j.at(i).at(k).get<double>();
  }
  return M;
}

json vector_json(const Eigen::VectorXd& v) {
  json a = json::array();
  for (Eigen::Index i = 0; i < v.size(); ++i) a.push_back(v(i));
  return a;
}

Eigen::VectorXd vector_from(const json& j) {
  Eigen::VectorXd v(static_cast<Eigen::Index>(j.size()));
  for (Eigen::Index i = 0; i < v.size(); ++i) v(i) = j.at(i).is_null() ? kNaN : j.at(i).get<double>();
  return v;
}

}  // namespace

std::string_view variant_name(Variant v) noexcept {
  switch (v) {
    case Variant::Full: return "full";
    case Variant::Red: return "red";
    case Variant::Simple: return "simple";
    case Variant::NoWeather: return "noweather";
  }
  return "?";
}

std::string_view target_name(Target t) noexcept { return t == Target::Min ? "min" : "max"; }

Variant parse_variant(std::string_view text) {
  std::string s = lower(text);
  if (s.rfind("gam.", 0) == 0) s = s.substr(4);
  if (s == "full") return Variant::Full;
  if (s == "red") return Variant::Red;
  if (s == "simple") return Variant::Simple;
  if (s == "noweather") return Variant::NoWeather;
  fail(Errc::UnknownVariant, "gam.build_spec", "unknown GAM variant '" + std::string(text) + "'");
}

Target parse_target(std::string_view text) {
  const std::string s = lower(text);
  if (s == "min") return Target::Min;
  if (s == "max") return Target::Max;
  fail(Errc::Usage, "gam.build_spec", "target must be min or max, got '" + std::string(text) + "'");
}

std::size_t GamSpec::basis_columns() const noexcept {
  return univariate.size() * static_cast<std::size_t>(k0) +
         interactions.size() * static_cast<std::size_t>(k1) * static_cast<std::size_t>(k2);
}

std::string column_name(int column, bool absolute_wind) {
  if (absolute_wind && column == kWindN) return "wind_speed";
  return std::string(kInputNames.at(static_cast<std::size_t>(column)));
}

GamSpec build_spec(Variant variant, Target target, bool absolute_wind) {
  GamSpec spec;
  spec.variant = variant;
  spec.target = target;
  spec.absolute_wind = absolute_wind;
  auto usable = [&](int c) {
    if (absolute_wind && c == kWindE) return false;
    if (variant == Variant::NoWeather && is_weather_input(c)) return false;
    return true;
  };
  if (variant == Variant::Simple) {
    spec.univariate = {kLoad, kDsocd, kSolar};
    return spec;
  }
  for (int c = 0; c < kNumInputs; ++c)
    if (usable(c)) spec.univariate.push_back(c);
  if (variant == Variant::Full || variant == Variant::NoWeather) {
    for (std::size_t a = 0; a < spec.univariate.size(); ++a)
      for (std::size_t b = a + 1; b < spec.univariate.size(); ++b)
        spec.interactions.emplace_back(spec.univariate[a], spec.univariate[b]);
  } else {
    std::set<std::pair<int, int>> seen;
    for (int crucial : {static_cast<int>(kLoad), static_cast<int>(kDsocd), static_cast<int>(kSolar)}) {
      for (int c : spec.univariate) {
        if (c == crucial) continue;
        auto key = std::minmax(c, crucial);
        if (!seen.insert(key).second) continue;
        spec.interactions.emplace_back(crucial, c);
      }
    }
  }
  return spec;
}

Eigen::MatrixXd TermFit::raw_design(const Eigen::MatrixXd& X, bool absolute_wind) const {
  const Eigen::VectorXd a = column_values(X, column_a, absolute_wind);
  Eigen::MatrixXd Ba = basis_a.eval(to_std(a));
  if (!is_interaction()) return Ba;
  const Eigen::VectorXd b = column_values(X, column_b, absolute_wind);
  return spline::row_kronecker(Ba, basis_b.eval(to_std(b)));
}

namespace {

struct Prepared {
  std::vector<TermFit> terms;
  std::vector<Eigen::MatrixXd> constraints;
  std::vector<std::string> dropped;
  std::vector<std::string> warnings;
  std::vector<std::size_t> rows;
  std::unique_ptr<spline::PenalizedSystem> system;
};

Prepared prepare(const GamSpec& spec, const FeatureMatrix& matrix, const GamOptions& options) {
  const char* where = "gam.fit";
  if (spec.univariate.empty() && spec.interactions.empty()) fail(Errc::InvalidConfig, where, "spec has no terms");
  if (spec.k0 < 4 || spec.k1 < 4 || spec.k2 < 4) fail(Errc::InvalidConfig, where, "basis dimensions must be >= 4");
  Prepared prep;
  prep.rows = matrix.trainable_rows();
  const std::size_t n = prep.rows.size();
  if (n < 3) fail(Errc::InsufficientData, where, "only " + std::to_string(n) + " trainable rows");
  if (2 * n < spec.basis_columns() + 1)
    prep.warnings.push_back("fewer than one row per two basis columns (" + std::to_string(n) + " rows, " +
                            std::to_string(spec.basis_columns()) + " columns)");

  std::set<int> needed(spec.univariate.begin(), spec.univariate.end());
  for (auto [a, b] : spec.interactions) {
    needed.insert(a);
    needed.insert(b);
  }
  const FeatureMatrix sub = matrix.select_rows(prep.rows);
  std::map<int, std::vector<double>> values, fit_values;
  std::set<int> constant;
  for (int c : needed) {
    values[c] = to_std(column_values(sub.X, c, spec.absolute_wind));
    const auto [lo, hi] = std::minmax_element(values[c].begin(), values[c].end());
    if (!(*hi - *lo > 1e-12 * std::max(1.0, std::abs(*hi)))) constant.insert(c);
    fit_values[c] = discretize(values[c], options.discretize_bins);
  }

  std::map<std::pair<int, int>, spline::BSplineBasis> bases;
  std::map<std::pair<int, int>, Eigen::MatrixXd> raw;
  auto basis = [&](int c, int k) -> const spline::BSplineBasis& {
    auto key = std::make_pair(c, k);
    auto it = bases.find(key);
    if (it == bases.end()) {
      it = bases.emplace(key, spline::BSplineBasis::from_data(values[c], k, options.knots)).first;
      raw.emplace(key, it->second.eval(fit_values[c]));
    }
    return it->second;
  };

  std::vector<std::string> names;
  std::vector<Eigen::MatrixXd> penalties;
  Eigen::Index width = 1;
  for (int c : spec.univariate) {
    const std::string name = column_name(c, spec.absolute_wind);
    if (constant.count(c)) {
      prep.dropped.push_back(name);
      continue;
    }
    TermFit t;
    t.name = name;
    t.column_a = c;
    t.basis_a = basis(c, spec.k0);
    Eigen::MatrixXd Z;
    auto term = spline::make_univariate_term(name, raw.at({c, spec.k0}), &Z);
    t.width = static_cast<int>(Z.cols());
    width += Z.cols();
    names.push_back(name);
    penalties.push_back(std::move(term.penalty));
    prep.constraints.push_back(std::move(Z));
    prep.terms.push_back(std::move(t));
  }
  for (auto [a, b] : spec.interactions) {
    const std::string name = column_name(a, spec.absolute_wind) + ":" + column_name(b, spec.absolute_wind);
    if (constant.count(a) || constant.count(b)) {
      prep.dropped.push_back(name);
      continue;
    }
    TermFit t;
    t.name = name;
    t.column_a = a;
    t.column_b = b;
    t.basis_a = basis(a, spec.k1);
    t.basis_b = basis(b, spec.k2);
    Eigen::MatrixXd Z;
    auto term = spline::make_interaction_term(name, raw.at({a, spec.k1}), raw.at({b, spec.k2}), &Z);
    t.width = static_cast<int>(Z.cols());
    width += Z.cols();
    names.push_back(name);
    penalties.push_back(std::move(term.penalty));
    prep.constraints.push_back(std::move(Z));
    prep.terms.push_back(std::move(t));
  }
  if (prep.terms.empty()) fail(Errc::InsufficientData, where, "every term has a constant input");

  Eigen::MatrixXd design(static_cast<Eigen::Index>(n), width);
  design.col(0).setOnes();
  Eigen::Index o = 1;
  for (std::size_t j = 0; j < prep.terms.size(); ++j) {
    const auto& t = prep.terms[j];
    const auto& Z = prep.constraints[j];
    if (t.is_interaction()) {
      design.middleCols(o, Z.cols()) =
          kernels::gemm(spline::row_kronecker(raw.at({t.column_a, spec.k1}), raw.at({t.column_b, spec.k2})), Z);
    } else {
      design.middleCols(o, Z.cols()) = raw.at({t.column_a, spec.k0}) * Z;
    }
    o += Z.cols();
  }
  raw.clear();
  prep.system = std::make_unique<spline::PenalizedSystem>(std::move(names), std::move(penalties), std::move(design));
  return prep;
}

GamFit finish(const GamSpec& spec, Target target, const Prepared& prep, const FeatureMatrix& matrix,
              const GamOptions& options) {
  Eigen::VectorXd y(static_cast<Eigen::Index>(prep.rows.size()));
  for (std::size_t i = 0; i < prep.rows.size(); ++i) {
    const auto r = static_cast<Eigen::Index>(prep.rows[i]);
    y(static_cast<Eigen::Index>(i)) = target == Target::Min ? matrix.y_min(r) : matrix.y_max(r);
  }
  const auto& sys = *prep.system;
  const auto sel = sys.select(y, options.selection);
  spline::FitOptions fo;
  fo.compute_hat = false;
  const auto res = sys.fit(y, sel.lambdas, fo);

  GamFit out;
  out.spec = spec;
  out.spec.target = target;
  out.dropped_terms = prep.dropped;
  out.warnings = prep.warnings;
  out.intercept = res.intercept;
  out.scale = res.scale;
  out.rss = res.rss;
  out.edf_total = res.edf_total;
  out.rows = prep.rows.size();
  out.training_rmse = std::sqrt(res.rss / static_cast<double>(prep.rows.size()));
  out.criterion = sel.criterion;
  out.sweeps = sel.sweeps;
  out.edf_monotone = sel.edf_monotone;
  if (!sel.edf_monotone) out.warnings.push_back("EDF was not monotone in lambda during selection");
  out.terms = prep.terms;
  for (std::size_t j = 0; j < out.terms.size(); ++j) {
    const auto& Z = prep.constraints[j];
    auto& t = out.terms[j];
    t.coefficients = Z * res.term_coefficients[j];
    t.covariance = Z * res.term_covariance[j] * Z.transpose();
    t.lambda = res.lambdas[j];
    t.edf = res.term_edf[j];
  }
  return out;
}

}  // namespace

GamFit fit(const GamSpec& spec, const FeatureMatrix& matrix, const GamOptions& options) {
  const auto prep = prepare(spec, matrix, options);
  return finish(spec, spec.target, prep, matrix, options);
}

std::pair<GamFit, GamFit> fit_both(const GamSpec& spec, const FeatureMatrix& matrix, const GamOptions& options) {
  const auto prep = prepare(spec, matrix, options);
  GamFit lo = finish(spec, Target::Min, prep, matrix, options);
  GamFit hi = finish(spec, Target::Max, prep, matrix, options);
  return {std::move(lo), std::move(hi)};
}

Eigen::VectorXd predict_term(const GamFit& fit, std::size_t term, const FeatureMatrix& matrix) {
  const auto& t = fit.terms.at(term);
  if (matrix.rows() == 0) return Eigen::VectorXd(0);
  return t.raw_design(matrix.X, fit.spec.absolute_wind) * t.coefficients;
}

Eigen::VectorXd predict(const GamFit& fit, const FeatureMatrix& matrix) {
  for (const auto& t : fit.terms) {
    const int need = std::max(t.column_a, t.column_b);
    if (need >= matrix.X.cols())
      fail(Errc::MissingColumn, "gam.predict", "matrix lacks column " + column_name(need, fit.spec.absolute_wind));
  }
  Eigen::VectorXd out = Eigen::VectorXd::Constant(static_cast<Eigen::Index>(matrix.rows()), fit.intercept);
  for (std::size_t j = 0; j < fit.terms.size(); ++j) out += predict_term(fit, j, matrix);
  return out;
}

std::vector<TermStat> term_stats(const GamFit& fit) {
  if (!(fit.scale > 0.0) || !std::isfinite(fit.scale))
    fail(Errc::ZeroScale, "gam.term_stats", "residual scale is zero or undefined");
  std::vector<TermStat> out;
  for (const auto& t : fit.terms) {
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(t.covariance);
    const Eigen::VectorXd& ev = es.eigenvalues();
    const Eigen::VectorXd proj = es.eigenvectors().transpose() * t.coefficients;
    const double top = ev.size() ? ev.maxCoeff() : 0.0;
    double q = 0.0;
    // the largest `width` eigenvalues span the constrained parameter space
    for (Eigen::Index i = ev.size() - 1, used = 0; i >= 0 && used < t.width; --i, ++used)
      if (ev(i) > 1e-13 * top) q += proj(i) * proj(i) / ev(i);
    TermStat s;
    s.term = t.name;
    s.edf = t.edf;
    s.f = t.edf > 0.0 ? (q / t.edf) / fit.scale : 0.0;
    s.low_edf = t.edf < 0.5;
    out.push_back(std::move(s));
  }
  std::stable_sort(out.begin(), out.end(), [](const TermStat& a, const TermStat& b) {
    if (a.edf != b.edf) return a.edf > b.edf;
    return a.term < b.term;
  });
  return out;
}

std::string format_term_stats_csv(const std::vector<TermStat>& stats, std::string_view header_comment) {
  std::string out(header_comment);
  out += "term,edf,approx_f,low_edf\n";
  for (const auto& s : stats) {
    out += s.term + ',' + csv::format_double(s.edf) + ',' + csv::format_double(s.f) + (s.low_edf ? ",1\n" : ",0\n");
  }
  return out;
}

namespace {

json basis_json(const spline::BSplineBasis& b) { return b.knots(); }

}  // namespace

std::string to_json(const GamFit& fit) {
  json j;
  j["kind"] = "gam";
  j["format"] = 1;
  const auto& s = fit.spec;
  j["spec"] = {{"variant", variant_name(s.variant)}, {"target", target_name(s.target)}, {"univariate", s.univariate},
               {"interactions", s.interactions}, {"k0", s.k0}, {"k1", s.k1}, {"k2", s.k2},
               {"absolute_wind", s.absolute_wind}};
  j["intercept"] = fit.intercept;
  j["scale"] = fit.scale;
  j["rss"] = fit.rss;
  j["edf_total"] = fit.edf_total;
  j["training_rmse"] = fit.training_rmse;
  j["rows"] = fit.rows;
  j["criterion"] = fit.criterion;
  j["sweeps"] = fit.sweeps;
  j["edf_monotone"] = fit.edf_monotone;
  j["dropped_terms"] = fit.dropped_terms;
  j["warnings"] = fit.warnings;
  json terms = json::array();
  for (const auto& t : fit.terms) {
    json tj = {{"name", t.name}, {"column_a", t.column_a}, {"column_b", t.column_b}, {"width", t.width},
               {"lambda", t.lambda}, {"edf", t.edf}, {"knots_a", basis_json(t.basis_a)},
               {"coefficients", vector_json(t.coefficients)}, {"covariance", matrix_json(t.covariance)}};
    if (t.is_interaction()) tj["knots_b"] = basis_json(t.basis_b);
    terms.push_back(std::move(tj));
  }
  j["terms"] = std::move(terms);
  return j.dump(1) + "\n";
}

GamFit from_json(std::string_view text) {
  const char* where = "gam.load";
  GamFit fit;
  try {
    const json j = json::parse(text);
    if (j.at("kind") != "gam") fail(Errc::BadSchema, where, "document is not a GAM fit");
    const auto& s = j.at("spec");
    fit.spec.variant = parse_variant(s.at("variant").get<std::string>());
    fit.spec.target = parse_target(s.at("target").get<std::string>());
    fit.spec.univariate = s.at("univariate").get<std::vector<int>>();
    fit.spec.interactions = s.at("interactions").get<std::vector<std::pair<int, int>>>();
    fit.spec.k0 = s.at("k0");
    fit.spec.k1 = s.at("k1");
    fit.spec.k2 = s.at("k2");
    fit.spec.absolute_wind = s.at("absolute_wind");
    auto num = [](const json& v) { return v.is_null() ? kNaN : v.get<double>(); };
    fit.intercept = num(j.at("intercept"));
    fit.scale = num(j.at("scale"));
    fit.rss = num(j.at("rss"));
    fit.edf_total = num(j.at("edf_total"));
    fit.training_rmse = num(j.at("training_rmse"));
    fit.rows = j.at("rows");
    fit.criterion = num(j.at("criterion"));
    fit.sweeps = j.at("sweeps");
    fit.edf_monotone = j.at("edf_monotone");
    fit.dropped_terms = j.at("dropped_terms").get<std::vector<std::string>>();
    fit.warnings = j.at("warnings").get<std::vector<std::string>>();
    for (const auto& tj : j.at("terms")) {
      TermFit t;
      t.name = tj.at("name");
      t.column_a = tj.at("column_a");
      t.column_b = tj.at("column_b");
      t.width = tj.at("width");
      t.lambda = num(tj.at("lambda"));
      t.edf = num(tj.at("edf"));
      t.basis_a = spline::BSplineBasis::from_knots(tj.at("knots_a").get<std::vector<double>>());
      if (t.is_interaction()) t.basis_b = spline::BSplineBasis::from_knots(tj.at("knots_b").get<std::vector<double>>());
      t.coefficients = vector_from(tj.at("coefficients"));
      t.covariance = matrix_from(tj.at("covariance"));
      const Eigen::Index expect = t.is_interaction() ? static_cast<Eigen::Index>(t.basis_a.dim()) * t.basis_b.dim()
                                                     : t.basis_a.dim();
      if (t.coefficients.size() != expect) fail(Errc::BadSchema, where, "coefficient count mismatch in " + t.name);
      fit.terms.push_back(std::move(t));
    }
  } catch (const json::exception& e) {
    fail(Errc::BadSchema, where, e.what());
  }
  return fit;
}

void save(const GamFit& fit, const std::string& path) { csv::write_atomic(path, to_json(fit)); }

GamFit load(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) fail(Errc::Io, "gam.load", "cannot open " + path);
  std::stringstream ss;
  ss << in.rdbuf();
  return from_json(ss.str());
}

}  // namespace peakload::gam
