#include "peakload/features.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include "peakload/errors.hpp"

namespace peakload {
namespace {

constexpr double kNaN = std::numeric_limits<double>::quiet_NaN();

std::optional<std::size_t> last_finite(std::span<const double> v) {
  for (std::size_t i = v.size(); i > 0; --i) {
    if (std::isfinite(v[i - 1])) return i - 1;
  }
  return std::nullopt;
}

}  // namespace

const std::array<std::string_view, kNumInputs> kInputNames = {
    "load_lag1",   "load",        "load_lead1",  "dsocd_lag4", "dsocd_lag3", "dsocd_lag2", "dsocd_lag1",
    "dsocd",       "dsocd_lead1", "dsocd_lead2", "dsocd_lead3", "dsocd_lead4", "temp",      "solar",
    "windN",       "windE",       "press",       "humid",       "day_hour",    "week_hour", "year_hour"};

std::optional<int> input_index(std::string_view name) noexcept {
  for (int i = 0; i < kNumInputs; ++i) {
    if (kInputNames[i] == name) return i;
  }
  return std::nullopt;
}

bool is_weather_input(int column) noexcept { return column >= kTemp && column <= kHumid; }

std::vector<double> dsocd(std::span<const double> load) {
  if (load.size() < 3) {
    fail(Errc::SeriesTooShort, "features.dsocd", "need at least 3 values, got " + std::to_string(load.size()));
  }
  std::vector<double> out(load.size(), kNaN);
  for (std::size_t t = 1; t + 1 < load.size(); ++t) {
    out[t] = load[t - 1] - 2.0 * load[t] + load[t + 1];
  }
  return out;
}

std::vector<int> slot_phases(const TimeSeriesFrame& frame, PhaseConvention convention) {
  std::vector<int> phases(frame.size());
  for (std::size_t i = 0; i < phases.size(); ++i) {
    const int slot = static_cast<int>(day_hour(frame.timestamp(i)) * 2.0 + 0.5);
    phases[i] = ((slot + convention.offset) % kSlotsPerDay + kSlotsPerDay) % kSlotsPerDay;
  }
  return phases;
}

std::vector<double> adjusted_dsocd(std::span<const double> raw, std::span<const int> phases, DsocdMode mode) {
  if (raw.size() != phases.size()) {
    fail(Errc::DimensionMismatch, "features.adjusted_dsocd", "phase vector length differs from series");
  }
  const auto n = static_cast<std::ptrdiff_t>(raw.size());
  auto at = [&](std::ptrdiff_t i) { return (i >= 0 && i < n) ? raw[static_cast<std::size_t>(i)] : kNaN; };
  auto blend = [&](std::ptrdiff_t a, double wa, std::ptrdiff_t b, double wb) {
    const double va = at(a), vb = at(b);
    return (std::isfinite(va) && std::isfinite(vb)) ? wa * va + wb * vb : kNaN;
  };
  std::vector<double> out(raw.size());
  for (std::ptrdiff_t t = 0; t < n; ++t) {
    const int phase = phases[static_cast<std::size_t>(t)];
    if (phase == 0) {
      out[static_cast<std::size_t>(t)] = blend(t - 2, 1.0 / 3.0, t + 1, 2.0 / 3.0);
    } else if (phase == kSlotsPerDay - 1) {
      out[static_cast<std::size_t>(t)] = mode == DsocdMode::Consistent ? blend(t - 1, 2.0 / 3.0, t + 2, 1.0 / 3.0)
                                                                       : blend(t - 2, 2.0 / 3.0, t + 1, 1.0 / 3.0);
    } else {
      out[static_cast<std::size_t>(t)] = raw[static_cast<std::size_t>(t)];
    }
  }
  return out;
}

std::vector<std::size_t> FeatureMatrix::trainable_rows() const {
  std::vector<std::size_t> out;
  out.reserve(rows());
  for (std::size_t i = 0; i < rows(); ++i) {
    if (row_valid[i] && std::isfinite(y_min[static_cast<Eigen::Index>(i)]) &&
        std::isfinite(y_max[static_cast<Eigen::Index>(i)])) {
      out.push_back(i);
    }
  }
  return out;
}

FeatureMatrix FeatureMatrix::select_rows(std::span<const std::size_t> rows_in) const {
  FeatureMatrix out;
  const auto n = static_cast<Eigen::Index>(rows_in.size());
  out.X.resize(n, X.cols());
  out.y_min.resize(n);
  out.y_max.resize(n);
  out.timestamps.reserve(rows_in.size());
  for (Eigen::Index k = 0; k < n; ++k) {
    const auto r = static_cast<Eigen::Index>(rows_in[static_cast<std::size_t>(k)]);
    out.X.row(k) = X.row(r);
    out.y_min[k] = y_min[r];
    out.y_max[k] = y_max[r];
    out.timestamps.push_back(timestamps[static_cast<std::size_t>(r)]);
    out.row_valid.push_back(row_valid[static_cast<std::size_t>(r)]);
    out.imputed.push_back(imputed[static_cast<std::size_t>(r)]);
  }
  return out;
}

FeatureMatrix FeatureMatrix::slice(std::size_t begin, std::size_t end) const {
  if (begin > end || end > rows()) fail(Errc::RangeOutsideData, "features.slice", "row range outside matrix");
  std::vector<std::size_t> idx(end - begin);
  for (std::size_t i = 0; i < idx.size(); ++i) idx[i] = begin + i;
  return select_rows(idx);
}

std::size_t FeatureMatrix::lower_bound(Timestamp t) const {
  return static_cast<std::size_t>(std::lower_bound(timestamps.begin(), timestamps.end(), t) - timestamps.begin());
}

FeatureMatrix build_matrix(const TimeSeriesFrame& frame, const CalendarInputs& calendar,
                           const FeatureOptions& options) {
  return build_matrix(frame, calendar, options, 0, frame.size());
}

FeatureMatrix build_matrix(const TimeSeriesFrame& frame, const CalendarInputs& calendar,
                           const FeatureOptions& options, std::size_t row_begin, std::size_t row_end) {
  const char* where = "features.build_matrix";
  if (row_begin > row_end || row_end > frame.size()) {
    fail(Errc::RangeOutsideData, where,
         "rows [" + std::to_string(row_begin) + ", " + std::to_string(row_end) + ") outside frame of " +
             std::to_string(frame.size()));
  }
  if (calendar.day_hour.size() != frame.size()) {
    fail(Errc::DimensionMismatch, where, "calendar length differs from frame");
  }
  const auto& load = frame.load;
  const auto raw = dsocd(load);
  const auto phases = slot_phases(frame, options.phase);
  const auto adjusted = adjusted_dsocd(raw, phases, options.mode);
  const auto load_last = last_finite(load);
  const auto adj_last = last_finite(adjusted);
  const auto n = static_cast<std::ptrdiff_t>(frame.size());

  FeatureMatrix m;
  const auto rows = static_cast<Eigen::Index>(row_end - row_begin);
  m.X.resize(rows, kNumInputs);
  m.y_min.setConstant(rows, kNaN);
  m.y_max.setConstant(rows, kNaN);
  m.row_valid.assign(static_cast<std::size_t>(rows), 0);
  m.imputed.assign(static_cast<std::size_t>(rows), 0);
  m.timestamps.reserve(static_cast<std::size_t>(rows));

  const bool targets = frame.has_targets();
  const bool weather = frame.has_weather();
  for (Eigen::Index r = 0; r < rows; ++r) {
    const auto t = static_cast<std::ptrdiff_t>(row_begin) + r;
    const auto ti = static_cast<std::size_t>(t);
    m.timestamps.push_back(frame.timestamp(ti));
    const bool row_observed = std::isfinite(load[ti]);
    bool imputed = false;
    // Entries past the last observation of a series are filled with its last value.
    auto pick = [&](const std::vector<double>& series, const std::optional<std::size_t>& last, std::ptrdiff_t idx,
                    bool may_impute) {
      if (idx < 0) return kNaN;
      if (may_impute && row_observed && last && idx > static_cast<std::ptrdiff_t>(*last)) {
        imputed = true;
        return series[*last];
      }
      return idx < n ? series[static_cast<std::size_t>(idx)] : kNaN;
    };
    auto row = m.X.row(r);
    row[kLoadLag1] = pick(load, load_last, t - 1, false);
    row[kLoad] = load[ti];
    row[kLoadLead1] = pick(load, load_last, t + 1, true);
    // Near the end even lagged adjusted values can depend on slots past the data.
    for (int k = -4; k <= 4; ++k) row[kDsocd + k] = pick(adjusted, adj_last, t + k, true);
    for (int c = 0; c < kWeatherChannels; ++c) row[kTemp + c] = weather ? frame.weather[c][ti] : kNaN;
    row[kDayHour] = calendar.day_hour[ti];
    row[kWeekHour] = calendar.week_hour[ti];
    row[kYearHour] = calendar.year_hour[ti];

    m.row_valid[static_cast<std::size_t>(r)] = row.allFinite() ? 1 : 0;
    m.imputed[static_cast<std::size_t>(r)] = imputed ? 1 : 0;
    if (targets && row_observed) {
      m.y_min[r] = frame.load_min[ti] - load[ti];
      m.y_max[r] = frame.load_max[ti] - load[ti];
    }
  }
  return m;
}

Standardizer Standardizer::fit(const Eigen::MatrixXd& X, std::span<const std::size_t> rows,
                               DegeneratePolicy policy) {
  const char* where = "features.standardize";
  Standardizer s;
  const auto cols = static_cast<std::size_t>(X.cols());
  s.mean.assign(cols, 0.0);
  s.sd.assign(cols, 1.0);
  s.degenerate.assign(cols, 0);
  const double count = static_cast<double>(rows.size());
  for (std::size_t c = 0; c < cols; ++c) {
    const auto cc = static_cast<Eigen::Index>(c);
    double sum = 0.0;
    for (auto r : rows) sum += X(static_cast<Eigen::Index>(r), cc);
    const double mean = rows.empty() ? 0.0 : sum / count;
    double ss = 0.0;
    for (auto r : rows) {
      const double d = X(static_cast<Eigen::Index>(r), cc) - mean;
      ss += d * d;
    }
    const double sd = rows.size() > 1 ? std::sqrt(ss / (count - 1.0)) : 0.0;
    s.mean[c] = mean;
    if (!(sd > 1e-14 * std::max(1.0, std::abs(mean)))) {
      if (policy == DegeneratePolicy::Throw) {
        fail(Errc::DegenerateColumn, where, "column " + std::to_string(c) + " has zero standard deviation");
      }
      s.degenerate[c] = 1;
      s.sd[c] = 1.0;
    } else {
      s.sd[c] = sd;
    }
  }
  return s;
}

Eigen::MatrixXd Standardizer::apply(const Eigen::MatrixXd& X) const {
  if (static_cast<std::size_t>(X.cols()) != columns()) {
    fail(Errc::DimensionMismatch, "features.standardize", "column count differs from fitted statistics");
  }
  Eigen::MatrixXd Z(X.rows(), X.cols());
  for (Eigen::Index c = 0; c < X.cols(); ++c) {
    const auto cc = static_cast<std::size_t>(c);
    if (degenerate[cc]) {
      Z.col(c).setZero();
    } else {
      Z.col(c) = (X.col(c).array() - mean[cc]) / sd[cc];
    }
  }
  return Z;
}

Eigen::MatrixXd Standardizer::invert(const Eigen::MatrixXd& Z) const {
  Eigen::MatrixXd X(Z.rows(), Z.cols());
  for (Eigen::Index c = 0; c < Z.cols(); ++c) {
    const auto cc = static_cast<std::size_t>(c);
    X.col(c) = Z.col(c).array() * sd[cc] + mean[cc];
  }
  return X;
}

FeatureMatrix standardize(const FeatureMatrix& matrix, const Standardizer& stats) {
  FeatureMatrix out = matrix;
  out.X = stats.apply(matrix.X);
  return out;
}

std::pair<FeatureMatrix, Standardizer> standardize_fit(const FeatureMatrix& matrix, DegeneratePolicy policy) {
  std::vector<std::size_t> rows;
  for (std::size_t i = 0; i < matrix.rows(); ++i) {
    if (matrix.row_valid[i]) rows.push_back(i);
  }
  auto stats = Standardizer::fit(matrix.X, rows, policy);
  return {standardize(matrix, stats), std::move(stats)};
}

std::string feature_csv_header() {
  std::string out = "timestamp";
  for (auto name : kInputNames) {
    out += ',';
    out += name;
  }
  out += ",y_min,y_max,row_valid,imputed\n";
  return out;
}

std::string format_feature_csv(const FeatureMatrix& matrix, std::string_view header_comment) {
  std::string out(header_comment);
  out += feature_csv_header();
  for (std::size_t i = 0; i < matrix.rows(); ++i) {
    const auto r = static_cast<Eigen::Index>(i);
    out += csv::format_timestamp(matrix.timestamps[i]);
    for (Eigen::Index c = 0; c < matrix.X.cols(); ++c) {
      out += ',';
      out += csv::format_double(matrix.X(r, c));
    }
    out += ',';
    out += csv::format_double(matrix.y_min[r]);
    out += ',';
    out += csv::format_double(matrix.y_max[r]);
    out += matrix.row_valid[i] ? ",1" : ",0";
    out += matrix.imputed[i] ? ",1\n" : ",0\n";
  }
  return out;
}

}  // namespace peakload
