#include "peakload/pipeline.hpp"

#include <omp.h>

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <limits>
#include <sstream>

#include "peakload/csv.hpp"
#include "peakload/errors.hpp"
#include "peakload/kernels.hpp"
#include "peakload/rng.hpp"

namespace peakload::pipeline {

namespace {

constexpr double kNaN = std::numeric_limits<double>::quiet_NaN();

void check_slots(const std::vector<Timestamp>& a, const std::vector<Timestamp>& b, const char* where) {
  if (a != b) fail(Errc::SlotMismatch, where, "slot sets differ (" + std::to_string(a.size()) + " vs " + std::to_string(b.size()) + ")");
}

bool is_gam(std::string_view model) { return model.rfind("gam.", 0) == 0; }

}  // namespace

Truth month_truth(const TimeSeriesFrame& frame, Timestamp month) {
  Truth t;
  t.month = month_floor(month);
  const Timestamp end = add_months(t.month, 1);
  if (!frame.has_targets()) fail(Errc::MissingColumn, "pipeline.truth", "frame has no min/max targets");
  for (std::size_t i = 0; i < frame.size(); ++i) {
    const Timestamp ts = frame.timestamp(i);
    if (ts < t.month || !(ts < end)) continue;
    if (!std::isfinite(frame.load[i]) || !std::isfinite(frame.load_min[i]) || !std::isfinite(frame.load_max[i])) continue;
    t.timestamps.push_back(ts);
    t.load.push_back(frame.load[i]);
    t.load_min.push_back(frame.load_min[i]);
    t.load_max.push_back(frame.load_max[i]);
  }
  if (t.timestamps.empty())
    fail(Errc::EmptyMonth, "pipeline.truth", "no observed slots in " + format_month(t.month));
  return t;
}

Eigen::MatrixXd average_members(const std::vector<Eigen::MatrixXd>& members) {
  if (members.empty()) fail(Errc::NoMembers, "pipeline.ensemble_predict", "no ensemble members");
  Eigen::MatrixXd sum = members.front();
  for (std::size_t m = 1; m < members.size(); ++m) {
    if (members[m].rows() != sum.rows() || members[m].cols() != sum.cols())
      fail(Errc::SlotMismatch, "pipeline.ensemble_predict", "member prediction shapes differ");
    sum += members[m];
  }
  return sum / static_cast<double>(members.size());
}

Eigen::MatrixXd ensemble_predict(const std::vector<mlp::MlpHyperparams>& sets, int runs, const FeatureMatrix& train,
                                 const FeatureMatrix& test, std::uint64_t base_seed, const mlp::TrainOptions& options) {
  if (sets.empty() || runs < 1) fail(Errc::NoMembers, "pipeline.ensemble_predict", "need at least one member");
  const std::size_t count = sets.size() * static_cast<std::size_t>(runs);
  std::vector<Eigen::MatrixXd> preds(count);
  std::vector<std::string> errors(count);
#pragma omp parallel for schedule(dynamic, 1) num_threads(kernels::jobs())
  for (std::ptrdiff_t w = 0; w < static_cast<std::ptrdiff_t>(count); ++w) {
    const std::size_t k = static_cast<std::size_t>(w) / static_cast<std::size_t>(runs);
    const std::size_t r = static_cast<std::size_t>(w) % static_cast<std::size_t>(runs);
    try {
      const auto fit = mlp::train(sets[k], train, derive_seed(base_seed, k, r), options);
      preds[static_cast<std::size_t>(w)] = mlp::predict(fit, test);
    } catch (const std::exception& e) {
      errors[static_cast<std::size_t>(w)] = e.what();
    }
  }
  // Failed members are left out; the remaining ones keep their fixed order.
  std::vector<Eigen::MatrixXd> ok;
  std::string first_error;
  for (std::size_t m = 0; m < count; ++m) {
    if (errors[m].empty())
      ok.push_back(std::move(preds[m]));
    else if (first_error.empty())
      first_error = errors[m];
  }
  if (ok.empty()) fail(Errc::NoMembers, "pipeline.ensemble_predict", "every member failed: " + first_error);
  return average_members(ok);
}

PredictionSet combine(const std::vector<PredictionSet>& sets, std::string name) {
  if (sets.empty()) fail(Errc::NoMembers, "pipeline.combine", "nothing to combine");
  PredictionSet out;
  out.model = std::move(name);
  out.month = sets.front().month;
  out.timestamps = sets.front().timestamps;
  out.load = sets.front().load;
  out.d_min.assign(out.size(), 0.0);
  out.d_max.assign(out.size(), 0.0);
  for (const auto& s : sets) {
    check_slots(s.timestamps, out.timestamps, "pipeline.combine");
    for (std::size_t i = 0; i < out.size(); ++i) {
      out.d_min[i] += s.d_min[i];
      out.d_max[i] += s.d_max[i];
    }
  }
  const double n = static_cast<double>(sets.size());
  for (std::size_t i = 0; i < out.size(); ++i) {
    out.d_min[i] /= n;
    out.d_max[i] /= n;
  }
  return out;
}

PredictionSet naive_predict(const TimeSeriesFrame& frame, Timestamp month) {
  const Timestamp start = month_floor(month), end = add_months(start, 1);
  if (frame.size() == 0 || frame.start > start || !(frame.timestamp(frame.size() - 1) >= add_months(start, 1) - kSlotLength))
    fail(Errc::RangeOutsideData, "pipeline.naive_predict", "frame does not cover " + format_month(start));
  PredictionSet p;
  p.model = std::string(kNaive);
  p.month = start;
  for (std::size_t i = 0; i < frame.size(); ++i) {
    const Timestamp ts = frame.timestamp(i);
    if (ts < start || !(ts < end) || !std::isfinite(frame.load[i])) continue;
    p.timestamps.push_back(ts);
    p.load.push_back(frame.load[i]);
  }
  p.d_min.assign(p.size(), 0.0);
  p.d_max.assign(p.size(), 0.0);
  return p;
}

PredictionSet align(std::string model, const Truth& truth, const std::vector<Timestamp>& rows_timestamps,
                    const Eigen::MatrixXd& predictions, std::size_t* fallbacks) {
  PredictionSet p;
  p.model = std::move(model);
  p.month = truth.month;
  p.timestamps = truth.timestamps;
  p.load = truth.load;
  p.d_min.assign(truth.size(), 0.0);
  p.d_max.assign(truth.size(), 0.0);
  std::size_t missing = 0;
  for (std::size_t i = 0; i < truth.size(); ++i) {
    auto it = std::lower_bound(rows_timestamps.begin(), rows_timestamps.end(), truth.timestamps[i]);
    if (it != rows_timestamps.end() && *it == truth.timestamps[i]) {
      const auto r = static_cast<Eigen::Index>(it - rows_timestamps.begin());
      if (std::isfinite(predictions(r, 0)) && std::isfinite(predictions(r, 1))) {
        p.d_min[i] = predictions(r, 0);
        p.d_max[i] = predictions(r, 1);
        continue;
      }
    }
    ++missing;
  }
  if (fallbacks) *fallbacks += missing;
  return p;
}

void clamp_deltas(PredictionSet& set) {
  for (auto& v : set.d_min) v = std::min(v, 0.0);
  for (auto& v : set.d_max) v = std::max(v, 0.0);
}

Metrics score(const PredictionSet& p, const Truth& truth) {
  const char* where = "pipeline.score";
  if (truth.size() == 0) fail(Errc::EmptyMonth, where, "no slots to score");
  check_slots(p.timestamps, truth.timestamps, where);
  double se_min = 0, se_max = 0, naive_min = 0, naive_max = 0;
  for (std::size_t i = 0; i < truth.size(); ++i) {
    const double e1 = p.pred_min(i) - truth.load_min[i];
    const double e2 = p.pred_max(i) - truth.load_max[i];
    se_min += e1 * e1;
    se_max += e2 * e2;
    const double n1 = truth.load[i] - truth.load_min[i];
    const double n2 = truth.load[i] - truth.load_max[i];
    naive_min += n1 * n1;
    naive_max += n2 * n2;
  }
  const double n = static_cast<double>(truth.size());
  Metrics m;
  m.rmse_min = std::sqrt(se_min / n);
  m.rmse_max = std::sqrt(se_max / n);
  m.rmse = std::sqrt((se_min + se_max) / (2.0 * n));
  const double naive = std::sqrt((naive_min + naive_max) / (2.0 * n));
  // Same slot set and normalization on both sides; for the naive model the
  // two sums are identical, giving exactly 1.
  m.score = (se_min + se_max) == (naive_min + naive_max) ? 1.0 : m.rmse / naive;
  return m;
}

Metrics BacktestReport::average(const std::string& model) const {
  Metrics avg;
  const auto& v = metrics.at(model);
  if (v.empty()) return avg;
  for (const auto& m : v) {
    avg.rmse += m.rmse;
    avg.rmse_min += m.rmse_min;
    avg.rmse_max += m.rmse_max;
    avg.score += m.score;
  }
  const double n = static_cast<double>(v.size());
  avg.rmse /= n;
  avg.rmse_min /= n;
  avg.rmse_max /= n;
  avg.score /= n;
  return avg;
}

namespace {

struct MonthOutput {
  std::vector<PredictionSet> sets;
  std::vector<Metrics> metrics;  // in config.models order
  std::size_t fallbacks = 0;
  Timestamp last_train{};
  std::vector<mlp::MlpHyperparams> top;
};

FeatureMatrix test_matrix(const TimeSeriesFrame& frame, Timestamp start, Timestamp end, const FeatureOptions& opt) {
  // Lags reach one day back at most; leads stop at the month end.
  const TimeSeriesFrame part = frame.slice_time(start - std::chrono::days{1}, end);
  FeatureMatrix m = build_matrix(part, calendar_inputs(part), opt);
  const std::size_t first = m.lower_bound(start);
  return m.slice(first, m.rows());
}

MonthOutput run_month(const TimeSeriesFrame& frame, const BacktestConfig& cfg, std::size_t month_index,
                      const std::vector<mlp::MlpHyperparams>* reuse) {
  const Timestamp start = month_floor(cfg.months[month_index]);
  const Timestamp end = add_months(start, 1);
  auto say = [&](const std::string& s) {
    if (cfg.progress) cfg.progress(format_month(start) + ": " + s);
  };
  MonthOutput out;
  const Timestamp history = cfg.window_months > 0 ? add_months(start, -cfg.window_months) : frame.start;
  const TimeSeriesFrame train_frame = frame.slice_time(history, start);
  if (train_frame.size() == 0) fail(Errc::InsufficientHistory, "pipeline.backtest", "no history before " + format_month(start));
  const FeatureMatrix train = build_matrix(train_frame, calendar_inputs(train_frame), cfg.features);
  for (const auto& t : train.timestamps)
    if (!(t < start)) fail(Errc::LeakageDetected, "pipeline.backtest", "training row at " + csv::format_timestamp(t));
  out.last_train = train.timestamps.back();
  const FeatureMatrix test = test_matrix(frame, start, end, cfg.features);
  const Truth truth = month_truth(frame, start);

  std::map<std::string, PredictionSet> by_model;
  auto want = [&](std::string_view m) {
    if (std::find(cfg.models.begin(), cfg.models.end(), m) != cfg.models.end()) return true;
    if (std::find(cfg.models.begin(), cfg.models.end(), kCombination) != cfg.models.end())
      return std::find(cfg.combination_members.begin(), cfg.combination_members.end(), m) !=
             cfg.combination_members.end();
    return false;
  };

  std::vector<std::string> gams;
  for (const auto& m : cfg.models) if (is_gam(m)) gams.push_back(m);
  for (const auto& m : cfg.combination_members)
    if (is_gam(m) && want(m) && std::find(gams.begin(), gams.end(), m) == gams.end()) gams.push_back(m);
  for (const auto& name : gams) {
    say("fitting " + name);
    gam::GamSpec spec = gam::build_spec(gam::parse_variant(name), gam::Target::Min, cfg.absolute_wind);
    spec.k0 = cfg.k0;
    spec.k1 = cfg.k1;
    spec.k2 = cfg.k2;
    const auto [fmin, fmax] = gam::fit_both(spec, train, cfg.gam);
    Eigen::MatrixXd pred(static_cast<Eigen::Index>(test.rows()), 2);
    pred.col(0) = gam::predict(fmin, test);
    pred.col(1) = gam::predict(fmax, test);
    by_model[name] = align(name, truth, test.timestamps, pred, &out.fallbacks);
  }

  if (want(kDnn)) {
    FeatureMatrix dnn_train = train;
    if (cfg.dnn_window_months > 0) {
      const std::size_t first = train.lower_bound(add_months(start, -cfg.dnn_window_months));
      dnn_train = train.slice(first, train.rows());
    }
    std::vector<mlp::MlpHyperparams> top;
    if (reuse && !reuse->empty()) {
      top = *reuse;
    } else {
      say("tuning");
      tuner::TunerConfig tc = cfg.tuner;
      tc.base_seed = derive_seed(cfg.seed, month_index, 0x7a);
      std::string log;
      if (!cfg.tuner_log_dir.empty()) log = cfg.tuner_log_dir + "/tune_" + format_month(start) + ".jsonl";
      const auto tuned = tuner::tune(train, start, tc, log);
      for (const auto& t : tuned.top) top.push_back(t.params);
    }
    out.top = top;
    say("training ensemble");
    const Eigen::MatrixXd pred = ensemble_predict(top, cfg.ensemble_runs, dnn_train, test,
                                                  derive_seed(cfg.seed, month_index, 0xe5), cfg.tuner.train);
    by_model[std::string(kDnn)] = align(std::string(kDnn), truth, test.timestamps, pred, &out.fallbacks);
  }

  by_model[std::string(kNaive)] = align(std::string(kNaive), truth, {}, Eigen::MatrixXd(0, 2));
  if (cfg.clamp) {
    for (auto& [name, set] : by_model)
      if (name != kNaive) clamp_deltas(set);
  }
  if (want(kCombination)) {
    std::vector<PredictionSet> members;
    for (const auto& m : cfg.combination_members) members.push_back(by_model.at(m));
    by_model[std::string(kCombination)] = combine(members, std::string(kCombination));
  }
  for (const auto& m : cfg.models) {
    auto it = by_model.find(m);
    if (it == by_model.end()) fail(Errc::UnknownVariant, "pipeline.backtest", "unknown model '" + m + "'");
    out.metrics.push_back(score(it->second, truth));
    out.sets.push_back(it->second);
  }
  return out;
}

}  // namespace

BacktestResult backtest(const TimeSeriesFrame& frame, const BacktestConfig& config) {
  const char* where = "pipeline.backtest";
  if (config.months.empty()) fail(Errc::InvalidConfig, where, "no test months");
  if (config.models.empty()) fail(Errc::InvalidConfig, where, "no models");
  for (const auto& m : config.models) {
    if (m == kNaive || m == kDnn || m == kCombination) continue;
    if (!is_gam(m)) fail(Errc::UnknownVariant, where, "unknown model '" + m + "'");
    gam::parse_variant(m);
  }
  for (const auto& m : config.combination_members)
    if (m != kDnn && !is_gam(m)) fail(Errc::UnknownVariant, where, "unknown combination member '" + m + "'");
  for (const auto& month : config.months) {
    if (!(month_floor(month) >= frame.start) || !(add_months(month, 1) <= frame.timestamp(frame.size() - 1) + kSlotLength))
      fail(Errc::RangeOutsideData, where, "test month " + format_month(month) + " is outside the data");
  }
  const bool dnn = std::find(config.models.begin(), config.models.end(), kDnn) != config.models.end() ||
                   (std::find(config.models.begin(), config.models.end(), kCombination) != config.models.end() &&
                    std::find(config.combination_members.begin(), config.combination_members.end(), kDnn) !=
                        config.combination_members.end());

  std::vector<MonthOutput> outputs(config.months.size());
  if (config.parallel_months && !dnn) {
    std::exception_ptr error;
#pragma omp parallel for schedule(dynamic, 1) num_threads(kernels::jobs())
    for (std::ptrdiff_t i = 0; i < static_cast<std::ptrdiff_t>(outputs.size()); ++i) {
      try {
        outputs[static_cast<std::size_t>(i)] = run_month(frame, config, static_cast<std::size_t>(i), nullptr);
      } catch (...) {
#pragma omp critical(backtest_error)
        if (!error) error = std::current_exception();
      }
    }
    if (error) std::rethrow_exception(error);
  } else {
    std::vector<mlp::MlpHyperparams> reuse;
    for (std::size_t i = 0; i < outputs.size(); ++i) {
      outputs[i] = run_month(frame, config, i, config.reuse_top ? &reuse : nullptr);
      if (config.reuse_top && reuse.empty()) reuse = outputs[i].top;
    }
  }

  BacktestResult res;
  res.report.models = config.models;
  for (const auto& m : config.months) res.report.months.push_back(month_floor(m));
  for (const auto& m : config.models) res.report.metrics[m];
  for (auto& o : outputs) {
    for (std::size_t k = 0; k < config.models.size(); ++k) res.report.metrics[config.models[k]].push_back(o.metrics[k]);
    for (auto& s : o.sets) res.predictions.push_back(std::move(s));
    res.fallback_slots += o.fallbacks;
    res.last_training_time.push_back(o.last_train);
  }
  return res;
}

namespace {

double metric_value(const Metrics& m, std::size_t k) {
  switch (k) {
    case 0: return m.rmse;
    case 1: return m.rmse_min;
    case 2: return m.rmse_max;
    default: return m.score;
  }
}

void set_metric(Metrics& m, std::size_t k, double v) {
  switch (k) {
    case 0: m.rmse = v; break;
    case 1: m.rmse_min = v; break;
    case 2: m.rmse_max = v; break;
    default: m.score = v; break;
  }
}

}  // namespace

std::string format_report_csv(const BacktestReport& report, std::string_view header_comment) {
  std::string out(header_comment);
  out += "metric,model";
  for (const auto& m : report.months) out += "," + format_month(m);
  out += ",average\n";
  for (std::size_t k = 0; k < kMetricNames.size(); ++k) {
    for (const auto& model : report.models) {
      out += std::string(kMetricNames[k]) + "," + model;
      for (const auto& m : report.metrics.at(model)) out += "," + csv::format_double(metric_value(m, k));
      out += "," + csv::format_double(metric_value(report.average(model), k)) + "\n";
    }
  }
  return out;
}

BacktestReport parse_report_csv(std::string_view text) {
  const char* where = "pipeline.report";
  const auto table = csv::parse_table(text, where);
  if (table.header.size() < 3 || table.header[0] != "metric" || table.header[1] != "model" ||
      table.header.back() != "average")
    fail(Errc::BadSchema, where, "expected header metric,model,<months...>,average");
  BacktestReport r;
  for (std::size_t c = 2; c + 1 < table.header.size(); ++c) {
    auto m = parse_month(table.header[c]);
    if (!m) fail(Errc::BadSchema, where, "bad month column '" + table.header[c] + "'");
    r.months.push_back(*m);
  }
  for (std::size_t i = 0; i < table.rows.size(); ++i) {
    const auto& row = table.rows[i];
    if (row.size() != table.header.size()) fail(Errc::BadSchema, where, "ragged row at line " + std::to_string(table.line_numbers[i]));
    const auto k = static_cast<std::size_t>(std::find(kMetricNames.begin(), kMetricNames.end(), row[0]) - kMetricNames.begin());
    if (k >= kMetricNames.size()) fail(Errc::BadSchema, where, "unknown metric '" + row[0] + "'");
    const std::string& model = row[1];
    if (!r.metrics.count(model)) {
      r.models.push_back(model);
      r.metrics[model].resize(r.months.size());
    }
    for (std::size_t c = 0; c < r.months.size(); ++c) {
      auto v = csv::parse_double(row[c + 2]);
      set_metric(r.metrics[model][c], k, v ? *v : kNaN);
    }
  }
  return r;
}

std::string format_report_table(const BacktestReport& report) {
  std::ostringstream out;
  char buf[64];
  for (std::size_t k = 0; k < kMetricNames.size(); ++k) {
    out << kMetricNames[k] << "\n";
    std::snprintf(buf, sizeof buf, "%-14s", "model");
    out << buf;
    for (const auto& m : report.months) {
      std::snprintf(buf, sizeof buf, " %9s", format_month(m).c_str());
      out << buf;
    }
    out << "   average\n";
    for (const auto& model : report.models) {
      std::snprintf(buf, sizeof buf, "%-14s", model.c_str());
      out << buf;
      for (const auto& m : report.metrics.at(model)) {
        std::snprintf(buf, sizeof buf, " %9.4f", metric_value(m, k));
        out << buf;
      }
      std::snprintf(buf, sizeof buf, " %9.4f\n", metric_value(report.average(model), k));
      out << buf;
    }
    out << "\n";
  }
  return out.str();
}

std::string format_predictions_csv(const std::vector<PredictionSet>& sets, std::string_view header_comment) {
  std::string out(header_comment);
  out += "timestamp,model,pred_min_mw,pred_max_mw\n";
  for (const auto& s : sets)
    for (std::size_t i = 0; i < s.size(); ++i)
      out += csv::format_timestamp(s.timestamps[i]) + "," + s.model + "," + csv::format_double(s.pred_min(i)) + "," +
             csv::format_double(s.pred_max(i)) + "\n";
  return out;
}

}  // namespace peakload::pipeline
