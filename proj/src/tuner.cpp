#include "peakload/tuner.hpp"

#include <omp.h>

#include <algorithm>
#include <chrono>
#include <cmath>
#include <fstream>
#include <limits>
#include <map>
#include <numbers>

#include "json.hpp"
#include "peakload/csv.hpp"
#include "peakload/errors.hpp"
#include "peakload/kernels.hpp"

namespace peakload::tuner {

using nlohmann::json;
using mlp::MlpHyperparams;

namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();

int draw_units(Rng& rng) {
  const double u = rng.log_uniform(mlp::kMinUnits, mlp::kMaxUnits);
  return std::clamp(static_cast<int>(std::lround(u)), mlp::kMinUnits, mlp::kMaxUnits);
}

}  // namespace

void TunerConfig::validate() const {
  if (top_k < 1 || budget < top_k) fail(Errc::InvalidConfig, "tuner.config", "need budget >= top_k >= 1");
  if (adaptive_batch < 1) fail(Errc::InvalidConfig, "tuner.config", "adaptive batch must be >= 1");
}

MlpHyperparams sample(Rng& rng) {
  MlpHyperparams p;
  do {
    for (auto& f : p.features) f = rng.coin();
  } while (p.selected().empty());
  p.depth = rng.coin() ? 3 : 2;
  if (rng.coin()) p.dropout = rng.uniform(0.0, 1.0);
  for (auto& l : p.layers) {
    l.activation = mlp::kActivations[rng.index(mlp::kActivations.size())];
    l.units = draw_units(rng);
    if (rng.coin()) l.l1_activity = rng.log_uniform(mlp::kMinL1, mlp::kMaxL1);
    if (rng.coin()) l.l1_weight = rng.log_uniform(mlp::kMinL1, mlp::kMaxL1);
  }
  p.learning_rate = rng.log_uniform(mlp::kMinLearningRate, mlp::kMaxLearningRate);
  return p;
}

InnerBounds inner_bounds(Timestamp outer_start) {
  return {add_months(outer_start, -3), add_months(outer_start, -2), add_months(outer_start, -1), month_floor(outer_start)};
}

TrialResult run_trial(const MlpHyperparams& params, const FeatureMatrix& matrix, const InnerBounds& bounds,
                      std::uint64_t seed, const mlp::TrainOptions& train) {
  const char* where = "tuner.run_trial";
  for (std::size_t i = 0; i + 1 < bounds.size(); ++i)
    if (!(bounds[i] < bounds[i + 1])) fail(Errc::InsufficientHistory, where, "inner month boundaries are not increasing");
  const auto rows = matrix.trainable_rows();
  if (rows.empty() || matrix.timestamps[rows.front()] > add_months(bounds[0], -1))
    fail(Errc::InsufficientHistory, where,
         "need at least one month of data before " + csv::format_timestamp(bounds[0]));

  const auto t0 = std::chrono::steady_clock::now();
  TrialResult res;
  res.params = params;
  res.seed = seed;
  double sse = 0.0;
  std::size_t count = 0;
  try {
    for (std::size_t step = 0; step < 3; ++step) {
      std::vector<std::size_t> fit_rows, test_rows;
      for (auto r : rows) {
        const auto t = matrix.timestamps[r];
        if (t < bounds[step])
          fit_rows.push_back(r);
        else if (t < bounds[step + 1])
          test_rows.push_back(r);
      }
      if (test_rows.empty()) {
        res.short_history = true;
        continue;
      }
      const auto fit = mlp::train(params, matrix.select_rows(fit_rows), derive_seed(seed, step + 1), train);
      const FeatureMatrix test = matrix.select_rows(test_rows);
      const Eigen::MatrixXd pred = mlp::predict(fit, test);
      double s = 0.0;
      for (Eigen::Index r = 0; r < pred.rows(); ++r) {
        s += std::pow(pred(r, 0) - test.y_min(r), 2) + std::pow(pred(r, 1) - test.y_max(r), 2);
      }
      if (!std::isfinite(s)) fail(Errc::DivergedLoss, where, "non-finite inner prediction");
      res.step_mse.push_back(s / (2.0 * static_cast<double>(pred.rows())));
      sse += s;
      count += 2 * static_cast<std::size_t>(pred.rows());
    }
    if (count == 0) fail(Errc::InsufficientHistory, where, "no rows in the three inner months");
    res.mse = sse / static_cast<double>(count);
  } catch (const Error& e) {
    if (e.code() == Errc::InsufficientHistory) throw;
    if (e.error_class() != ErrorClass::Numerical && e.code() != Errc::TooFewRows) throw;
    res.mse = kInf;
    res.error = e.what();
  }
  res.wall_seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  return res;
}

std::vector<TrialResult> select_top(const std::vector<TrialResult>& trials, std::size_t k) {
  if (k == 0 || trials.size() < k)
    fail(Errc::TooFewTrials, "tuner.select_top",
         "have " + std::to_string(trials.size()) + " trials, need " + std::to_string(k));
  std::vector<TrialResult> sorted = trials;
  std::stable_sort(sorted.begin(), sorted.end(), [](const TrialResult& a, const TrialResult& b) {
    if (a.mse != b.mse) return a.mse < b.mse;
    return a.index < b.index;
  });
  sorted.resize(k);
  return sorted;
}

std::string trial_record(const TrialResult& t, std::uint64_t base_seed) {
  json j;
  j["trial"] = t.index;
  j["base_seed"] = base_seed;
  j["seed"] = t.seed;
  j["mse"] = std::isfinite(t.mse) ? json(t.mse) : json(nullptr);
  j["step_mse"] = t.step_mse;
  j["short_history"] = t.short_history;
  j["params"] = mlp::params_json(t.params);
  if (!t.error.empty()) j["error"] = t.error;
  return j.dump() + "\n";
}

std::vector<TrialResult> read_log(const std::string& path, std::optional<std::uint64_t> base_seed) {
  std::map<std::size_t, TrialResult> by_index;
  std::ifstream in(path);
  if (!in) return {};
  std::string line;
  while (std::getline(in, line)) {
    if (csv::trim(line).empty()) continue;
    json j;
    try {
      j = json::parse(line);
      if (base_seed && j.at("base_seed").get<std::uint64_t>() != *base_seed) continue;
      TrialResult t;
      t.index = j.at("trial");
      t.seed = j.at("seed");
      t.mse = j.at("mse").is_null() ? kInf : j.at("mse").get<double>();
      t.step_mse = j.at("step_mse").get<std::vector<double>>();
      t.short_history = j.at("short_history");
      t.params = mlp::params_from(j.at("params"));
      if (j.contains("error")) t.error = j.at("error");
      by_index[t.index] = std::move(t);
    } catch (const std::exception&) {
      // interrupted write: ignore the partial record
      continue;
    }
  }
  std::vector<TrialResult> out;
  for (auto& [i, t] : by_index) out.push_back(std::move(t));
  return out;
}

namespace {

// Search-space encoding for the adaptive sampler: categorical dimensions
// hold an index, continuous ones a position in [0, 1] on their log scale.
struct Dim {
  int categories;  // 0 for continuous
};

std::vector<Dim> dims() {
  std::vector<Dim> d(kNumInputs, Dim{2});
  d.push_back({2});  // depth
  d.push_back({2});  // dropout flag
  d.push_back({0});  // dropout rate
  for (int l = 0; l < mlp::kMaxDepth; ++l) {
    d.push_back({6});
    d.push_back({0});
    d.push_back({2});
    d.push_back({0});
    d.push_back({2});
    d.push_back({0});
  }
  d.push_back({0});  // learning rate
  return d;
}

double to_unit_log(double v, double lo, double hi) { return (std::log(v) - std::log(lo)) / (std::log(hi) - std::log(lo)); }
double from_unit_log(double u, double lo, double hi) { return std::exp(std::log(lo) + u * (std::log(hi) - std::log(lo))); }

std::vector<double> encode(const MlpHyperparams& p) {
  std::vector<double> v;
  for (bool f : p.features) v.push_back(f ? 1 : 0);
  v.push_back(p.depth == 3 ? 1 : 0);
  v.push_back(p.dropout ? 1 : 0);
  v.push_back(p.dropout.value_or(0.5));
  for (const auto& l : p.layers) {
    v.push_back(static_cast<double>(std::find(mlp::kActivations.begin(), mlp::kActivations.end(), l.activation) -
                                    mlp::kActivations.begin()));
    v.push_back(to_unit_log(l.units, mlp::kMinUnits, mlp::kMaxUnits));
    v.push_back(l.l1_activity ? 1 : 0);
    v.push_back(to_unit_log(l.l1_activity.value_or(1e-2), mlp::kMinL1, mlp::kMaxL1));
    v.push_back(l.l1_weight ? 1 : 0);
    v.push_back(to_unit_log(l.l1_weight.value_or(1e-2), mlp::kMinL1, mlp::kMaxL1));
  }
  v.push_back(to_unit_log(p.learning_rate, mlp::kMinLearningRate, mlp::kMaxLearningRate));
  return v;
}

MlpHyperparams decode(const std::vector<double>& v, Rng& rng) {
  MlpHyperparams p;
  std::size_t k = 0;
  for (auto& f : p.features) f = v[k++] > 0.5;
  if (p.selected().empty()) p.features[rng.index(kNumInputs)] = true;
  p.depth = v[k++] > 0.5 ? 3 : 2;
  const bool drop = v[k++] > 0.5;
  const double rate = std::clamp(v[k++], 1e-6, 1.0 - 1e-6);
  if (drop) p.dropout = rate;
  for (auto& l : p.layers) {
    l.activation = mlp::kActivations[static_cast<std::size_t>(std::lround(v[k++]))];
    l.units = std::clamp(static_cast<int>(std::lround(from_unit_log(v[k++], mlp::kMinUnits, mlp::kMaxUnits))),
                         mlp::kMinUnits, mlp::kMaxUnits);
    const bool a = v[k++] > 0.5;
    const double ar = from_unit_log(v[k++], mlp::kMinL1, mlp::kMaxL1);
    const bool w = v[k++] > 0.5;
    const double wr = from_unit_log(v[k++], mlp::kMinL1, mlp::kMaxL1);
    if (a) l.l1_activity = ar;
    if (w) l.l1_weight = wr;
  }
  p.learning_rate = from_unit_log(v[k++], mlp::kMinLearningRate, mlp::kMaxLearningRate);
  return p;
}

/// Per-dimension Parzen estimate: smoothed frequencies for categorical
/// dimensions, Gaussian kernels truncated to [0, 1] for continuous ones.
class Density {
 public:
  Density(const std::vector<std::vector<double>>& points, const std::vector<Dim>& d) : points_(points), dims_(d) {
    const double n = static_cast<double>(points.size());
    for (std::size_t k = 0; k < d.size(); ++k) {
      double mean = 0, ss = 0;
      for (const auto& p : points) mean += p[k];
      mean /= std::max(1.0, n);
      for (const auto& p : points) ss += (p[k] - mean) * (p[k] - mean);
      const double sd = n > 1 ? std::sqrt(ss / (n - 1)) : 0.25;
      bandwidth_.push_back(std::clamp(sd * std::pow(std::max(1.0, n), -0.2), 0.05, 0.5));
    }
  }

  double log_density(const std::vector<double>& x) const {
    double total = 0.0;
    const double n = static_cast<double>(points_.size());
    for (std::size_t k = 0; k < dims_.size(); ++k) {
      if (dims_[k].categories > 0) {
        double count = 0;
        for (const auto& p : points_) count += std::lround(p[k]) == std::lround(x[k]);
        total += std::log((count + 1.0) / (n + dims_[k].categories));
      } else {
        const double h = bandwidth_[k];
        double s = 1.0;  // uniform prior component
        for (const auto& p : points_) {
          const double mass = 0.5 * (std::erf((1.0 - p[k]) / (h * std::numbers::sqrt2)) -
                                     std::erf((0.0 - p[k]) / (h * std::numbers::sqrt2)));
          const double z = (x[k] - p[k]) / h;
          s += std::exp(-0.5 * z * z) / (h * std::sqrt(2.0 * std::numbers::pi) * std::max(mass, 1e-12));
        }
        total += std::log(s / (n + 1.0));
      }
    }
    return total;
  }

  std::vector<double> draw(Rng& rng) const {
    const auto& c = points_[rng.index(points_.size())];
    std::vector<double> x = c;
    for (std::size_t k = 0; k < dims_.size(); ++k) {
      if (dims_[k].categories > 0) {
        if (rng.uniform() < 0.2) x[k] = static_cast<double>(rng.index(static_cast<std::size_t>(dims_[k].categories)));
      } else {
        double v = c[k];
        for (int tries = 0; tries < 20; ++tries) {
          v = c[k] + bandwidth_[k] * rng.normal();
          if (v >= 0.0 && v <= 1.0) break;
        }
        x[k] = std::clamp(v, 0.0, 1.0);
      }
    }
    return x;
  }

 private:
  std::vector<std::vector<double>> points_;
  std::vector<Dim> dims_;
  std::vector<double> bandwidth_;
};

MlpHyperparams adaptive_sample(const std::vector<TrialResult>& done, Rng& rng) {
  std::vector<const TrialResult*> order;
  for (const auto& t : done) order.push_back(&t);
  std::stable_sort(order.begin(), order.end(), [](const TrialResult* a, const TrialResult* b) {
    if (a->mse != b->mse) return a->mse < b->mse;
    return a->index < b->index;
  });
  const std::size_t n_good = std::max<std::size_t>(1, (order.size() + 3) / 4);
  std::vector<std::vector<double>> good, bad;
  for (std::size_t i = 0; i < order.size(); ++i) (i < n_good ? good : bad).push_back(encode(order[i]->params));
  if (bad.empty()) bad = good;
  const auto d = dims();
  const Density l(good, d), g(bad, d);
  std::vector<double> best;
  double best_score = -kInf;
  for (int c = 0; c < 24; ++c) {
    auto x = l.draw(rng);
    const double score = l.log_density(x) - g.log_density(x);
    if (score > best_score) {
      best_score = score;
      best = std::move(x);
    }
  }
  return decode(best, rng);
}

}  // namespace

TuneResult tune(const FeatureMatrix& matrix, Timestamp outer_start, const TunerConfig& config,
                const std::string& log_path) {
  const char* where = "tuner.tune";
  config.validate();
  for (const auto& t : matrix.timestamps)
    if (!(t < outer_start))
      fail(Errc::LeakageDetected, where,
           "in-sample data reaches " + csv::format_timestamp(t) + ", test month starts " +
               csv::format_timestamp(outer_start));
  const InnerBounds bounds = inner_bounds(outer_start);
  const auto budget = static_cast<std::size_t>(config.budget);

  TuneResult result;
  std::vector<std::optional<TrialResult>> slots(budget);
  if (!log_path.empty()) {
    for (auto& t : read_log(log_path, config.base_seed)) {
      if (t.index < budget) {
        slots[t.index] = std::move(t);
        ++result.resumed;
      }
    }
  }
  std::ofstream log;
  if (!log_path.empty()) {
    // Terminate a partial last record so appends start on a fresh line.
    bool needs_newline = false;
    if (std::ifstream prev{log_path, std::ios::binary | std::ios::ate}; prev && prev.tellg() > 0) {
      prev.seekg(-1, std::ios::end);
      needs_newline = prev.get() != '\n';
    }
    log.open(log_path, std::ios::app);
    if (log && needs_newline) log << '\n';
    if (!log) fail(Errc::Io, where, "cannot append to " + log_path);
  }

  auto params_for = [&](std::size_t i, const std::vector<TrialResult>& done) {
    Rng rng(derive_seed(config.base_seed, i, 0x5a));
    const std::size_t warmup = (budget + 4) / 5;
    if (config.sampler == Sampler::Adaptive && i >= warmup && !done.empty()) return adaptive_sample(done, rng);
    return sample(rng);
  };

  auto run_batch = [&](std::size_t begin, std::size_t end) {
    std::vector<TrialResult> done;
    for (std::size_t i = 0; i < begin; ++i) done.push_back(*slots[i]);
    std::vector<std::size_t> todo;
    std::vector<MlpHyperparams> params(end - begin);
    for (std::size_t i = begin; i < end; ++i) {
      params[i - begin] = params_for(i, done);
      if (!slots[i]) todo.push_back(i);
    }
    std::size_t next_to_log = begin;
    std::vector<char> finished(end - begin, 0);
    for (std::size_t i = begin; i < end; ++i) finished[i - begin] = slots[i].has_value();
    auto flush = [&] {
      while (next_to_log < end && finished[next_to_log - begin]) {
        const auto& t = *slots[next_to_log];
        if (log.is_open() && std::find(todo.begin(), todo.end(), next_to_log) != todo.end()) {
          log << trial_record(t, config.base_seed);
          log.flush();
        }
        ++next_to_log;
      }
    };
    flush();
    std::exception_ptr error;
    const auto count = static_cast<std::ptrdiff_t>(todo.size());
#pragma omp parallel for schedule(dynamic, 1) num_threads(kernels::jobs())
    for (std::ptrdiff_t w = 0; w < count; ++w) {
      const std::size_t i = todo[static_cast<std::size_t>(w)];
      try {
        const std::uint64_t seed = derive_seed(config.base_seed, i, 0);
        TrialResult t = run_trial(params[i - begin], matrix, bounds, seed, config.train);
        t.index = i;
#pragma omp critical(tuner_log)
        {
          slots[i] = std::move(t);
          finished[i - begin] = 1;
          flush();
        }
      } catch (...) {
#pragma omp critical(tuner_log)
        if (!error) error = std::current_exception();
      }
    }
    if (error) std::rethrow_exception(error);
  };

  if (config.sampler == Sampler::Random) {
    run_batch(0, budget);
  } else {
    const std::size_t warmup = (budget + 4) / 5;
    run_batch(0, warmup);
    for (std::size_t b = warmup; b < budget; b += static_cast<std::size_t>(config.adaptive_batch))
      run_batch(b, std::min(budget, b + static_cast<std::size_t>(config.adaptive_batch)));
  }
  for (auto& s : slots) result.trials.push_back(*s);
  result.top = select_top(result.trials, static_cast<std::size_t>(config.top_k));
  return result;
}

}  // namespace peakload::tuner
