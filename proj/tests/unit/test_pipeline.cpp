#include <gtest/gtest.h>

#include <cmath>
#include <random>

#include "peakload/errors.hpp"
#include "peakload/pipeline.hpp"
#include "peakload/synthgen.hpp"

using namespace peakload;
using namespace peakload::pipeline;

namespace {

Timestamp month(int y, unsigned m) { return Timestamp{std::chrono::sys_days{std::chrono::year{y} / m / 1}}; }

Errc code_of(auto&& fn) {
  try {
    fn();
  } catch (const Error& e) {
    return e.code();
  }
  ADD_FAILURE() << "no error thrown";
  return Errc::Usage;
}

/// Random truth and a matching prediction set on n slots.
std::pair<Truth, PredictionSet> random_case(std::size_t n, unsigned seed) {
  std::mt19937_64 g(seed);
  std::normal_distribution<double> noise(0.0, 1.0);
  Truth t;
  PredictionSet p;
  t.month = p.month = month(2021, 3);
  p.model = "m";
  for (std::size_t i = 0; i < n; ++i) {
    const Timestamp ts = t.month + kSlotLength * static_cast<std::int64_t>(i);
    const double load = 10.0 + noise(g);
    t.timestamps.push_back(ts);
    t.load.push_back(load);
    t.load_min.push_back(load - std::abs(noise(g)));
    t.load_max.push_back(load + std::abs(noise(g)));
    p.timestamps.push_back(ts);
    p.load.push_back(load);
    p.d_min.push_back(-std::abs(noise(g)));
    p.d_max.push_back(std::abs(noise(g)));
  }
  return {t, p};
}

PredictionSet constant_set(const Truth& t, std::string name, double d_min, double d_max) {
  PredictionSet p;
  p.model = std::move(name);
  p.month = t.month;
  p.timestamps = t.timestamps;
  p.load = t.load;
  p.d_min.assign(t.size(), d_min);
  p.d_max.assign(t.size(), d_max);
  return p;
}

PredictionSet restrict(const PredictionSet& p, std::size_t stride) {
  PredictionSet r;
  r.model = p.model;
  r.month = p.month;
  for (std::size_t i = 0; i < p.size(); i += stride) {
    r.timestamps.push_back(p.timestamps[i]);
    r.load.push_back(p.load[i]);
    r.d_min.push_back(p.d_min[i]);
    r.d_max.push_back(p.d_max[i]);
  }
  return r;
}

const TimeSeriesFrame& synth_frame() {
  static const TimeSeriesFrame f = [] {
    SynthConfig c;
    c.start = month(2020, 1);
    c.days = 31 + 29 + 31;
    return generate(c).frame;
  }();
  return f;
}

}  // namespace

TEST(Ensemble, AverageMembers) {
  Eigen::MatrixXd a(1, 2), b(1, 2);
  a << 1, 5;
  b << 3, 7;
  const auto m = average_members({a, b});
  EXPECT_EQ(m(0, 0), 2.0);
  EXPECT_EQ(m(0, 1), 6.0);
  EXPECT_TRUE(average_members({a}) == a);
  EXPECT_EQ(code_of([] { average_members({}); }), Errc::NoMembers);
}

TEST(Ensemble, DeterministicAndCommutesWithRestriction) {
  const auto full = build_matrix(synth_frame(), calendar_inputs(synth_frame()));
  const auto split = full.lower_bound(month(2020, 3));
  const auto train = full.slice(0, split);
  const auto test = full.slice(split, full.rows());
  mlp::MlpHyperparams p;
  p.features.fill(true);
  p.layers[0].units = 6;
  p.layers[1].units = 4;
  mlp::TrainOptions o;
  o.max_epochs = 3;
  const auto a = ensemble_predict({p, p}, 2, train, test, 11, o);
  const auto b = ensemble_predict({p, p}, 2, train, test, 11, o);
  EXPECT_TRUE(a == b);
  const auto part = ensemble_predict({p, p}, 2, train, test.slice(100, 300), 11, o);
  EXPECT_TRUE(part == a.middleRows(100, 200));
  EXPECT_EQ(code_of([&] { ensemble_predict({}, 2, train, test, 11, o); }), Errc::NoMembers);
}

TEST(Combine, UniformMean) {
  auto [t, p] = random_case(5, 1);
  const auto c = combine({constant_set(t, "a", 0, 1), constant_set(t, "b", -3, 4), constant_set(t, "c", -6, 7)});
  for (std::size_t i = 0; i < t.size(); ++i) {
    EXPECT_EQ(c.d_min[i], -3.0);
    EXPECT_EQ(c.d_max[i], 4.0);
  }
  EXPECT_EQ(c.model, "combination");
  const auto self = combine({p});
  EXPECT_EQ(self.d_min, p.d_min);
  EXPECT_EQ(self.d_max, p.d_max);
}

TEST(Combine, MatchesBruteForceMean) {
  std::vector<PredictionSet> sets;
  for (unsigned s = 0; s < 3; ++s) sets.push_back(random_case(200, 10 + s).second);
  const auto c = combine(sets);
  for (std::size_t i = 0; i < 200; ++i) {
    double mn = 0.0, mx = 0.0;
    for (const auto& s : sets) {
      mn += s.d_min[i];
      mx += s.d_max[i];
    }
    EXPECT_NEAR(c.d_min[i], mn / 3.0, 1e-12);
    EXPECT_NEAR(c.d_max[i], mx / 3.0, 1e-12);
    EXPECT_NEAR(c.pred_max(i), c.load[i] + mx / 3.0, 1e-12);
  }
}

TEST(Combine, CommutesWithRestriction) {
  std::vector<PredictionSet> sets, restricted;
  for (unsigned s = 0; s < 3; ++s) {
    sets.push_back(random_case(100, 20 + s).second);
    restricted.push_back(restrict(sets.back(), 3));
  }
  const auto a = restrict(combine(sets), 3);
  const auto b = combine(restricted);
  EXPECT_EQ(a.timestamps, b.timestamps);
  EXPECT_EQ(a.d_min, b.d_min);
  EXPECT_EQ(a.d_max, b.d_max);
}

TEST(Combine, SlotMismatch) {
  const auto a = random_case(10, 1).second;
  const auto b = random_case(9, 1).second;
  EXPECT_EQ(code_of([&] { combine({a, b}); }), Errc::SlotMismatch);
  auto c = a;
  c.timestamps[4] += kSlotLength * 100;
  EXPECT_EQ(code_of([&] { combine({a, c}); }), Errc::SlotMismatch);
}

TEST(Naive, ZeroDeltasAndRmseFromTargets) {
  const auto& f = synth_frame();
  const auto m = month(2020, 2);
  const auto naive = naive_predict(f, m);
  const auto truth = month_truth(f, m);
  ASSERT_EQ(naive.size(), truth.size());
  ASSERT_EQ(naive.size(), 29u * 48u);
  for (std::size_t i = 0; i < naive.size(); ++i) {
    EXPECT_EQ(naive.d_min[i], 0.0);
    EXPECT_EQ(naive.d_max[i], 0.0);
  }
  double sum = 0.0;
  std::size_t n = 0;
  for (std::size_t i = 0; i < f.size(); ++i) {
    if (f.timestamp(i) < m || !(f.timestamp(i) < month(2020, 3))) continue;
    const double dmin = f.load_min[i] - f.load[i];
    const double dmax = f.load_max[i] - f.load[i];
    sum += (dmin * dmin + dmax * dmax) / 2.0;
    ++n;
  }
  const auto s = score(naive, truth);
  EXPECT_NEAR(s.rmse, std::sqrt(sum / static_cast<double>(n)), 1e-12 * s.rmse);
  EXPECT_EQ(s.score, 1.0);
  EXPECT_EQ(code_of([&] { naive_predict(f, month(2020, 4)); }), Errc::RangeOutsideData);
}

TEST(Score, PerfectAndConstantError) {
  auto [t, p] = random_case(50, 3);
  for (std::size_t i = 0; i < t.size(); ++i) {
    p.d_min[i] = t.load_min[i] - t.load[i];
    p.d_max[i] = t.load_max[i] - t.load[i];
  }
  auto s = score(p, t);
  EXPECT_EQ(s.rmse, 0.0);
  EXPECT_EQ(s.score, 0.0);
  for (std::size_t i = 0; i < t.size(); ++i) {
    p.d_min[i] += 1.0;
    p.d_max[i] -= 1.0;
  }
  s = score(p, t);
  EXPECT_NEAR(s.rmse, 1.0, 1e-12);
  EXPECT_NEAR(s.rmse_min, 1.0, 1e-12);
  EXPECT_NEAR(s.rmse_max, 1.0, 1e-12);
}

TEST(Score, JointIdentity) {
  for (unsigned seed = 0; seed < 20; ++seed) {
    const auto [t, p] = random_case(100 + seed, seed);
    const auto s = score(p, t);
    EXPECT_NEAR(s.rmse * s.rmse, (s.rmse_min * s.rmse_min + s.rmse_max * s.rmse_max) / 2.0, 1e-12 * s.rmse * s.rmse);
    EXPECT_GE(s.rmse, 0.0);
  }
}

TEST(Score, NaiveIsExactlyOne) {
  for (unsigned seed = 0; seed < 20; ++seed) {
    const auto [t, p] = random_case(37 * (seed + 1), seed);
    EXPECT_EQ(score(constant_set(t, "naive", 0, 0), t).score, 1.0);
  }
}

TEST(Score, InvariantUnderRescaling) {
  for (double c : {1e-3, 0.7, 3.0, 1e4}) {
    auto [t, p] = random_case(300, 5);
    const double base = score(p, t).score;
    for (std::size_t i = 0; i < t.size(); ++i) {
      t.load[i] *= c;
      t.load_min[i] *= c;
      t.load_max[i] *= c;
      p.load[i] *= c;
      p.d_min[i] *= c;
      p.d_max[i] *= c;
    }
    EXPECT_NEAR(score(p, t).score, base, 1e-9 * base);
  }
}

TEST(Score, Errors) {
  auto [t, p] = random_case(10, 1);
  auto short_p = restrict(p, 2);
  EXPECT_EQ(code_of([&] { score(short_p, t); }), Errc::SlotMismatch);
  Truth empty;
  PredictionSet none;
  EXPECT_EQ(code_of([&] { score(none, empty); }), Errc::EmptyMonth);
}

TEST(Clamp, ProjectsAndNeverHurtsFeasibleTruth) {
  for (unsigned seed = 0; seed < 10; ++seed) {
    auto [t, p] = random_case(200, seed);
    std::mt19937_64 g(seed);
    std::normal_distribution<double> noise(0.0, 1.0);
    for (std::size_t i = 0; i < p.size(); ++i) {
      p.d_min[i] = noise(g);
      p.d_max[i] = noise(g);
    }
    const double before = score(p, t).rmse;
    clamp_deltas(p);
    for (std::size_t i = 0; i < p.size(); ++i) {
      EXPECT_LE(p.d_min[i], 0.0);
      EXPECT_GE(p.d_max[i], 0.0);
    }
    EXPECT_LE(score(p, t).rmse, before);
  }
}

TEST(Align, FallsBackToZero) {
  const auto [t, p] = random_case(4, 2);
  std::vector<Timestamp> rows{t.timestamps[0], t.timestamps[2], t.timestamps[3]};
  Eigen::MatrixXd pred(3, 2);
  pred << -1, 1, -2, 2, NAN, 3;
  std::size_t fallbacks = 0;
  const auto a = align("m", t, rows, pred, &fallbacks);
  EXPECT_EQ(fallbacks, 2u);
  EXPECT_EQ(a.d_min, (std::vector<double>{-1, 0, -2, 0}));
  EXPECT_EQ(a.d_max, (std::vector<double>{1, 0, 2, 0}));
}

TEST(MonthTruth, EmptyMonth) {
  EXPECT_EQ(code_of([] { month_truth(synth_frame(), month(2021, 1)); }), Errc::EmptyMonth);
}

TEST(Report, RoundTripAndAverages) {
  BacktestReport r;
  r.models = {"naive", "gam.simple", "combination"};
  r.months = {month(2020, 10), month(2020, 11), month(2020, 12)};
  std::mt19937_64 g(4);
  std::uniform_real_distribution<double> u(0.0, 3.0);
  for (const auto& m : r.models)
    for (std::size_t i = 0; i < r.months.size(); ++i) {
      Metrics x{u(g), u(g), u(g), m == "naive" ? 1.0 : u(g) / 3.0};
      r.metrics[m].push_back(x);
    }
  const auto text = format_report_csv(r, "# seed=1\n");
  const auto back = parse_report_csv(text);
  EXPECT_EQ(back.models, r.models);
  EXPECT_EQ(back.months, r.months);
  for (const auto& m : r.models)
    for (std::size_t i = 0; i < r.months.size(); ++i) {
      EXPECT_EQ(back.metrics.at(m)[i].rmse, r.metrics.at(m)[i].rmse);
      EXPECT_EQ(back.metrics.at(m)[i].score, r.metrics.at(m)[i].score);
    }
  EXPECT_EQ(format_report_csv(back, "# seed=1\n"), text);
  // The average column is the plain mean of the monthly columns.
  for (const auto& m : r.models) {
    double s = 0.0;
    for (const auto& x : r.metrics.at(m)) s += x.rmse_max;
    EXPECT_NEAR(r.average(m).rmse_max, s / 3.0, 1e-15);
  }
  EXPECT_EQ(r.average("naive").score, 1.0);
  EXPECT_NE(format_report_table(r).find("gam.simple"), std::string::npos);
}

TEST(Backtest, NaiveOnlyScoresOneAndNoLeakage) {
  SynthConfig c;
  c.start = month(2020, 1);
  c.days = 31 + 29 + 31 + 30;
  const auto f = generate(c).frame;
  BacktestConfig cfg;
  cfg.months = {month(2020, 3), month(2020, 4)};
  cfg.models = {"naive", "gam.simple"};
  cfg.combination_members = {};
  cfg.k0 = 6;
  cfg.k1 = 4;
  cfg.k2 = 4;
  const auto res = backtest(f, cfg);
  for (const auto& x : res.report.metrics.at("naive")) EXPECT_EQ(x.score, 1.0);
  for (const auto& x : res.report.metrics.at("gam.simple")) EXPECT_LT(x.score, 1.0);
  ASSERT_EQ(res.last_training_time.size(), 2u);
  for (std::size_t i = 0; i < 2; ++i) EXPECT_LT(res.last_training_time[i], cfg.months[i]);
  EXPECT_EQ(res.fallback_slots, 0u);
}
