#include <omp.h>

#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <sstream>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "json.hpp"
#include "peakload/csv.hpp"
#include "peakload/errors.hpp"
#include "peakload/features.hpp"
#include "peakload/gam.hpp"
#include "peakload/kernels.hpp"
#include "peakload/mlp.hpp"
#include "peakload/pipeline.hpp"
#include "peakload/synthgen.hpp"
#include "peakload/timeseries.hpp"
#include "peakload/tuner.hpp"
#include "peakload/version.hpp"

namespace fs = std::filesystem;
using nlohmann::json;
using namespace peakload;

namespace {

struct UsageError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

[[noreturn]] void usage(const std::string& msg) { throw UsageError(msg); }

std::string read_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) fail(Errc::Io, "cli.run", "cannot open '" + path + "'");
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

Timestamp parse_instant(const std::string& text, const char* flag) {
  if (auto m = parse_month(text)) return *m;
  if (auto t = csv::parse_timestamp(text)) return *t;
  if (auto t = csv::parse_timestamp(text + "T00:00Z")) return *t;
  usage(std::string(flag) + ": expected YYYY-MM, YYYY-MM-DD or an ISO timestamp, got '" + text + "'");
}

Timestamp parse_month_flag(const std::string& text, const char* flag) {
  auto m = parse_month(text);
  if (!m) usage(std::string(flag) + ": expected YYYY-MM, got '" + text + "'");
  return *m;
}

/// Accepts a list of months and `FROM:TO` inclusive ranges.
std::vector<Timestamp> parse_months(const std::vector<std::string>& items) {
  std::vector<Timestamp> out;
  for (const auto& item : items) {
    const auto colon = item.find(':');
    if (colon == std::string::npos) {
      out.push_back(parse_month_flag(item, "--months"));
      continue;
    }
    const Timestamp a = parse_month_flag(item.substr(0, colon), "--months");
    const Timestamp b = parse_month_flag(item.substr(colon + 1), "--months");
    if (b < a) usage("--months: empty range '" + item + "'");
    for (Timestamp m = a; m <= b; m = add_months(m, 1)) out.push_back(m);
  }
  return out;
}

struct Common {
  std::uint64_t seed = 7;
  int jobs = 0;
  std::string config;
};

struct DataOpts {
  std::string load;
  std::vector<std::string> weather;
  std::string dsocd_mode = "consistent";
  int phase_offset = 1;
  std::string since;
  std::string until;
};

void add_data_options(CLI::App* sub, DataOpts& d, bool range) {
  sub->add_option("--load", d.load, "Half-hourly load CSV (timestamp,load_mw[,load_min_mw,load_max_mw])");
  sub->add_option("--weather", d.weather, "Weather station CSV; repeat or comma-separate for several")->delimiter(',');
  sub->add_option("--dsocd-mode", d.dsocd_mode, "Day-boundary adjustment: consistent or paper-literal")
      ->check(CLI::IsMember({"consistent", "paper-literal"}));
  sub->add_option("--phase-offset", d.phase_offset, "Slot phase of 00:00 UTC (phase = slot + offset mod 48)");
  if (range) {
    sub->add_option("--since", d.since, "First instant used (YYYY-MM, YYYY-MM-DD or timestamp; empty = data start)");
    sub->add_option("--until", d.until, "End instant, exclusive (empty = data end)");
  }
}

FeatureOptions feature_options(const DataOpts& d) {
  FeatureOptions o;
  o.mode = d.dsocd_mode == "paper-literal" ? DsocdMode::PaperLiteral : DsocdMode::Consistent;
  o.phase.offset = d.phase_offset;
  return o;
}

TimeSeriesFrame read_frame(const DataOpts& d) {
  if (d.load.empty()) usage("--load is required");
  for (const auto& p : d.weather)
    if (!fs::exists(p)) fail(Errc::Io, "cli.run", "weather file '" + p + "' does not exist");
  TimeSeriesFrame frame = load_frame(d.load, d.weather);
  if (!d.since.empty() || !d.until.empty()) {
    const Timestamp from = d.since.empty() ? frame.start : parse_instant(d.since, "--since");
    const Timestamp to = d.until.empty() ? frame.timestamp(frame.size() - 1) + kSlotLength
                                         : parse_instant(d.until, "--until");
    frame = frame.slice_time(from, to);
    if (frame.size() == 0) fail(Errc::RangeOutsideData, "cli.run", "--since/--until select no rows");
  }
  return frame;
}

FeatureMatrix read_matrix(const DataOpts& d) {
  const TimeSeriesFrame frame = read_frame(d);
  return build_matrix(frame, calendar_inputs(frame), feature_options(d));
}

struct TrainOpts {
  int max_epochs = 1500;
  int patience = 50;
  int batch_size = 336;
};

void add_train_options(CLI::App* sub, TrainOpts& t) {
  sub->add_option("--max-epochs", t.max_epochs, "DNN epoch cap");
  sub->add_option("--patience", t.patience, "DNN early-stopping patience in epochs");
  sub->add_option("--batch-size", t.batch_size, "DNN minibatch size");
}

mlp::TrainOptions train_options(const TrainOpts& t) {
  mlp::TrainOptions o;
  o.max_epochs = t.max_epochs;
  o.patience = t.patience;
  o.batch_size = t.batch_size;
  return o;
}

struct GamOpts {
  int k0 = 27;
  int k1 = 9;
  int k2 = 9;
  std::string knots = "quantile";
  std::string criterion = "bic";
  int discretize = 0;
  bool absolute_wind = false;
};

void add_gam_options(CLI::App* sub, GamOpts& g) {
  sub->add_option("--k0", g.k0, "Basis size of univariate terms");
  sub->add_option("--k1", g.k1, "Basis size of the first interaction margin");
  sub->add_option("--k2", g.k2, "Basis size of the second interaction margin");
  sub->add_option("--knots", g.knots, "Knot placement: quantile or equal")->check(CLI::IsMember({"quantile", "equal"}));
  sub->add_option("--criterion", g.criterion, "Smoothing selection criterion: bic or gcv")
      ->check(CLI::IsMember({"bic", "gcv"}));
  sub->add_option("--discretize", g.discretize, "Bin covariates into this many values before fitting (0 = off)");
  sub->add_flag("--absolute-wind", g.absolute_wind, "Replace windN/windE by wind speed");
}

gam::GamOptions gam_options(const GamOpts& g) {
  gam::GamOptions o;
  o.knots = g.knots == "equal" ? spline::KnotPlacement::Equal : spline::KnotPlacement::Quantile;
  o.selection.criterion = g.criterion == "gcv" ? spline::Criterion::GCV : spline::Criterion::BIC;
  o.discretize_bins = g.discretize;
  return o;
}

struct TunerOpts {
  int budget = 60;
  int top_k = 5;
  std::string sampler = "random";
};

void add_tuner_options(CLI::App* sub, TunerOpts& t) {
  sub->add_option("--budget", t.budget, "Tuning trials per study");
  sub->add_option("--top-k", t.top_k, "Hyperparameter sets kept for the ensemble");
  sub->add_option("--sampler", t.sampler, "Search strategy: random or adaptive")
      ->check(CLI::IsMember({"random", "adaptive"}));
}

tuner::TunerConfig tuner_config(const TunerOpts& t, const TrainOpts& tr, std::uint64_t seed) {
  tuner::TunerConfig c;
  c.budget = t.budget;
  c.top_k = t.top_k;
  c.sampler = t.sampler == "adaptive" ? tuner::Sampler::Adaptive : tuner::Sampler::Random;
  c.base_seed = seed;
  c.train = train_options(tr);
  return c;
}

/// Applies config-file values to every option the command line left unset.
void merge_config(CLI::App* sub, const std::string& path) {
  json doc;
  try {
    doc = json::parse(read_file(path));
  } catch (const json::exception& e) {
    fail(Errc::BadSchema, "cli.config", "'" + path + "': " + e.what());
  }
  if (!doc.is_object()) fail(Errc::BadSchema, "cli.config", "'" + path + "' must hold a JSON object");
  // Keys under the subcommand name override shared top-level keys.
  json merged = json::object();
  for (auto it = doc.begin(); it != doc.end(); ++it)
    if (!it.value().is_object()) merged[it.key()] = it.value();
  if (doc.contains(sub->get_name()) && doc[sub->get_name()].is_object())
    for (auto it = doc[sub->get_name()].begin(); it != doc[sub->get_name()].end(); ++it) merged[it.key()] = it.value();
  for (auto it = merged.begin(); it != merged.end(); ++it) {
    std::string key = it.key();
    for (auto& c : key)
      if (c == '_') c = '-';
    CLI::Option* opt = sub->get_option_no_throw("--" + key);
    if (opt == nullptr) fail(Errc::BadSchema, "cli.config", "unknown key '" + it.key() + "' for " + sub->get_name());
    if (opt->count() > 0 || key == "config") continue;
    std::vector<std::string> values;
    auto text = [](const json& v) { return v.is_string() ? v.get<std::string>() : v.dump(); };
    if (it.value().is_array())
      for (const auto& v : it.value()) values.push_back(text(v));
    else
      values.push_back(text(it.value()));
    opt->clear();
    opt->add_result(values);
    opt->run_callback();
  }
}

std::string provenance(const CLI::App* sub, std::uint64_t seed) {
  return csv::provenance_line(seed, csv::hash_hex(sub->get_name() + "\n" + sub->config_to_str(true, false)));
}

void report_ingest(const IngestReport& r) {
  std::printf("rows_read=%zu\ndropped_rows=%zu\nduplicate_rows=%zu\ngap_rows=%zu\ninconsistent_rows=%zu\n", r.rows_read,
              r.dropped_rows, r.duplicate_rows, r.gap_rows, r.inconsistent_rows);
}

std::string out_path(const std::string& dir, const std::string& name) { return (fs::path(dir) / name).string(); }

int exit_code(ErrorClass c) { return static_cast<int>(c); }

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Half-hourly load minimum and maximum prediction with GAMs and neural networks", "peakload"};
  app.option_defaults()->always_capture_default();
  app.require_subcommand(1);
  app.set_version_flag("--version", std::string(kVersion));
  app.get_formatter()->column_width(36);

  Common common;
  auto add_common = [&](CLI::App* sub) {
    sub->add_option("--seed", common.seed, "Seed for every random choice");
    sub->add_option("--jobs", common.jobs, "Worker threads (0 = all cores)")->check(CLI::NonNegativeNumber);
    sub->add_option("--config", common.config, "JSON file with option values; command-line flags take precedence");
  };

  // ingest
  auto* ingest = app.add_subcommand("ingest", "Validate and normalize a load CSV and weather station CSVs");
  DataOpts ingest_data;
  std::string ingest_out = "data";
  bool ingest_sorted = false;
  ingest->add_option("--load", ingest_data.load, "Half-hourly load CSV (timestamp,load_mw[,load_min_mw,load_max_mw])");
  ingest->add_option("--weather", ingest_data.weather, "Weather station CSV; repeat or comma-separate for several")
      ->delimiter(',');
  ingest->add_option("--out", ingest_out, "Output directory for load.csv and weather.csv");
  ingest->add_flag("--require-sorted", ingest_sorted, "Reject out-of-order rows instead of sorting");
  add_common(ingest);

  // synth
  auto* synth = app.add_subcommand("synth", "Generate synthetic minute load, aggregated to half-hourly CSVs");
  SynthConfig sc;
  std::string synth_start = "2019-10-01";
  std::string synth_out = "synth";
  bool synth_minutes = false;
  synth->add_option("--days", sc.days, "Days to generate")->check(CLI::PositiveNumber);
  synth->add_option("--start", synth_start, "First day (YYYY-MM-DD, UTC)");
  synth->add_option("--base-mw", sc.base_mw, "Base load in MW");
  synth->add_option("--daily-amp", sc.daily_amp, "Daily sinusoid amplitude in MW");
  synth->add_option("--annual-amp", sc.annual_amp, "Annual sinusoid amplitude in MW");
  synth->add_option("--solar-coupling", sc.solar_coupling, "Load reduction in MW per W/m^2 of irradiance");
  synth->add_option("--noise-sd", sc.noise_sd, "Minute noise standard deviation in MW at base level");
  synth->add_option("--spike-rate", sc.spike_rate, "Spike probability per minute");
  synth->add_option("--spike-amp", sc.spike_amp_mw, "Spike magnitude in MW at base level");
  synth->add_option("--out", synth_out, "Output directory for load.csv and weather.csv");
  synth->add_flag("--minutes", synth_minutes, "Also write the minute series as minutes.csv");
  add_common(synth);

  // features
  auto* features = app.add_subcommand("features", "Build the 21-column input matrix with targets");
  DataOpts feat_data;
  std::string feat_out = "features.csv";
  add_data_options(features, feat_data, true);
  features->add_option("--out", feat_out, "Output CSV");
  add_common(features);

  // fit
  auto* fitc = app.add_subcommand("fit", "Fit one GAM variant or one DNN and save it");
  DataOpts fit_data;
  GamOpts fit_gam;
  TrainOpts fit_train;
  std::string fit_model = "gam.red";
  std::string fit_target = "max";
  std::string fit_out = "fit.json";
  std::string fit_stats;
  std::string fit_params;
  int fit_params_index = 0;
  add_data_options(fitc, fit_data, true);
  fitc->add_option("--model", fit_model, "gam.full, gam.red, gam.simple, gam.noweather or dnn");
  fitc->add_option("--target", fit_target, "GAM target: min or max")->check(CLI::IsMember({"min", "max"}));
  add_gam_options(fitc, fit_gam);
  fitc->add_option("--params", fit_params, "DNN hyperparameters: a tune output or a single parameter object");
  fitc->add_option("--params-index", fit_params_index, "Which set of a tune output to use");
  add_train_options(fitc, fit_train);
  fitc->add_option("--out", fit_out, "Fit file (JSON)");
  fitc->add_option("--stats", fit_stats, "Term statistics CSV for GAM fits (empty = skip)");
  add_common(fitc);

  // tune
  auto* tunec = app.add_subcommand("tune", "Search DNN hyperparameters for one test month");
  DataOpts tune_data;
  TunerOpts tune_opts;
  TrainOpts tune_train;
  std::string tune_month;
  std::string tune_log = "trials.jsonl";
  std::string tune_out = "tune.json";
  add_data_options(tunec, tune_data, false);
  tunec->add_option("--month", tune_month, "Outer test month (YYYY-MM); only earlier data is used");
  add_tuner_options(tunec, tune_opts);
  add_train_options(tunec, tune_train);
  tunec->add_option("--log", tune_log, "Trial log (JSON lines); existing records are resumed");
  tunec->add_option("--out", tune_out, "Top hyperparameter sets (JSON)");
  add_common(tunec);

  // predict
  auto* predictc = app.add_subcommand("predict", "Predict with saved fits");
  DataOpts pred_data;
  std::vector<std::string> pred_fits;
  std::string pred_out = "predictions.csv";
  add_data_options(predictc, pred_data, true);
  predictc->add_option("--fit", pred_fits, "Fit file from fit; repeat for several")->delimiter(',');
  predictc->add_option("--out", pred_out, "Output CSV (timestamp,model,target,delta_mw,pred_mw)");
  add_common(predictc);

  // backtest
  auto* backtestc = app.add_subcommand("backtest", "Rolling monthly evaluation of every model against the naive benchmark");
  DataOpts bt_data;
  GamOpts bt_gam;
  TunerOpts bt_tuner;
  TrainOpts bt_train;
  std::vector<std::string> bt_months;
  std::vector<std::string> bt_models = {"naive", "gam.simple", "gam.red", "gam.full", "dnn", "combination"};
  std::vector<std::string> bt_members = {"gam.full", "gam.red", "dnn"};
  int bt_window = 0;
  int bt_dnn_window = 0;
  int bt_runs = 10;
  bool bt_reuse = false;
  bool bt_clamp = false;
  bool bt_parallel = false;
  bool bt_paper = false;
  bool bt_quiet = false;
  std::string bt_out = "backtest";
  add_data_options(backtestc, bt_data, false);
  backtestc->add_option("--months", bt_months, "Test months: YYYY-MM items or FROM:TO ranges")->delimiter(',');
  backtestc->add_option("--models", bt_models, "Models to score")->delimiter(',');
  backtestc->add_option("--members", bt_members, "Members of the combination")->delimiter(',');
  backtestc->add_option("--window-months", bt_window, "Training window in months (0 = expanding)");
  backtestc->add_option("--dnn-window-months", bt_dnn_window, "DNN ensemble training window in months (0 = all)");
  add_gam_options(backtestc, bt_gam);
  add_tuner_options(backtestc, bt_tuner);
  add_train_options(backtestc, bt_train);
  backtestc->add_option("--ensemble-runs", bt_runs, "Training runs per hyperparameter set");
  backtestc->add_flag("--reuse-top", bt_reuse, "Tune for the first month only and reuse its sets");
  backtestc->add_flag("--clamp", bt_clamp, "Force predicted min <= load <= predicted max");
  backtestc->add_flag("--parallel-months", bt_parallel, "Run months concurrently (GAM-only runs)");
  backtestc->add_flag("--paper-scale", bt_paper, "Use 1000 tuning trials, overriding --budget");
  backtestc->add_flag("--quiet", bt_quiet, "No progress messages");
  backtestc->add_option("--out", bt_out, "Output directory for report.csv, report.txt and predictions.csv");
  add_common(backtestc);

  // report
  auto* reportc = app.add_subcommand("report", "Render a backtest report CSV");
  std::string rep_in;
  std::string rep_format = "table";
  std::string rep_out;
  reportc->add_option("--report", rep_in, "report.csv from backtest");
  reportc->add_option("--format", rep_format, "table or csv")->check(CLI::IsMember({"table", "csv"}));
  reportc->add_option("--out", rep_out, "Output file (empty = stdout)");
  add_common(reportc);

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int rc = app.exit(e);
    return rc == 0 ? 0 : 1;
  }

  CLI::App* sub = app.get_subcommands().front();
  try {
    if (!common.config.empty()) merge_config(sub, common.config);
    kernels::set_jobs(common.jobs > 0 ? common.jobs : omp_get_num_procs());
    const std::string prov = provenance(sub, common.seed);

    if (sub == ingest) {
      if (ingest_data.load.empty()) usage("--load is required");
      IngestOptions io;
      io.require_sorted = ingest_sorted;
      auto rep = ingest_load(ingest_data.load, {}, io);
      if (!ingest_data.weather.empty()) {
        std::vector<StationSeries> stations;
        for (const auto& p : ingest_data.weather) stations.push_back(ingest_weather(p));
        attach_weather(rep.frame, average_weather(stations));
      }
      rep.frame.validate();
      csv::write_atomic(out_path(ingest_out, "load.csv"), format_load_csv(rep.frame, prov));
      if (rep.frame.has_weather())
        csv::write_atomic(out_path(ingest_out, "weather.csv"), format_weather_csv(rep.frame, prov));
      report_ingest(rep);
      std::printf("slots=%zu\n", rep.frame.size());
    } else if (sub == synth) {
      sc.seed = common.seed;
      sc.start = parse_instant(synth_start, "--start");
      const auto out = generate(sc);
      csv::write_atomic(out_path(synth_out, "load.csv"), format_load_csv(out.frame, prov));
      csv::write_atomic(out_path(synth_out, "weather.csv"), format_weather_csv(out.frame, prov));
      if (synth_minutes) {
        std::string text = prov + "timestamp,load_mw\n";
        for (std::size_t m = 0; m < out.minutes.values.size(); ++m)
          text += csv::format_timestamp(out.minutes.start + std::chrono::minutes{static_cast<long>(m)}) + "," +
                  csv::format_double(out.minutes.values[m]) + "\n";
        csv::write_atomic(out_path(synth_out, "minutes.csv"), text);
      }
      std::printf("slots=%zu\n", out.frame.size());
    } else if (sub == features) {
      const FeatureMatrix m = read_matrix(feat_data);
      csv::write_atomic(feat_out, format_feature_csv(m, prov));
      std::printf("rows=%zu\ntrainable_rows=%zu\n", m.rows(), m.trainable_rows().size());
    } else if (sub == fitc) {
      const FeatureMatrix m = read_matrix(fit_data);
      if (fit_model == "dnn") {
        if (fit_params.empty()) usage("--params is required for --model dnn");
        const json doc = json::parse(read_file(fit_params));
        json pj = doc;
        if (doc.contains("top")) {
          if (fit_params_index < 0 || fit_params_index >= static_cast<int>(doc["top"].size()))
            usage("--params-index out of range");
          pj = doc["top"][static_cast<std::size_t>(fit_params_index)]["params"];
        }
        const auto f = mlp::train(mlp::params_from(pj), m, common.seed, train_options(fit_train));
        mlp::save(f, fit_out);
        std::printf("model=dnn\nstopped_epoch=%d\nbest_epoch=%d\nbest_validation=%.17g\n", f.stopped_epoch,
                    f.best_epoch, f.best_validation);
      } else {
        gam::GamSpec spec = gam::build_spec(gam::parse_variant(fit_model), gam::parse_target(fit_target),
                                            fit_gam.absolute_wind);
        spec.k0 = fit_gam.k0;
        spec.k1 = fit_gam.k1;
        spec.k2 = fit_gam.k2;
        const auto f = gam::fit(spec, m, gam_options(fit_gam));
        gam::save(f, fit_out);
        if (!fit_stats.empty()) csv::write_atomic(fit_stats, gam::format_term_stats_csv(gam::term_stats(f), prov));
        for (const auto& w : f.warnings) std::fprintf(stderr, "warning: %s\n", w.c_str());
        std::printf("model=%s\ntarget=%s\nrows=%zu\nterms=%zu\nedf_total=%.17g\ntraining_rmse=%.17g\n",
                    fit_model.c_str(), fit_target.c_str(), f.rows, f.terms.size(), f.edf_total, f.training_rmse);
      }
    } else if (sub == tunec) {
      if (tune_month.empty()) usage("--month is required");
      const Timestamp month = parse_month_flag(tune_month, "--month");
      DataOpts d = tune_data;
      const TimeSeriesFrame frame = read_frame(d).slice_time(Timestamp::min(), month);
      const FeatureMatrix m = build_matrix(frame, calendar_inputs(frame), feature_options(d));
      const auto res = tuner::tune(m, month, tuner_config(tune_opts, tune_train, common.seed), tune_log);
      json doc;
      doc["kind"] = "tune";
      doc["month"] = format_month(month);
      doc["base_seed"] = common.seed;
      doc["top"] = json::array();
      for (const auto& t : res.top)
        doc["top"].push_back({{"index", t.index}, {"mse", t.mse}, {"params", mlp::params_json(t.params)}});
      csv::write_atomic(tune_out, doc.dump(2) + "\n");
      std::printf("trials=%zu\nresumed=%zu\nbest_mse=%.17g\n", res.trials.size(), res.resumed,
                  res.top.empty() ? NAN : res.top.front().mse);
    } else if (sub == predictc) {
      if (pred_fits.empty()) usage("--fit is required");
      const FeatureMatrix m = read_matrix(pred_data);
      const TimeSeriesFrame frame = read_frame(pred_data);
      const auto trainable = m.trainable_rows();
      std::string text = prov + "timestamp,model,target,delta_mw,pred_mw\n";
      auto emit = [&](const std::string& model, const char* target, const Eigen::VectorXd& delta,
                      const Eigen::VectorXd& y) {
        for (std::size_t r = 0; r < m.rows(); ++r) {
          const auto i = frame.index_of(m.timestamps[r]);
          const double load = i ? frame.load[*i] : NAN;
          const double d = delta(static_cast<Eigen::Index>(r));
          text += csv::format_timestamp(m.timestamps[r]) + "," + model + "," + target + "," + csv::format_double(d) +
                  "," + csv::format_double(load + d) + "\n";
        }
        double se = 0.0;
        std::size_t n = 0;
        for (auto r : trainable) {
          const double e = delta(static_cast<Eigen::Index>(r)) - y(static_cast<Eigen::Index>(r));
          if (!std::isfinite(e)) continue;
          se += e * e;
          ++n;
        }
        std::printf("%s.%s.rmse=%.17g\n", model.c_str(), target, n ? std::sqrt(se / static_cast<double>(n)) : NAN);
      };
      for (const auto& path : pred_fits) {
        const json doc = json::parse(read_file(path));
        const std::string kind = doc.value("kind", "");
        if (kind == "gam") {
          const auto f = gam::from_json(doc.dump());
          const bool is_min = f.spec.target == gam::Target::Min;
          emit("gam." + std::string(gam::variant_name(f.spec.variant)), is_min ? "min" : "max", gam::predict(f, m),
               is_min ? m.y_min : m.y_max);
        } else if (kind == "mlp") {
          const auto f = mlp::from_json(doc.dump());
          const Eigen::MatrixXd p = mlp::predict(f, m);
          emit("dnn", "min", p.col(0), m.y_min);
          emit("dnn", "max", p.col(1), m.y_max);
        } else {
          fail(Errc::BadSchema, "cli.predict", "'" + path + "' is not a fit file");
        }
      }
      csv::write_atomic(pred_out, text);
    } else if (sub == backtestc) {
      if (bt_months.empty()) usage("--months is required");
      const TimeSeriesFrame frame = read_frame(bt_data);
      pipeline::BacktestConfig cfg;
      cfg.months = parse_months(bt_months);
      cfg.models = bt_models;
      cfg.combination_members = bt_members;
      cfg.features = feature_options(bt_data);
      cfg.k0 = bt_gam.k0;
      cfg.k1 = bt_gam.k1;
      cfg.k2 = bt_gam.k2;
      cfg.absolute_wind = bt_gam.absolute_wind;
      cfg.gam = gam_options(bt_gam);
      cfg.window_months = bt_window;
      cfg.dnn_window_months = bt_dnn_window;
      cfg.tuner = tuner_config(bt_tuner, bt_train, common.seed);
      if (bt_paper) cfg.tuner.budget = 1000;
      cfg.ensemble_runs = bt_runs;
      cfg.reuse_top = bt_reuse;
      cfg.clamp = bt_clamp;
      cfg.parallel_months = bt_parallel;
      cfg.seed = common.seed;
      cfg.tuner_log_dir = bt_out;
      if (!bt_quiet) cfg.progress = [](const std::string& s) { std::fprintf(stderr, "%s\n", s.c_str()); };
      fs::create_directories(bt_out);
      const auto res = pipeline::backtest(frame, cfg);
      csv::write_atomic(out_path(bt_out, "report.csv"), pipeline::format_report_csv(res.report, prov));
      csv::write_atomic(out_path(bt_out, "report.txt"), pipeline::format_report_table(res.report));
      csv::write_atomic(out_path(bt_out, "predictions.csv"), pipeline::format_predictions_csv(res.predictions, prov));
      std::fputs(pipeline::format_report_table(res.report).c_str(), stdout);
      if (res.fallback_slots > 0) std::fprintf(stderr, "warning: %zu slots fell back to the naive prediction\n", res.fallback_slots);
    } else if (sub == reportc) {
      if (rep_in.empty()) usage("--report is required");
      const auto rep = pipeline::parse_report_csv(read_file(rep_in));
      const std::string text = rep_format == "csv" ? pipeline::format_report_csv(rep, prov) : pipeline::format_report_table(rep);
      if (rep_out.empty())
        std::fputs(text.c_str(), stdout);
      else
        csv::write_atomic(rep_out, text);
    }
  } catch (const UsageError& e) {
    std::fprintf(stderr, "error: cli.%s: %s\n", sub->get_name().c_str(), e.what());
    return exit_code(ErrorClass::Usage);
  } catch (const Error& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return exit_code(e.error_class());
  } catch (const json::exception& e) {
    std::fprintf(stderr, "error: cli.%s: malformed JSON: %s\n", sub->get_name().c_str(), e.what());
    return exit_code(ErrorClass::Data);
  } catch (const std::exception& e) {
    std::fprintf(stderr, "error: cli.%s: %s\n", sub->get_name().c_str(), e.what());
    return exit_code(ErrorClass::Data);
  }
  return 0;
}
