#include "peakload/timeseries.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>

#include "peakload/errors.hpp"

namespace peakload {
namespace {

constexpr double kNaN = std::numeric_limits<double>::quiet_NaN();
constexpr std::int64_t kSlotSeconds = 1800;

bool on_grid(Timestamp t) noexcept {
  const auto s = t.time_since_epoch().count();
  return ((s % kSlotSeconds) + kSlotSeconds) % kSlotSeconds == 0;
}

struct ParsedRow {
  Timestamp t;
  double load, lo, hi;
};

}  // namespace

std::vector<Timestamp> TimeSeriesFrame::timestamps() const {
  std::vector<Timestamp> out(size());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = timestamp(i);
  return out;
}

bool TimeSeriesFrame::has_weather() const noexcept {
  return std::all_of(weather.begin(), weather.end(), [&](const auto& c) { return c.size() == size(); }) &&
         size() > 0;
}

std::optional<std::size_t> TimeSeriesFrame::index_of(Timestamp t) const noexcept {
  const auto delta = (t - start).count();
  if (delta < 0 || delta % kSlotSeconds != 0) return std::nullopt;
  const auto idx = static_cast<std::size_t>(delta / kSlotSeconds);
  if (idx >= size()) return std::nullopt;
  return idx;
}

TimeSeriesFrame TimeSeriesFrame::slice(std::size_t begin, std::size_t end) const {
  if (begin > end || end > size()) {
    fail(Errc::RangeOutsideData, "timeseries.slice",
         "rows [" + std::to_string(begin) + ", " + std::to_string(end) + ") outside frame of " +
             std::to_string(size()));
  }
  auto cut = [&](const std::vector<double>& v) {
    if (v.empty()) return std::vector<double>{};
    return std::vector<double>(v.begin() + static_cast<std::ptrdiff_t>(begin),
                               v.begin() + static_cast<std::ptrdiff_t>(end));
  };
  TimeSeriesFrame out;
  out.start = timestamp(begin);
  out.load = cut(load);
  out.load_min = cut(load_min);
  out.load_max = cut(load_max);
  for (int c = 0; c < kWeatherChannels; ++c) out.weather[c] = cut(weather[c]);
  return out;
}

TimeSeriesFrame TimeSeriesFrame::slice_time(Timestamp from, Timestamp to) const {
  auto row_at = [&](Timestamp t) -> std::size_t {
    const auto delta = (t - start).count();
    if (delta <= 0) return 0;
    const auto idx = static_cast<std::size_t>((delta + kSlotSeconds - 1) / kSlotSeconds);
    return std::min(idx, size());
  };
  const std::size_t b = row_at(from);
  const std::size_t e = std::max(b, row_at(to));
  return slice(b, e);
}

void TimeSeriesFrame::validate() const {
  const char* where = "timeseries.validate";
  if (!on_grid(start)) fail(Errc::OffGrid, where, "start is not on the half-hour grid");
  const std::size_t n = size();
  if (!load_min.empty() && load_min.size() != n) fail(Errc::BadSchema, where, "load_min length");
  if (!load_max.empty() && load_max.size() != n) fail(Errc::BadSchema, where, "load_max length");
  for (std::size_t i = 0; i < n; ++i) {
    const double l = load[i];
    if (!load_min.empty() && std::isfinite(load_min[i]) && std::isfinite(l) && load_min[i] > l) {
      fail(Errc::BadSchema, where, "load_min > load at " + csv::format_timestamp(timestamp(i)));
    }
    if (!load_max.empty() && std::isfinite(load_max[i]) && std::isfinite(l) && load_max[i] < l) {
      fail(Errc::BadSchema, where, "load_max < load at " + csv::format_timestamp(timestamp(i)));
    }
  }
  for (int c = 0; c < kWeatherChannels; ++c) {
    if (!weather[c].empty() && weather[c].size() != n) {
      fail(Errc::BadSchema, where, "weather channel " + std::string(kWeatherNames[c]) + " length");
    }
    for (double v : weather[c]) {
      if (std::isinf(v)) fail(Errc::BadSchema, where, "non-finite weather value");
    }
  }
}

IngestReport ingest_load(const std::string& path, const LoadSchema& schema, const IngestOptions& options) {
  return ingest_load_table(csv::read_table(path, "timeseries.ingest_load"), schema, options);
}

IngestReport ingest_load_table(const csv::Table& table, const LoadSchema& schema, const IngestOptions& options) {
  const char* where = "timeseries.ingest_load";
  const auto ts_col = table.column(schema.timestamp);
  if (!ts_col) fail(Errc::BadSchema, where, "missing column '" + schema.timestamp + "'");
  const auto load_col = table.column(schema.load);
  if (!load_col) fail(Errc::BadSchema, where, "missing column '" + schema.load + "'");
  const auto min_col = table.column(schema.load_min);
  const auto max_col = table.column(schema.load_max);
  if (min_col.has_value() != max_col.has_value()) {
    fail(Errc::BadSchema, where,
         "missing column '" + (min_col ? schema.load_max : schema.load_min) + "' (min and max come together)");
  }
  const bool with_targets = min_col.has_value();

  IngestReport report;
  report.rows_read = table.rows.size();
  std::vector<ParsedRow> rows;
  rows.reserve(table.rows.size());

  auto field = [](const std::vector<std::string>& row, std::size_t col) -> std::string_view {
    return col < row.size() ? std::string_view(row[col]) : std::string_view{};
  };
  // Empty field = missing value; anything unparseable drops the row.
  auto value = [&](const std::vector<std::string>& row, std::size_t col, bool& ok) {
    const auto text = field(row, col);
    if (csv::trim(text).empty()) return kNaN;
    const auto v = csv::parse_double(text);
    if (!v) ok = false;
    return v.value_or(kNaN);
  };

  for (std::size_t r = 0; r < table.rows.size(); ++r) {
    const auto& row = table.rows[r];
    const auto t = csv::parse_timestamp(field(row, *ts_col));
    bool ok = t.has_value();
    ParsedRow parsed{t.value_or(Timestamp{}), kNaN, kNaN, kNaN};
    parsed.load = value(row, *load_col, ok);
    if (with_targets) {
      parsed.lo = value(row, *min_col, ok);
      parsed.hi = value(row, *max_col, ok);
    }
    if (!ok) {
      ++report.dropped_rows;
      continue;
    }
    if (!on_grid(parsed.t)) {
      fail(Errc::OffGrid, where,
           "line " + std::to_string(table.line_numbers[r]) + ": timestamp " + csv::format_timestamp(parsed.t) +
               " is not on the half-hour grid");
    }
    if (options.require_sorted && !rows.empty() && parsed.t < rows.back().t) {
      fail(Errc::NonMonotonicTimestamps, where,
           "line " + std::to_string(table.line_numbers[r]) + " goes back in time");
    }
    rows.push_back(parsed);
  }
  if (rows.empty()) fail(Errc::EmptyInput, where, "no parseable data rows");

  std::stable_sort(rows.begin(), rows.end(), [](const ParsedRow& a, const ParsedRow& b) { return a.t < b.t; });
  std::vector<ParsedRow> unique;
  unique.reserve(rows.size());
  for (const auto& row : rows) {
    if (!unique.empty() && unique.back().t == row.t) {
      unique.back() = row;
      ++report.duplicate_rows;
    } else {
      unique.push_back(row);
    }
  }

  TimeSeriesFrame& frame = report.frame;
  frame.start = unique.front().t;
  const auto span_slots = static_cast<std::size_t>((unique.back().t - unique.front().t).count() / kSlotSeconds) + 1;
  frame.load.assign(span_slots, kNaN);
  if (with_targets) {
    frame.load_min.assign(span_slots, kNaN);
    frame.load_max.assign(span_slots, kNaN);
  }
  for (const auto& row : unique) {
    const std::size_t i = static_cast<std::size_t>((row.t - frame.start).count() / kSlotSeconds);
    frame.load[i] = row.load;
    if (with_targets) {
      double lo = row.lo, hi = row.hi;
      if (std::isfinite(row.load) &&
          ((std::isfinite(lo) && lo > row.load) || (std::isfinite(hi) && hi < row.load))) {
        ++report.inconsistent_rows;
        lo = hi = kNaN;
      }
      frame.load_min[i] = lo;
      frame.load_max[i] = hi;
    }
  }
  report.gap_rows = span_slots - unique.size();
  return report;
}

StationSeries ingest_weather(const std::string& path) {
  return ingest_weather_table(csv::read_table(path, "timeseries.ingest_weather"), path);
}

StationSeries ingest_weather_table(const csv::Table& table, std::string name) {
  const char* where = "timeseries.ingest_weather";
  const auto ts_col = table.column("timestamp");
  if (!ts_col) fail(Errc::BadSchema, where, "missing column 'timestamp'");
  std::array<std::size_t, kWeatherChannels> cols{};
  for (int c = 0; c < kWeatherChannels; ++c) {
    const auto col = table.column(kWeatherNames[c]);
    if (!col) fail(Errc::ChannelMissing, where, "missing channel '" + std::string(kWeatherNames[c]) + "'");
    cols[c] = *col;
  }
  struct Row {
    Timestamp t;
    std::array<double, kWeatherChannels> v;
  };
  std::vector<Row> rows;
  for (const auto& row : table.rows) {
    if (*ts_col >= row.size()) continue;
    const auto t = csv::parse_timestamp(row[*ts_col]);
    if (!t) continue;
    Row parsed{*t, {}};
    bool ok = true;
    for (int c = 0; c < kWeatherChannels; ++c) {
      const std::string_view text = cols[c] < row.size() ? std::string_view(row[cols[c]]) : std::string_view{};
      if (csv::trim(text).empty()) {
        parsed.v[c] = kNaN;
        continue;
      }
      const auto v = csv::parse_double(text);
      if (!v) ok = false;
      parsed.v[c] = v.value_or(kNaN);
    }
    if (ok) rows.push_back(parsed);
  }
  if (rows.empty()) fail(Errc::EmptyInput, where, "no parseable weather rows in '" + name + "'");
  std::stable_sort(rows.begin(), rows.end(), [](const Row& a, const Row& b) { return a.t < b.t; });

  StationSeries station;
  station.name = std::move(name);
  for (const auto& row : rows) {
    if (!station.times.empty() && station.times.back() == row.t) {
      for (int c = 0; c < kWeatherChannels; ++c) station.channels[c].back() = row.v[c];
      continue;
    }
    station.times.push_back(row.t);
    for (int c = 0; c < kWeatherChannels; ++c) station.channels[c].push_back(row.v[c]);
  }
  return station;
}

namespace {

Timestamp ceil_to_grid(Timestamp t) {
  auto s = t.time_since_epoch().count();
  auto r = ((s % kSlotSeconds) + kSlotSeconds) % kSlotSeconds;
  return Timestamp{std::chrono::seconds{r == 0 ? s : s + (kSlotSeconds - r)}};
}

Timestamp floor_to_grid(Timestamp t) {
  auto s = t.time_since_epoch().count();
  auto r = ((s % kSlotSeconds) + kSlotSeconds) % kSlotSeconds;
  return Timestamp{std::chrono::seconds{s - r}};
}

/// One channel of one station resampled onto [grid_start, grid_start + n slots).
std::vector<double> resample_channel(const std::vector<Timestamp>& times, const std::vector<double>& values,
                                     Timestamp grid_start, std::size_t n) {
  constexpr std::int64_t kMaxGap = 3600;
  std::vector<Timestamp> t;
  std::vector<double> v;
  for (std::size_t i = 0; i < times.size(); ++i) {
    if (std::isfinite(values[i])) {
      t.push_back(times[i]);
      v.push_back(values[i]);
    }
  }
  std::vector<double> out(n, kNaN);
  std::size_t j = 0;
  for (std::size_t g = 0; g < n; ++g) {
    const Timestamp at = grid_start + kSlotLength * static_cast<std::int64_t>(g);
    while (j < t.size() && t[j] < at) ++j;
    if (j < t.size() && t[j] == at) {
      out[g] = v[j];
    } else if (j > 0 && j < t.size()) {
      const auto gap = (t[j] - t[j - 1]).count();
      if (gap <= kMaxGap) {
        const double w = static_cast<double>((at - t[j - 1]).count()) / static_cast<double>(gap);
        out[g] = v[j - 1] + w * (v[j] - v[j - 1]);
      }
    }
  }
  return out;
}

}  // namespace

WeatherGrid average_weather(std::span<const StationSeries> stations) {
  const char* where = "timeseries.average_weather";
  if (stations.empty()) fail(Errc::NoStations, where, "no weather stations given");
  Timestamp first = Timestamp::max();
  Timestamp last = Timestamp::min();
  for (const auto& st : stations) {
    for (int c = 0; c < kWeatherChannels; ++c) {
      if (st.channels[c].size() != st.times.size() || st.times.empty()) {
        fail(Errc::ChannelMissing, where,
             "station '" + st.name + "' lacks channel '" + std::string(kWeatherNames[c]) + "'");
      }
    }
    first = std::min(first, ceil_to_grid(st.times.front()));
    last = std::max(last, floor_to_grid(st.times.back()));
  }
  WeatherGrid grid;
  grid.start = first;
  const std::size_t n =
      last < first ? 0 : static_cast<std::size_t>((last - first).count() / kSlotSeconds) + 1;
  for (int c = 0; c < kWeatherChannels; ++c) {
    std::vector<std::vector<double>> per_station;
    per_station.reserve(stations.size());
    for (const auto& st : stations) per_station.push_back(resample_channel(st.times, st.channels[c], first, n));
    auto& out = grid.channels[c];
    out.assign(n, kNaN);
    std::vector<double> vals;
    for (std::size_t g = 0; g < n; ++g) {
      vals.clear();
      for (const auto& s : per_station) {
        if (std::isfinite(s[g])) vals.push_back(s[g]);
      }
      if (vals.empty()) continue;
      // Sorted summation makes the mean independent of station order.
      std::sort(vals.begin(), vals.end());
      out[g] = std::accumulate(vals.begin(), vals.end(), 0.0) / static_cast<double>(vals.size());
    }
  }
  return grid;
}

void attach_weather(TimeSeriesFrame& frame, const WeatherGrid& grid) {
  const std::size_t n = frame.size();
  for (int c = 0; c < kWeatherChannels; ++c) frame.weather[c].assign(n, kNaN);
  for (std::size_t i = 0; i < n; ++i) {
    const auto delta = (frame.timestamp(i) - grid.start).count();
    if (delta < 0 || delta % kSlotSeconds != 0) continue;
    const auto g = static_cast<std::size_t>(delta / kSlotSeconds);
    if (g >= grid.size()) continue;
    for (int c = 0; c < kWeatherChannels; ++c) frame.weather[c][i] = grid.channels[c][g];
  }
}

double day_hour(Timestamp t) noexcept {
  const auto s = t.time_since_epoch().count();
  const auto r = ((s % 86400) + 86400) % 86400;
  return static_cast<double>(r) / 3600.0;
}

double week_hour(Timestamp t) noexcept {
  // 1970-01-01 was a Thursday, so the first Monday 00:00 is 4 days later.
  const auto s = t.time_since_epoch().count() - 4 * 86400;
  const auto r = ((s % 604800) + 604800) % 604800;
  return static_cast<double>(r) / 3600.0;
}

Timestamp month_floor(Timestamp t) noexcept {
  using namespace std::chrono;
  const year_month_day ymd{floor<days>(t)};
  return Timestamp{sys_days{ymd.year() / ymd.month() / 1}};
}

Timestamp add_months(Timestamp t, int months) noexcept {
  using namespace std::chrono;
  const year_month_day ymd{floor<days>(t)};
  const year_month ym = ymd.year() / ymd.month() + std::chrono::months{months};
  return Timestamp{sys_days{ym / 1}};
}

std::optional<Timestamp> parse_month(std::string_view text) {
  text = csv::trim(text);
  if (text.size() != 7 || text[4] != '-') return std::nullopt;
  int y = 0, m = 0;
  for (int i = 0; i < 4; ++i) {
    if (text[i] < '0' || text[i] > '9') return std::nullopt;
    y = y * 10 + (text[i] - '0');
  }
  for (int i = 5; i < 7; ++i) {
    if (text[i] < '0' || text[i] > '9') return std::nullopt;
    m = m * 10 + (text[i] - '0');
  }
  if (m < 1 || m > 12) return std::nullopt;
  using namespace std::chrono;
  return Timestamp{sys_days{year{y} / month{static_cast<unsigned>(m)} / 1}};
}

std::string format_month(Timestamp t) { return csv::format_timestamp(month_floor(t)).substr(0, 7); }

double year_hour(Timestamp t) noexcept {
  using namespace std::chrono;
  constexpr sys_days anchor = sys_days{year{2020} / January / 1};
  const double hours = static_cast<double>((t - anchor).count()) / 3600.0;
  double a = std::fmod(hours, kHoursPerMeteoYear);
  if (a < 0.0) a += kHoursPerMeteoYear;
  if (a >= kHoursPerMeteoYear) a = 0.0;
  return a;
}

CalendarInputs calendar_inputs(std::span<const Timestamp> timestamps) {
  CalendarInputs cal;
  cal.day_hour.reserve(timestamps.size());
  cal.week_hour.reserve(timestamps.size());
  cal.year_hour.reserve(timestamps.size());
  for (const auto t : timestamps) {
    cal.day_hour.push_back(day_hour(t));
    cal.week_hour.push_back(week_hour(t));
    cal.year_hour.push_back(year_hour(t));
  }
  return cal;
}

CalendarInputs calendar_inputs(const TimeSeriesFrame& frame) {
  const auto ts = frame.timestamps();
  return calendar_inputs(ts);
}

std::string format_load_csv(const TimeSeriesFrame& frame, std::string_view header_comment) {
  std::string out(header_comment);
  const bool targets = frame.has_targets();
  out += targets ? "timestamp,load_mw,load_min_mw,load_max_mw\n" : "timestamp,load_mw\n";
  for (std::size_t i = 0; i < frame.size(); ++i) {
    out += csv::format_timestamp(frame.timestamp(i));
    out += ',';
    out += csv::format_double(frame.load[i]);
    if (targets) {
      out += ',';
      out += csv::format_double(frame.load_min[i]);
      out += ',';
      out += csv::format_double(frame.load_max[i]);
    }
    out += '\n';
  }
  return out;
}

std::string format_weather_csv(const TimeSeriesFrame& frame, std::string_view header_comment) {
  std::string out(header_comment);
  out += "timestamp";
  for (auto name : kWeatherNames) {
    out += ',';
    out += name;
  }
  out += '\n';
  for (std::size_t i = 0; i < frame.size(); ++i) {
    out += csv::format_timestamp(frame.timestamp(i));
    for (int c = 0; c < kWeatherChannels; ++c) {
      out += ',';
      if (!frame.weather[c].empty()) out += csv::format_double(frame.weather[c][i]);
    }
    out += '\n';
  }
  return out;
}

TimeSeriesFrame load_frame(const std::string& load_path, std::span<const std::string> weather_paths) {
  auto report = ingest_load(load_path);
  if (!weather_paths.empty()) {
    std::vector<StationSeries> stations;
    for (const auto& p : weather_paths) stations.push_back(ingest_weather(p));
    attach_weather(report.frame, average_weather(stations));
  }
  return std::move(report.frame);
}

}  // namespace peakload
