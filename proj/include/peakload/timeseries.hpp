#pragma once

#include <array>
#include <chrono>
#include <cstddef>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "peakload/csv.hpp"

namespace peakload {

inline constexpr std::chrono::seconds kSlotLength{1800};
inline constexpr int kSlotsPerDay = 48;
inline constexpr int kWeatherChannels = 6;

/// Channel order is fixed: temp (degC), solar (W/m^2), windN (m/s),
/// windE (m/s), press (Pa), humid (kg/kg).
inline constexpr std::array<std::string_view, kWeatherChannels> kWeatherNames = {
    "temp", "solar", "windN", "windE", "press", "humid"};

using WeatherChannels = std::array<std::vector<double>, kWeatherChannels>;

/// Half-hourly frame on a constant 30 minute grid starting at `start`.
/// Missing values are NaN. Optional series are empty when absent.
struct TimeSeriesFrame {
  Timestamp start{};
  std::vector<double> load;
  std::vector<double> load_min;
  std::vector<double> load_max;
  WeatherChannels weather;

  std::size_t size() const noexcept { return load.size(); }
  Timestamp timestamp(std::size_t i) const noexcept {
    return start + kSlotLength * static_cast<std::int64_t>(i);
  }
  std::vector<Timestamp> timestamps() const;
  bool has_targets() const noexcept { return !load_min.empty() && !load_max.empty(); }
  bool has_weather() const noexcept;
  /// Row index of `t` if it lies on this frame's grid and range.
  std::optional<std::size_t> index_of(Timestamp t) const noexcept;
  /// Rows [begin, end).
  TimeSeriesFrame slice(std::size_t begin, std::size_t end) const;
  /// Rows with timestamps in [from, to), clipped to the frame.
  TimeSeriesFrame slice_time(Timestamp from, Timestamp to) const;
  /// Checks every invariant; throws on violation.
  void validate() const;
};

struct LoadSchema {
  std::string timestamp = "timestamp";
  std::string load = "load_mw";
  std::string load_min = "load_min_mw";
  std::string load_max = "load_max_mw";
};

struct IngestOptions {
  /// Reject out-of-order rows instead of sorting them.
  bool require_sorted = false;
};

struct IngestReport {
  TimeSeriesFrame frame;
  std::size_t rows_read = 0;
  std::size_t dropped_rows = 0;      // unparseable values
  std::size_t duplicate_rows = 0;    // same instant seen again; the last one wins
  std::size_t gap_rows = 0;          // explicit missing rows inserted
  std::size_t inconsistent_rows = 0; // min/max outside load; bounds set missing
};

IngestReport ingest_load(const std::string& path, const LoadSchema& schema = {},
                         const IngestOptions& options = {});
IngestReport ingest_load_table(const csv::Table& table, const LoadSchema& schema = {},
                               const IngestOptions& options = {});

/// One weather station on its native (hourly or half-hourly) grid.
struct StationSeries {
  std::string name;
  std::vector<Timestamp> times;
  WeatherChannels channels;
};

StationSeries ingest_weather(const std::string& path);
StationSeries ingest_weather_table(const csv::Table& table, std::string name);

struct WeatherGrid {
  Timestamp start{};
  WeatherChannels channels;
  std::size_t size() const noexcept { return channels[0].size(); }
};

/// Resamples every station to the half-hour grid (linear interpolation across
/// gaps of at most one hour) and averages per instant over the stations that
/// have data there.
WeatherGrid average_weather(std::span<const StationSeries> stations);

/// Copies weather onto the frame's grid; instants outside the grid become NaN.
void attach_weather(TimeSeriesFrame& frame, const WeatherGrid& grid);

/// D: hours into the UTC day, W: hours into the week (Monday 00:00 = 0),
/// A: hours since 2020-01-01T00:00Z modulo one 365.24-day year.
struct CalendarInputs {
  std::vector<double> day_hour;
  std::vector<double> week_hour;
  std::vector<double> year_hour;
};

inline constexpr double kHoursPerMeteoYear = 365.24 * 24.0;

double day_hour(Timestamp t) noexcept;
double week_hour(Timestamp t) noexcept;
double year_hour(Timestamp t) noexcept;
/// First instant of the UTC calendar month containing t.
Timestamp month_floor(Timestamp t) noexcept;
/// Month start shifted by `months` (may be negative); t is floored first.
Timestamp add_months(Timestamp t, int months) noexcept;
/// Parses `YYYY-MM` into the month's first instant.
std::optional<Timestamp> parse_month(std::string_view text);
std::string format_month(Timestamp t);

CalendarInputs calendar_inputs(std::span<const Timestamp> timestamps);
CalendarInputs calendar_inputs(const TimeSeriesFrame& frame);

std::string format_load_csv(const TimeSeriesFrame& frame, std::string_view header_comment = {});
std::string format_weather_csv(const TimeSeriesFrame& frame, std::string_view header_comment = {});

/// Load CSV plus any number of station CSVs, averaged and attached.
TimeSeriesFrame load_frame(const std::string& load_path, std::span<const std::string> weather_paths);

}  // namespace peakload
