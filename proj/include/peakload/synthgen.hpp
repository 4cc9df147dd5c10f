#pragma once

#include <cstdint>
#include <vector>

#include "peakload/timeseries.hpp"

namespace peakload {

/// Synthetic high-resolution load with known structure: daily and annual
/// cycles, a negative solar effect, and minute noise plus spikes whose size
/// scales with the deterministic load level (so the slot mean drives the
/// spread between slot minimum and maximum).
struct SynthConfig {
  std::uint64_t seed = 7;
  int days = 731;
  Timestamp start = Timestamp{std::chrono::sys_days{std::chrono::year{2019} / 10 / 1}};
  double base_mw = 3.0;
  double daily_amp = 1.0;
  double annual_amp = 0.6;
  double solar_coupling = 0.0015;  // MW per W/m^2
  double noise_sd = 0.03;
  double spike_rate = 0.01;        // per minute
  double spike_amp_mw = 0.25;

  void validate() const;
};

struct MinuteSeries {
  Timestamp start{};
  std::vector<double> values;
};

struct SynthOutput {
  MinuteSeries minutes;
  TimeSeriesFrame frame;  // half-hourly load, min, max and weather
};

SynthOutput generate(const SynthConfig& config);

/// Per 30-minute slot: load = mean, load_min = min, load_max = max.
TimeSeriesFrame aggregate(const MinuteSeries& minutes);

}  // namespace peakload
