#include "peakload/synthgen.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>

#include "peakload/errors.hpp"
#include "peakload/rng.hpp"

namespace peakload {
namespace {

constexpr double kTwoPi = 2.0 * std::numbers::pi;
constexpr int kMinutesPerDay = 1440;
constexpr int kMinutesPerSlot = 30;

/// AR(1) knots once per hour, linearly interpolated to minutes.
std::vector<double> hourly_ar1(Rng& rng, std::size_t minutes, double phi, double sd) {
  const std::size_t hours = minutes / 60 + 2;
  std::vector<double> knots(hours);
  double x = rng.normal() * sd / std::sqrt(1.0 - phi * phi);
  for (auto& k : knots) {
    k = x;
    x = phi * x + sd * rng.normal();
  }
  std::vector<double> out(minutes);
  for (std::size_t m = 0; m < minutes; ++m) {
    const std::size_t h = m / 60;
    const double w = static_cast<double>(m % 60) / 60.0;
    out[m] = (1.0 - w) * knots[h] + w * knots[h + 1];
  }
  return out;
}

}  // namespace

void SynthConfig::validate() const {
  const char* where = "synthgen.generate";
  if (days < 1) fail(Errc::InvalidConfig, where, "days must be >= 1");
  if (base_mw < 0 || daily_amp < 0 || annual_amp < 0 || solar_coupling < 0 || noise_sd < 0 || spike_amp_mw < 0) {
    fail(Errc::InvalidConfig, where, "amplitudes must be non-negative");
  }
  if (!(spike_rate >= 0.0 && spike_rate <= 1.0)) fail(Errc::InvalidConfig, where, "spike_rate must lie in [0, 1]");
  const auto s = start.time_since_epoch().count();
  if (s % 1800 != 0) fail(Errc::InvalidConfig, where, "start must be on the half-hour grid");
}

SynthOutput generate(const SynthConfig& config) {
  config.validate();
  Rng rng(config.seed);
  const std::size_t n = static_cast<std::size_t>(config.days) * kMinutesPerDay;

  // Weather drivers share one stream, drawn in a fixed order.
  const auto temp_noise = hourly_ar1(rng, n, 0.97, 0.35);
  const auto cloud_noise = hourly_ar1(rng, n, 0.9, 0.35);
  const auto wind_n = hourly_ar1(rng, n, 0.95, 0.6);
  const auto wind_e = hourly_ar1(rng, n, 0.95, 0.6);
  const auto press_noise = hourly_ar1(rng, n, 0.99, 80.0);
  const auto humid_noise = hourly_ar1(rng, n, 0.97, 0.0004);

  SynthOutput out;
  out.minutes.start = config.start;
  out.minutes.values.resize(n);
  WeatherChannels minute_weather;
  for (auto& c : minute_weather) c.resize(n);

  const double start_year_hour = year_hour(config.start);
  const double start_day_minute = day_hour(config.start) * 60.0;
  for (std::size_t m = 0; m < n; ++m) {
    const double minute_of_day = std::fmod(start_day_minute + static_cast<double>(m), kMinutesPerDay);
    const double hour = minute_of_day / 60.0;
    const double year_frac = std::fmod(start_year_hour + static_cast<double>(m) / 60.0, kHoursPerMeteoYear) /
                             kHoursPerMeteoYear;
    // Seasonal cycle peaks in mid-summer (~day 182).
    const double season = std::cos(kTwoPi * (year_frac - 0.5));

    const double day_length = 12.0 + 4.0 * season;
    const double solar_angle = std::numbers::pi * (hour - (12.0 - day_length / 2.0)) / day_length;
    const double clear_sky = (solar_angle > 0.0 && solar_angle < std::numbers::pi)
                                 ? (600.0 + 250.0 * season) * std::sin(solar_angle)
                                 : 0.0;
    const double cloud_smooth = std::clamp(0.65 + cloud_noise[m], 0.1, 1.0);
    // Minute-level flicker grows with cloudiness, so within-slot PV variation scales with irradiance.
    const double flicker = clear_sky > 0.0 ? 0.35 * (1.0 - cloud_smooth) * rng.normal() : 0.0;
    const double solar = clear_sky * std::clamp(cloud_smooth + flicker, 0.05, 1.0);

    minute_weather[0][m] = 10.0 + 6.0 * season + 3.0 * std::sin(kTwoPi * (hour - 9.0) / 24.0) + 3.0 * temp_noise[m];
    minute_weather[1][m] = solar;
    minute_weather[2][m] = 1.0 + 3.0 * wind_n[m];
    minute_weather[3][m] = 2.0 + 3.0 * wind_e[m];
    minute_weather[4][m] = 101325.0 + press_noise[m];
    minute_weather[5][m] = std::max(0.001, 0.007 + 0.003 * season + humid_noise[m]);

    double load = config.base_mw;
    load += config.daily_amp * std::sin(kTwoPi * (minute_of_day / kMinutesPerDay - 0.3));
    load -= config.annual_amp * season;
    load -= config.solar_coupling * solar;
    // Minute-level volatility grows with the load level.
    const double level = config.base_mw > 0.0 ? std::max(0.1, load / config.base_mw) : 1.0;
    if (config.noise_sd > 0.0) load += level * config.noise_sd * rng.normal();
    if (config.spike_rate > 0.0 && rng.uniform() < config.spike_rate) {
      const double magnitude = level * config.spike_amp_mw * (0.5 + rng.uniform());
      load += rng.coin() ? magnitude : -magnitude;
    }
    out.minutes.values[m] = load;
  }

  out.frame = aggregate(out.minutes);
  const std::size_t slots = n / kMinutesPerSlot;
  for (int c = 0; c < kWeatherChannels; ++c) {
    auto& dst = out.frame.weather[c];
    dst.resize(slots);
    for (std::size_t s = 0; s < slots; ++s) {
      double sum = 0.0;
      for (int k = 0; k < kMinutesPerSlot; ++k) sum += minute_weather[c][s * kMinutesPerSlot + k];
      dst[s] = sum / kMinutesPerSlot;
    }
  }
  return out;
}

TimeSeriesFrame aggregate(const MinuteSeries& minutes) {
  const char* where = "synthgen.aggregate";
  if (minutes.values.size() % kMinutesPerSlot != 0) {
    fail(Errc::MisalignedSeries, where, "length " + std::to_string(minutes.values.size()) + " not divisible by 30");
  }
  if (minutes.start.time_since_epoch().count() % 1800 != 0) {
    fail(Errc::MisalignedSeries, where, "series does not start on a half-hour boundary");
  }
  const std::size_t slots = minutes.values.size() / kMinutesPerSlot;
  TimeSeriesFrame frame;
  frame.start = minutes.start;
  frame.load.resize(slots);
  frame.load_min.resize(slots);
  frame.load_max.resize(slots);
  for (std::size_t s = 0; s < slots; ++s) {
    const double* v = minutes.values.data() + s * kMinutesPerSlot;
    double sum = 0.0, lo = v[0], hi = v[0];
    for (int k = 0; k < kMinutesPerSlot; ++k) {
      sum += v[k];
      lo = std::min(lo, v[k]);
      hi = std::max(hi, v[k]);
    }
    // Rounding in the sum must not push the mean outside [min, max].
    const double mean = lo == hi ? lo : std::clamp(sum / kMinutesPerSlot, lo, hi);
    frame.load[s] = mean;
    frame.load_min[s] = lo;
    frame.load_max[s] = hi;
  }
  return frame;
}

}  // namespace peakload
