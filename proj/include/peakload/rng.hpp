#pragma once

#include <cstddef>
#include <cstdint>
#include <random>
#include <vector>

namespace peakload {

/// Portable random stream. std::mt19937_64 has a standardized output
/// sequence; the distributions below are ours so draws are identical across
/// standard libraries.
class Rng {
 public:
  explicit Rng(std::uint64_t seed) : engine_(seed) {}

  std::uint64_t next_u64() { return engine_(); }
  /// Uniform on [0, 1) with 53 random bits.
  double uniform() { return static_cast<double>(engine_() >> 11) * 0x1.0p-53; }
  /// Uniform on the open interval (lo, hi).
  double uniform(double lo, double hi);
  /// exp(U(log lo, log hi)).
  double log_uniform(double lo, double hi);
  double normal();
  bool coin() { return (engine_() >> 63) != 0; }
  /// Uniform integer on [0, n).
  std::size_t index(std::size_t n);
  void shuffle(std::vector<std::size_t>& values);

 private:
  std::mt19937_64 engine_;
  bool has_spare_ = false;
  double spare_ = 0.0;
};

std::uint64_t splitmix64(std::uint64_t x) noexcept;

/// seed = base XOR hash(a, b); stable across platforms and execution order.
std::uint64_t derive_seed(std::uint64_t base, std::uint64_t a, std::uint64_t b = 0) noexcept;

}  // namespace peakload
