#pragma once

#include <cmath>
#include <cstdint>
#include <limits>
#include <numbers>

namespace gchain {

/// SplitMix64 finalizer.
constexpr std::uint64_t mix64(std::uint64_t z) noexcept {
  z += 0x9e3779b97f4a7c15ULL;
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
  return z ^ (z >> 31);
}

/// Counter-based generator: the i-th output is a pure function of
/// (key, i), so a substream is fully determined by (seed, stream id)
/// and independent of scheduling or worker count.
///
/// Satisfies UniformRandomBitGenerator. Normal and Laplace variates are
/// produced in-house (Box-Muller / inversion) so that streams do not
/// depend on the standard library's distribution implementations.
class CounterRng {
 public:
  using result_type = std::uint64_t;

  explicit CounterRng(std::uint64_t seed, std::uint64_t stream = 0) noexcept
      : key_(mix64(mix64(seed) ^ (stream * 0xd1b54a32d192ed03ULL + 0x8cb92ba72f3d8dd7ULL))) {}

  /// Derive an independent substream keyed by `id`.
  [[nodiscard]] CounterRng substream(std::uint64_t id) const noexcept {
    CounterRng r(0);
    r.key_ = mix64(key_ ^ mix64(id + 0x632be59bd9b4e019ULL));
    return r;
  }

  static constexpr result_type min() noexcept { return 0; }
  static constexpr result_type max() noexcept { return std::numeric_limits<result_type>::max(); }

  result_type operator()() noexcept {
    ++counter_;
    return mix64(key_ + counter_ * 0x9e3779b97f4a7c15ULL);
  }

  /// Uniform on [0, 1).
  double uniform() noexcept { return static_cast<double>((*this)() >> 11) * 0x1.0p-53; }

  /// Uniform on (0, 1].
  double uniform_open0() noexcept { return static_cast<double>(((*this)() >> 11) + 1) * 0x1.0p-53; }

  double normal() noexcept {
    if (has_spare_) {
      has_spare_ = false;
      return spare_;
    }
    const double u1 = uniform_open0();
    const double u2 = uniform();
    const double r = std::sqrt(-2.0 * std::log(u1));
    const double theta = 2.0 * std::numbers::pi * u2;
    spare_ = r * std::sin(theta);
    has_spare_ = true;
    return r * std::cos(theta);
  }

  /// Symmetric exponential (Laplace) with unit variance.
  double laplace() noexcept {
    const double e = -std::log(uniform_open0());
    const double sign = ((*this)() & 1ULL) ? 1.0 : -1.0;
    return sign * e * std::numbers::sqrt2 / 2.0;
  }

  double rademacher() noexcept { return ((*this)() & 1ULL) ? 1.0 : -1.0; }

  /// Uniform integer in [0, n).
  std::uint64_t below(std::uint64_t n) noexcept {
    // Lemire's multiply-shift; bias is negligible for the n used here.
    return static_cast<std::uint64_t>((static_cast<unsigned __int128>((*this)()) * n) >> 64);
  }

 private:
  std::uint64_t key_;
  std::uint64_t counter_ = 0;
  double spare_ = 0.0;
  bool has_spare_ = false;
};

}  // namespace gchain
