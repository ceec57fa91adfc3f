#pragma once

#include <bit>
#include <cmath>
#include <complex>
#include <cstdint>
#include <limits>
#include <numbers>

namespace ncgrass {

namespace detail {

// SplitMix64 finalizer; a bijective 64-bit mixer.
constexpr std::uint64_t mix64(std::uint64_t z) noexcept {
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
  return z ^ (z >> 31);
}

inline constexpr std::uint64_t kGolden = 0x9e3779b97f4a7c15ULL;

}  // namespace detail

/// Counter-based random stream keyed by (seed, stream id).
///
/// The n-th 64-bit output is mix64(key + (n+1)·γ), so a stream is fully
/// determined by its key and position. Child streams are derived by hashing
/// the parent's identity with a child id; no draws from the parent are consumed,
/// which lets workers obtain independent streams in any order.
///
/// Distributions are implemented here rather than taken from <random> so that
/// draws are identical across standard library implementations.
class RngStream {
 public:
  using result_type = std::uint64_t;

  RngStream() : RngStream(0, 0) {}
  RngStream(std::uint64_t seed, std::uint64_t stream)
      : seed_(seed), stream_(stream), key_(makeKey(seed, stream)), counter_(0) {}

  [[nodiscard]] std::uint64_t seed() const noexcept { return seed_; }
  [[nodiscard]] std::uint64_t stream() const noexcept { return stream_; }

  /// Independent child stream; does not advance this stream.
  [[nodiscard]] RngStream derive(std::uint64_t child) const {
    return RngStream(seed_, detail::mix64(stream_ * detail::kGolden + detail::mix64(child + 0x632be59bd9b4e019ULL)));
  }

  static constexpr result_type min() noexcept { return 0; }
  static constexpr result_type max() noexcept { return std::numeric_limits<result_type>::max(); }

  result_type operator()() noexcept {
    ++counter_;
    return detail::mix64(key_ + counter_ * detail::kGolden);
  }

  /// Uniform on [0, 1) with 53 random bits.
  double uniform() noexcept { return static_cast<double>((*this)() >> 11) * 0x1.0p-53; }

  /// Uniform on [lo, hi).
  double uniform(double lo, double hi) noexcept { return lo + (hi - lo) * uniform(); }

  /// Uniform integer in [0, n) via Lemire's multiply-shift with rejection.
  std::uint64_t uniformIndex(std::uint64_t n) noexcept {
    if (n <= 1) return 0;
    const std::uint64_t threshold = (0 - n) % n;
    for (;;) {
      const std::uint64_t x = (*this)();
      const unsigned __int128 m = static_cast<unsigned __int128>(x) * n;
      if (static_cast<std::uint64_t>(m) >= threshold) return static_cast<std::uint64_t>(m >> 64);
    }
  }

  /// Standard normal via Box-Muller; the second variate of each pair is cached.
  double normal() noexcept {
    if (hasSpare_) {
      hasSpare_ = false;
      return spare_;
    }
    double u1 = uniform();
    while (u1 <= 0.0) u1 = uniform();
    const double u2 = uniform();
    const double radius = std::sqrt(-2.0 * std::log(u1));
    const double angle = 2.0 * std::numbers::pi * u2;
    spare_ = radius * std::sin(angle);
    hasSpare_ = true;
    return radius * std::cos(angle);
  }

  static constexpr double kInvSqrt2 = 0.70710678118654752440;

  /// Circularly-symmetric complex Gaussian with unit total variance, CN(0,1).
  std::complex<double> complexNormal() noexcept {
    const double re = normal();
    const double im = normal();
    return {re * kInvSqrt2, im * kInvSqrt2};
  }

 private:
  static std::uint64_t makeKey(std::uint64_t seed, std::uint64_t stream) {
    return detail::mix64(detail::mix64(seed) ^ (stream * detail::kGolden + 0x2545f4914f6cdd1dULL));
  }

  std::uint64_t seed_;
  std::uint64_t stream_;
  std::uint64_t key_;
  std::uint64_t counter_;
  double spare_ = 0.0;
  bool hasSpare_ = false;
};

/// Stable 64-bit identity for a double, used to key per-SNR sub-streams.
inline std::uint64_t streamIdFor(double value) noexcept { return std::bit_cast<std::uint64_t>(value); }

}  // namespace ncgrass
