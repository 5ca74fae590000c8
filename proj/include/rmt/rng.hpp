#pragma once

#include <cmath>
#include <cstdint>
#include <limits>
#include <numbers>

namespace rmt {

/// SplitMix64 finalizer. Bijective on 64-bit words.
constexpr std::uint64_t mix64(std::uint64_t z) noexcept {
  z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
  z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
  return z ^ (z >> 31);
}

/// Roles of the independent random objects a trial consumes.
enum class Role : std::uint64_t {
  base = 1,       // H
  fresh = 2,      // H'
  order = 3,      // pair ordering S_k
  copy2 = 4,      // H''
  copy3 = 5,      // H'''
  single = 6,     // single-entry resamples
  index = 7,      // uniform pair choice
  bootstrap = 8,
  start = 9,      // Lanczos start vectors
  aux = 10,
};

/// Counter-based stream: the n-th output is mix64(key + n * golden).
/// Substreams are derived by hashing (parent key, tag), so every object
/// of a trial is reproducible from (master seed, trial id, role) alone.
class Stream {
 public:
  using result_type = std::uint64_t;

  explicit constexpr Stream(std::uint64_t key) noexcept : key_(key) {}

  static constexpr Stream derive(std::uint64_t master, std::uint64_t trial, Role role) noexcept {
    return Stream(master).split(trial).split(static_cast<std::uint64_t>(role));
  }
  /// Same, additionally keyed by the matrix size so runs at different N never
  /// share uniforms.
  static constexpr Stream derive(std::uint64_t master, std::uint64_t size, std::uint64_t trial, Role role) noexcept {
    return Stream(master).split(size).split(trial).split(static_cast<std::uint64_t>(role));
  }

  /// Child stream keyed by `tag`; independent of the parent's counter.
  [[nodiscard]] constexpr Stream split(std::uint64_t tag) const noexcept {
    return Stream(mix64(key_ ^ mix64(tag + 0x632BE59BD9B4E019ULL)) + 0x9E3779B97F4A7C15ULL);
  }

  static constexpr result_type min() noexcept { return 0; }
  static constexpr result_type max() noexcept { return std::numeric_limits<result_type>::max(); }

  constexpr result_type operator()() noexcept {
    return mix64(key_ + (++counter_) * 0x9E3779B97F4A7C15ULL);
  }

  /// Uniform double in [0, 1) with 53 random bits.
  double uniform() noexcept { return static_cast<double>((*this)() >> 11) * 0x1.0p-53; }

  /// Uniform integer in [0, bound). Lemire's multiply-shift with rejection.
  std::uint64_t below(std::uint64_t bound) noexcept {
    if (bound <= 1) return 0;
    std::uint64_t x = (*this)();
    __uint128_t m = static_cast<__uint128_t>(x) * bound;
    auto low = static_cast<std::uint64_t>(m);
    if (low < bound) {
      const std::uint64_t threshold = (0 - bound) % bound;
      while (low < threshold) {
        x = (*this)();
        m = static_cast<__uint128_t>(x) * bound;
        low = static_cast<std::uint64_t>(m);
      }
    }
    return static_cast<std::uint64_t>(m >> 64);
  }

  bool bernoulli(double p) noexcept { return uniform() < p; }

  /// Standard normal by Box-Muller; implemented here so draws do not depend
  /// on the standard library's distribution internals.
  double normal() noexcept {
    if (has_spare_) {
      has_spare_ = false;
      return spare_;
    }
    double u1 = uniform();
    while (u1 <= 0.0) u1 = uniform();
    const double u2 = uniform();
    const double r = std::sqrt(-2.0 * std::log(u1));
    const double t = 2.0 * std::numbers::pi * u2;
    spare_ = r * std::sin(t);
    has_spare_ = true;
    return r * std::cos(t);
  }

  [[nodiscard]] constexpr std::uint64_t key() const noexcept { return key_; }
  [[nodiscard]] constexpr std::uint64_t position() const noexcept { return counter_; }

 private:
  std::uint64_t key_;
  std::uint64_t counter_ = 0;
  double spare_ = 0.0;
  bool has_spare_ = false;
};

}  // namespace rmt
