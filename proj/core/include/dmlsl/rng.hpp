#pragma once

// Deterministic random streams shared by every module that draws randomness.
//
// Bit-stream: SplitMix64 (Steele, Lea & Flood 2014). Each call adds the golden
// gamma 0x9E3779B97F4A7C15 to the 64-bit state and returns mix64(state).
//   uniform()   = (next >> 11) * 2^-53                 in [0, 1)
//   bounded(n)  = rejection sampling on next % n       unbiased in [0, n)
//   normal()    = sqrt(-2 ln u1) * cos(2 pi u2), u1, u2 in (0, 1), one pair per draw
// Sub-streams are keyed with derive_seed(base, parts...), never by advancing a
// shared generator, so work can be generated in any order.

#include <cmath>
#include <cstdint>
#include <initializer_list>
#include <limits>
#include <numbers>

namespace dmlsl {

constexpr std::uint64_t kGoldenGamma = 0x9E3779B97F4A7C15ULL;

constexpr std::uint64_t mix64(std::uint64_t z) noexcept {
  z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
  z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
  return z ^ (z >> 31);
}

// h_0 = mix64(base); h_{i+1} = mix64(h_i ^ mix64(part_i ^ gamma)).
constexpr std::uint64_t derive_seed(std::uint64_t base, std::initializer_list<std::uint64_t> parts) noexcept {
  std::uint64_t h = mix64(base);
  for (std::uint64_t p : parts) h = mix64(h ^ mix64(p ^ kGoldenGamma));
  return h;
}

class Rng {
 public:
  using result_type = std::uint64_t;

  explicit constexpr Rng(std::uint64_t seed) noexcept : state_(seed) {}

  static constexpr result_type min() noexcept { return 0; }
  static constexpr result_type max() noexcept { return std::numeric_limits<result_type>::max(); }

  constexpr result_type operator()() noexcept { return next_u64(); }

  constexpr std::uint64_t next_u64() noexcept {
    state_ += kGoldenGamma;
    return mix64(state_);
  }

  double uniform() noexcept { return static_cast<double>(next_u64() >> 11) * 0x1.0p-53; }

  // Uniform in (0, 1); never returns 0 so it is safe under log().
  double uniform_open() noexcept { return (static_cast<double>(next_u64() >> 11) + 0.5) * 0x1.0p-53; }

  // Uniform integer in [0, n). n must be > 0.
  std::uint64_t bounded(std::uint64_t n) noexcept {
    const std::uint64_t threshold = (0 - n) % n;
    for (;;) {
      const std::uint64_t x = next_u64();
      if (x >= threshold) return x % n;
    }
  }

  double normal() noexcept {
    const double u1 = uniform_open();
    const double u2 = uniform_open();
    return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * std::numbers::pi * u2);
  }

 private:
  std::uint64_t state_;
};

}  // namespace dmlsl
