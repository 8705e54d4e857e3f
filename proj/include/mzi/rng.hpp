#pragma once

#include <cstdint>
#include <string_view>

namespace mzi {

/// SplitMix64 generator with a deterministic per-run stream derivation.
///
/// Stream (seed, index) starts from state seed ^ mix64(index + 0x9E3779B97F4A7C15).
/// Uniform doubles take the top 53 bits of each output. Both rules are part of
/// the report output so runs can be reproduced by any implementation of them.
class SplitMix64 {
 public:
  static constexpr std::string_view kAlgorithm =
      "splitmix64; stream(seed,i).state = seed ^ mix64(i + 0x9E3779B97F4A7C15); "
      "uniform = (next() >> 11) * 2^-53";

  explicit constexpr SplitMix64(std::uint64_t state) : state_(state) {}

  static constexpr SplitMix64 stream(std::uint64_t seed, std::uint64_t index) {
    return SplitMix64(seed ^ mix64(index + kGolden));
  }

  constexpr std::uint64_t next() {
    state_ += kGolden;
    return mix64(state_);
  }

  // Uniform in [0, 1).
  constexpr double uniform() { return static_cast<double>(next() >> 11) * 0x1.0p-53; }

  // Uniform integer in [0, n) by rejection; n > 0.
  constexpr std::uint64_t below(std::uint64_t n) {
    const std::uint64_t limit = ~std::uint64_t{0} - (~std::uint64_t{0} % n);
    std::uint64_t x = next();
    while (x >= limit) x = next();
    return x % n;
  }

  constexpr std::uint64_t state() const { return state_; }

  static constexpr std::uint64_t mix64(std::uint64_t z) {
    z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ull;
    z = (z ^ (z >> 27)) * 0x94D049BB133111EBull;
    return z ^ (z >> 31);
  }

 private:
  static constexpr std::uint64_t kGolden = 0x9E3779B97F4A7C15ull;
  std::uint64_t state_;
};

}  // namespace mzi
