#pragma once

#include <cstdint>
#include <string>

#include "gaiforge/contracts.hpp"

namespace gaiforge {

namespace detail {

inline std::uint64_t mix64(std::uint64_t z) {
  z ^= z >> 30;
  z *= 0xBF58476D1CE4E5B9ULL;
  z ^= z >> 27;
  z *= 0x94D049BB133111EBULL;
  z ^= z >> 31;
  return z;
}

}  // namespace detail

/// Deterministic counter-based stream (splitmix64). Identical seed gives a
/// bitwise-identical draw sequence on every platform. Streams are single-owner;
/// parallel work derives independent child streams with child().
class SeededRng {
 public:
  explicit SeededRng(std::uint64_t seed) : state_(seed) {}

  std::uint64_t next_u64() {
    state_ += 0x9E3779B97F4A7C15ULL;
    return detail::mix64(state_);
  }

  /// Uniform double in [0, 1), 53-bit resolution.
  double uniform01() { return static_cast<double>(next_u64() >> 11) * 0x1.0p-53; }

  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform01(); }

  /// Uniform integer in [0, n). Multiply-shift; n must be positive.
  std::size_t uniform_below(std::size_t n) {
    require(n > 0, "SeededRng::uniform_below: n must be positive");
    return static_cast<std::size_t>(
        (static_cast<unsigned __int128>(next_u64()) * n) >> 64);
  }

  /// Returns 1 with probability p. p must lie in [0, 1].
  int bernoulli(double p) {
    require(p >= 0.0 && p <= 1.0,
            "bernoulli: p=" + std::to_string(p) + " outside [0,1]");
    return uniform01() < p ? 1 : 0;
  }

  /// Independent child stream keyed by (current state, stream id). Does not
  /// advance this stream, so fan-out order never affects results.
  SeededRng child(std::uint64_t stream_id) const {
    return SeededRng(detail::mix64(state_ ^ detail::mix64(
        stream_id * 0x9E3779B97F4A7C15ULL + 0x2545F4914F6CDD1DULL)));
  }

  std::uint64_t state() const { return state_; }

 private:
  std::uint64_t state_;
};

}  // namespace gaiforge
