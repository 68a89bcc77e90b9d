#ifndef PETMAE_RNG_HPP
#define PETMAE_RNG_HPP

#include <cmath>
#include <cstdint>

namespace petmae {

/// Deterministic 64-bit-state generator (splitmix64). Every stochastic
/// choice in the library draws from this generator, so a run is fully
/// reproducible from its seed on any platform. The update and output
/// functions are the standard splitmix64 constants; uniform doubles take
/// the top 53 bits, normals come from Box-Muller on two uniforms.
class Rng {
public:
  explicit Rng(std::uint64_t seed) : state_(seed) {}

  std::uint64_t next_u64() {
    std::uint64_t z = (state_ += 0x9E3779B97F4A7C15ull);
    z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ull;
    z = (z ^ (z >> 27)) * 0x94D049BB133111EBull;
    return z ^ (z >> 31);
  }

  /// Uniform in [0, 1).
  double next_uniform() {
    return static_cast<double>(next_u64() >> 11) * 0x1.0p-53;
  }

  /// Uniform in [lo, hi).
  double next_uniform(double lo, double hi) {
    return lo + (hi - lo) * next_uniform();
  }

  /// Uniform integer in [0, n). Multiply-shift mapping; the bias is
  /// below n / 2^64 and irrelevant at the ranges used here.
  std::uint64_t next_below(std::uint64_t n) {
    return static_cast<std::uint64_t>(
        (static_cast<unsigned __int128>(next_u64()) * n) >> 64);
  }

  /// Standard normal via Box-Muller; consumes two uniforms per pair and
  /// caches the second value.
  double next_normal() {
    if (has_cached_) {
      has_cached_ = false;
      return cached_;
    }
    // (0,1] so log() stays finite.
    double u1 = static_cast<double>((next_u64() >> 11) + 1) * 0x1.0p-53;
    double u2 = next_uniform();
    double r = std::sqrt(-2.0 * std::log(u1));
    double a = 6.283185307179586476925286766559 * u2;
    cached_ = r * std::sin(a);
    has_cached_ = true;
    return r * std::cos(a);
  }

  /// splitmix64 output function as a standalone hash.
  static std::uint64_t mix(std::uint64_t z) {
    z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ull;
    z = (z ^ (z >> 27)) * 0x94D049BB133111EBull;
    return z ^ (z >> 31);
  }

  /// Seed for an independent sub-stream, keyed by (seed, stream index).
  static std::uint64_t derive(std::uint64_t seed, std::uint64_t stream) {
    return mix(seed + 0x9E3779B97F4A7C15ull * (stream + 1));
  }

private:
  std::uint64_t state_;
  double cached_ = 0.0;
  bool has_cached_ = false;
};

} // namespace petmae

#endif
