#pragma once

#include <cstdint>
#include <random>

namespace vwsgibbs {

/// Seedable 64-bit generator with counter-based stream splitting.
///
/// `Rng(seed, stream)` yields a stream that depends only on the pair, so
/// work split across threads draws identical values regardless of
/// scheduling as long as each task owns its stream.
class Rng {
 public:
  using engine_type = std::mt19937_64;
  using result_type = engine_type::result_type;

  explicit Rng(std::uint64_t seed = 0, std::uint64_t stream = 0)
      : seed_(seed), stream_(stream) {
    std::seed_seq seq{static_cast<std::uint32_t>(seed),
                      static_cast<std::uint32_t>(seed >> 32),
                      static_cast<std::uint32_t>(stream),
                      static_cast<std::uint32_t>(stream >> 32),
                      0x76777367u};
    engine_.seed(seq);
  }

  /// Independent child stream keyed by `index`; does not advance `*this`.
  Rng split(std::uint64_t index) const {
    return Rng(seed_, mix(stream_ * 0x9E3779B97F4A7C15ull + index + 1));
  }

  static constexpr result_type min() { return engine_type::min(); }
  static constexpr result_type max() { return engine_type::max(); }
  result_type operator()() { return engine_(); }

  /// Uniform on the open interval (0, 1).
  double uniform() {
    for (;;) {
      const double u = static_cast<double>(engine_() >> 11) * 0x1.0p-53;
      if (u > 0.0) return u;
    }
  }

  double normal() { return normal_(engine_); }

  /// Gamma with shape `a` and rate `b`.
  double gamma(double a, double b) {
    std::gamma_distribution<double> dist(a, 1.0 / b);
    return dist(engine_);
  }

  std::uint64_t seed() const { return seed_; }
  std::uint64_t stream() const { return stream_; }

 private:
  static std::uint64_t mix(std::uint64_t z) {
    // splitmix64 finalizer
    z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ull;
    z = (z ^ (z >> 27)) * 0x94D049BB133111EBull;
    return z ^ (z >> 31);
  }

  std::uint64_t seed_;
  std::uint64_t stream_;
  engine_type engine_;
  std::normal_distribution<double> normal_;
};

}  // namespace vwsgibbs
