#pragma once

#include <cstdint>
#include <random>
#include <string>

namespace rpulstm {

/// Seeded random stream used everywhere a simulation draws randomness.
///
/// Uniform and Gaussian variates are produced from the raw 64-bit engine
/// output with fixed formulas, so results do not depend on the standard
/// library's distribution implementations. The full state (engine plus the
/// cached second Gaussian variate) round-trips through `state()`.
class Rng {
 public:
  explicit Rng(std::uint64_t seed = 0);

  /// Independent stream keyed by (seed, stream id).
  static Rng derive(std::uint64_t seed, std::uint64_t stream);

  /// Uniform on [0, 1) with 53 bits of resolution.
  double uniform() { return static_cast<double>(engine_() >> 11) * 0x1.0p-53; }

  /// Standard normal (Marsaglia polar method).
  double normal();

  bool bernoulli(double p) { return uniform() < p; }

  std::uint64_t next_u64() { return engine_(); }

  std::string state() const;
  void set_state(const std::string& text);

  bool operator==(const Rng& other) const;

 private:
  std::mt19937_64 engine_;
  bool has_spare_ = false;
  double spare_ = 0.0;
};

}  // namespace rpulstm
