#pragma once

#include <cstddef>
#include <span>

#include "rpulstm/device_model.hpp"
#include "rpulstm/matrix.hpp"
#include "rpulstm/rng.hpp"

namespace rpulstm {

enum class TileMode { analog, fp };

/// Output of a noise/bound-managed array read.
struct ManagedResult {
  Vector value;
  double scale_used = 1.0;
  int bound_retries = 0;
};

/// Quantizes components of `v` (each in [-1, 1]) onto the symmetric mid-tread
/// grid with step 1 / (2^(bits-1) - 1). `bits == 0` returns `v` unchanged.
Vector quantize_vector(std::span<const double> v, int bits, Rounding mode, Rng& rng);

/// One cross-point array holding a weight matrix.
///
/// In analog mode every read goes through the DAC, the noisy array product,
/// output saturation and the ADC, and every write is a stochastic pulse
/// update bounded by the per-device limits. In fp mode the tile is an exact
/// floating point matrix.
///
/// A tile is single-writer. Const reads take the caller's RNG stream.
class AnalogTile {
 public:
  static constexpr int kMaxBoundRetries = 10;

  AnalogTile() = default;

  /// Analog tile; weights are clipped into the device bounds.
  static AnalogTile make_analog(Matrix weights, DeviceArray devices, const RpuConfig& cfg,
                                Rng rng);
  static AnalogTile make_fp(Matrix weights);

  std::size_t rows() const { return w_.rows(); }
  std::size_t cols() const { return w_.cols(); }
  TileMode mode() const { return mode_; }
  const Matrix& weights() const { return w_; }
  const DeviceArray& devices() const { return devices_; }
  const RpuConfig& config() const { return cfg_; }
  Rng& rng() { return rng_; }
  const Rng& rng() const { return rng_; }

  /// Replaces the weights, clipping into the device bounds in analog mode.
  void set_weights(Matrix weights);

  /// Raw analog product of an input already in [-1, 1]:
  /// DAC, W v (or W^T v), additive noise, clamp to +/-alpha, ADC.
  Vector analog_mvm(std::span<const double> v, bool transpose, Rng& rng) const;

  /// Noise management (normalize by max |x|) and bound management
  /// (halve the input scale while any output saturates, at most
  /// kMaxBoundRetries times).
  ManagedResult managed_forward(std::span<const double> x, Rng& rng) const;
  ManagedResult managed_backward(std::span<const double> d, Rng& rng) const;

  /// Parallel pulse update W += lr * d x^T realized with stochastic streams.
  void stochastic_update(std::span<const double> x, std::span<const double> d, double lr);

  Vector fp_forward(std::span<const double> x) const;
  Vector fp_backward(std::span<const double> d) const;
  /// W += lr * delta.
  void fp_apply_delta(const Matrix& delta, double lr);

  /// Mode dispatch used by the network: managed read in analog mode, exact in fp.
  Vector forward(std::span<const double> x, Rng& rng) const;
  Vector backward(std::span<const double> d, Rng& rng) const;

  bool weights_within_bounds() const;

 private:
  ManagedResult managed(std::span<const double> x, bool transpose, Rng& rng) const;

  Matrix w_;
  DeviceArray devices_;
  RpuConfig cfg_;
  Rng rng_;
  TileMode mode_ = TileMode::fp;
};

}  // namespace rpulstm
