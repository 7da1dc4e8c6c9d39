#pragma once

#include <cstddef>
#include <cstdint>
#include <string>
#include <string_view>
#include <vector>

#include "rpulstm/matrix.hpp"

namespace rpulstm {

enum class Rounding { nearest, stochastic };

std::string_view to_string(Rounding rounding);
Rounding rounding_from_string(std::string_view text);

/// Device and peripheral parameters of one resistive cross-point array.
///
/// Defaults are the baseline device: 10-slot pulse streams, 0.001 mean step
/// with 30% device-to-device and cycle-to-cycle spread, 2% spread of the
/// up/down step ratio, weight bounds of 0.6 +/- 30%, output noise 0.06,
/// output saturation at 12, 5-bit DAC and 9-bit ADC.
struct RpuConfig {
  int bl = 10;
  double dw_min = 0.001;
  double dw_min_dtod = 0.30;
  double dw_min_ctoc = 0.30;
  double asym_dtod = 0.02;
  double w_bound = 0.6;
  double w_bound_dtod = 0.30;
  double noise_sigma = 0.06;
  double out_bound = 12.0;
  int in_bits = 5;
  int out_bits = 9;
  Rounding rounding = Rounding::nearest;
  double states_multiplier = 1.0;

  /// Mean step actually applied per coincidence.
  double dw_min_effective() const { return dw_min / states_multiplier; }

  /// Throws std::invalid_argument naming the first offending field.
  void validate() const;

  bool operator==(const RpuConfig&) const = default;
};

/// Named device ablations. Each overlays a handful of fields on a base config.
///   baseline          no change
///   no-variation      dw_min_dtod = dw_min_ctoc = w_bound_dtod = 0
///   states4x          states_multiplier = 4
///   no-asym           asym_dtod = 0
///   no-asym-states4x  asym_dtod = 0, states_multiplier = 4
RpuConfig apply_preset(RpuConfig base, std::string_view preset);
const std::vector<std::string>& preset_names();

/// Per-crosspoint sampled device parameters of one tile.
struct DeviceArray {
  std::size_t rows = 0;
  std::size_t cols = 0;
  Matrix dw_plus;
  Matrix dw_minus;
  Matrix w_max;
  Matrix w_min;

  bool operator==(const DeviceArray&) const = default;
};

/// Samples a device array. Pure function of its arguments.
DeviceArray sample_device_array(std::size_t rows, std::size_t cols, const RpuConfig& cfg,
                                std::uint64_t seed);

struct StatesSummary {
  double mean = 0.0;
  double min = 0.0;
  double max = 0.0;
};

/// Number of states (w_max - w_min) / dw_minus over the array.
StatesSummary states_stats(const DeviceArray& arr);

}  // namespace rpulstm
