#include "rpulstm/device_model.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <stdexcept>

#include "rpulstm/rng.hpp"

namespace rpulstm {

std::string_view to_string(Rounding rounding) {
  return rounding == Rounding::nearest ? "nearest" : "stochastic";
}

Rounding rounding_from_string(std::string_view text) {
  if (text == "nearest") return Rounding::nearest;
  if (text == "stochastic") return Rounding::stochastic;
  throw std::invalid_argument("rounding: expected \"nearest\" or \"stochastic\", got \"" +
                              std::string(text) + "\"");
}

namespace {

void require(bool ok, const char* field, const char* what) {
  if (!ok) throw std::invalid_argument(std::string("rpu.") + field + ": " + what);
}

}  // namespace

void RpuConfig::validate() const {
  require(bl >= 1 && bl <= 64, "bl", "must be in [1, 64]");
  require(std::isfinite(dw_min) && dw_min > 0, "dw_min", "must be positive and finite");
  require(std::isfinite(dw_min_dtod) && dw_min_dtod >= 0, "dw_min_dtod", "must be >= 0");
  require(std::isfinite(dw_min_ctoc) && dw_min_ctoc >= 0, "dw_min_ctoc", "must be >= 0");
  require(std::isfinite(asym_dtod) && asym_dtod >= 0, "asym_dtod", "must be >= 0");
  require(std::isfinite(w_bound) && w_bound > 0, "w_bound", "must be positive and finite");
  require(std::isfinite(w_bound_dtod) && w_bound_dtod >= 0, "w_bound_dtod", "must be >= 0");
  require(std::isfinite(noise_sigma) && noise_sigma >= 0, "noise_sigma", "must be >= 0");
  // An infinite output bound disables saturation; it cannot be combined with an ADC.
  require(!std::isnan(out_bound) && out_bound > 0, "out_bound", "must be positive");
  require(in_bits == 0 || (in_bits >= 2 && in_bits <= 16), "in_bits", "must be 0 or in [2, 16]");
  require(out_bits == 0 || (out_bits >= 2 && out_bits <= 16), "out_bits",
          "must be 0 or in [2, 16]");
  require(out_bits == 0 || std::isfinite(out_bound), "out_bits",
          "an ADC needs a finite out_bound");
  require(std::isfinite(states_multiplier) && states_multiplier > 0, "states_multiplier",
          "must be positive and finite");
}

RpuConfig apply_preset(RpuConfig base, std::string_view preset) {
  if (preset == "baseline") return base;
  if (preset == "no-variation") {
    base.dw_min_dtod = 0.0;
    base.dw_min_ctoc = 0.0;
    base.w_bound_dtod = 0.0;
    return base;
  }
  if (preset == "states4x") {
    base.states_multiplier = 4.0;
    return base;
  }
  if (preset == "no-asym") {
    base.asym_dtod = 0.0;
    return base;
  }
  if (preset == "no-asym-states4x") {
    base.asym_dtod = 0.0;
    base.states_multiplier = 4.0;
    return base;
  }
  throw std::invalid_argument("unknown preset \"" + std::string(preset) + "\"");
}

const std::vector<std::string>& preset_names() {
  static const std::vector<std::string> names{"baseline", "no-variation", "states4x", "no-asym",
                                              "no-asym-states4x"};
  return names;
}

DeviceArray sample_device_array(std::size_t rows, std::size_t cols, const RpuConfig& cfg,
                                std::uint64_t seed) {
  if (rows == 0 || cols == 0) {
    throw std::invalid_argument("sample_device_array: rows and cols must be >= 1");
  }
  cfg.validate();

  DeviceArray arr;
  arr.rows = rows;
  arr.cols = cols;
  arr.dw_plus = Matrix(rows, cols);
  arr.dw_minus = Matrix(rows, cols);
  arr.w_max = Matrix(rows, cols);
  arr.w_min = Matrix(rows, cols);

  const double step_mean = cfg.dw_min_effective();
  Rng rng(seed);
  for (std::size_t r = 0; r < rows; ++r) {
    for (std::size_t c = 0; c < cols; ++c) {
      const double base =
          std::max(step_mean * (1.0 + cfg.dw_min_dtod * rng.normal()), 0.1 * step_mean);
      const double ratio = std::clamp(1.0 + cfg.asym_dtod * rng.normal(), 0.5, 2.0);
      const double upper =
          std::max(cfg.w_bound * (1.0 + cfg.w_bound_dtod * rng.normal()), 0.1 * cfg.w_bound);
      const double lower =
          std::max(cfg.w_bound * (1.0 + cfg.w_bound_dtod * rng.normal()), 0.1 * cfg.w_bound);
      arr.dw_plus(r, c) = base * ratio;
      arr.dw_minus(r, c) = base;
      arr.w_max(r, c) = upper;
      arr.w_min(r, c) = -lower;
    }
  }
  return arr;
}

StatesSummary states_stats(const DeviceArray& arr) {
  StatesSummary s{0.0, std::numeric_limits<double>::infinity(),
                  -std::numeric_limits<double>::infinity()};
  const auto n = arr.dw_minus.size();
  if (n == 0) throw std::invalid_argument("states_stats: empty device array");
  const auto wmax = arr.w_max.data();
  const auto wmin = arr.w_min.data();
  const auto step = arr.dw_minus.data();
  double sum = 0.0;
  for (std::size_t k = 0; k < n; ++k) {
    const double states = (wmax[k] - wmin[k]) / step[k];
    sum += states;
    s.min = std::min(s.min, states);
    s.max = std::max(s.max, states);
  }
  s.mean = sum / static_cast<double>(n);
  return s;
}

}  // namespace rpulstm
