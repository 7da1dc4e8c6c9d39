#include "rpulstm/analog_tile.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstdint>
#include <stdexcept>
#include <string>
#include <vector>

namespace rpulstm {

namespace {

constexpr double kRangeTolerance = 1e-12;

// Number of positive levels of a symmetric mid-tread quantizer.
double positive_levels(int bits) { return std::ldexp(1.0, bits - 1) - 1.0; }

void check_length(std::size_t got, std::size_t want, const char* what) {
  if (got != want) {
    throw std::invalid_argument(std::string(what) + ": expected length " + std::to_string(want) +
                                ", got " + std::to_string(got));
  }
}

}  // namespace

Vector quantize_vector(std::span<const double> v, int bits, Rounding mode, Rng& rng) {
  if (bits != 0 && bits < 2) throw std::invalid_argument("quantize_vector: bits must be 0 or >= 2");
  Vector out(v.begin(), v.end());
  for (double& x : out) {
    if (!(std::abs(x) <= 1.0 + kRangeTolerance)) {
      throw std::invalid_argument("quantize_vector: component " + std::to_string(x) +
                                  " outside [-1, 1]");
    }
    x = std::clamp(x, -1.0, 1.0);
  }
  if (bits == 0) return out;

  const double levels = positive_levels(bits);
  if (mode == Rounding::nearest) {
    for (double& x : out) x = std::round(x * levels) / levels;
  } else {
    for (double& x : out) {
      const double scaled = x * levels;
      const double low = std::floor(scaled);
      const double frac = scaled - low;
      // Draw only on off-grid values so exact levels consume no randomness.
      const double level = (frac > 0.0 && rng.bernoulli(frac)) ? low + 1.0 : low;
      x = level / levels;
    }
  }
  return out;
}

AnalogTile AnalogTile::make_analog(Matrix weights, DeviceArray devices, const RpuConfig& cfg,
                                   Rng rng) {
  cfg.validate();
  if (devices.rows != weights.rows() || devices.cols != weights.cols()) {
    throw std::invalid_argument("AnalogTile: device array shape does not match weights");
  }
  AnalogTile tile;
  tile.mode_ = TileMode::analog;
  tile.cfg_ = cfg;
  tile.devices_ = std::move(devices);
  tile.rng_ = std::move(rng);
  tile.set_weights(std::move(weights));
  return tile;
}

AnalogTile AnalogTile::make_fp(Matrix weights) {
  AnalogTile tile;
  tile.mode_ = TileMode::fp;
  tile.w_ = std::move(weights);
  return tile;
}

void AnalogTile::set_weights(Matrix weights) {
  if (mode_ == TileMode::analog) {
    if (weights.rows() != devices_.rows || weights.cols() != devices_.cols) {
      throw std::invalid_argument("AnalogTile::set_weights: shape mismatch");
    }
    auto w = weights.data();
    const auto lo = devices_.w_min.data();
    const auto hi = devices_.w_max.data();
    for (std::size_t k = 0; k < w.size(); ++k) w[k] = std::clamp(w[k], lo[k], hi[k]);
  }
  w_ = std::move(weights);
}

Vector AnalogTile::analog_mvm(std::span<const double> v, bool transpose, Rng& rng) const {
  check_length(v.size(), transpose ? rows() : cols(), "analog_mvm");
  const Vector q = quantize_vector(v, cfg_.in_bits, cfg_.rounding, rng);

  Vector y;
  if (!transpose) {
    y.assign(rows(), 0.0);
    for (std::size_t r = 0; r < rows(); ++r) {
      const auto wr = w_.row(r);
      double acc = 0.0;
      for (std::size_t c = 0; c < wr.size(); ++c) acc += wr[c] * q[c];
      y[r] = acc;
    }
  } else {
    y.assign(cols(), 0.0);
    for (std::size_t r = 0; r < rows(); ++r) {
      const double qr = q[r];
      if (qr == 0.0) continue;
      const auto wr = w_.row(r);
      for (std::size_t c = 0; c < wr.size(); ++c) y[c] += wr[c] * qr;
    }
  }

  const double alpha = cfg_.out_bound;
  const double levels = cfg_.out_bits > 0 ? positive_levels(cfg_.out_bits) : 0.0;
  for (double& value : y) {
    if (cfg_.noise_sigma > 0.0) value += cfg_.noise_sigma * rng.normal();
    value = std::clamp(value, -alpha, alpha);
    if (cfg_.out_bits > 0) value = std::round(value / alpha * levels) * alpha / levels;
  }
  return y;
}

ManagedResult AnalogTile::managed(std::span<const double> x, bool transpose, Rng& rng) const {
  check_length(x.size(), transpose ? rows() : cols(), transpose ? "managed_backward"
                                                                : "managed_forward");
  double max_abs = 0.0;
  for (double v : x) {
    if (!std::isfinite(v)) throw std::invalid_argument("managed read: non-finite input");
    max_abs = std::max(max_abs, std::abs(v));
  }
  ManagedResult result;
  if (max_abs == 0.0) {
    result.value.assign(transpose ? cols() : rows(), 0.0);
    return result;
  }

  const double alpha = cfg_.out_bound;
  Vector scaled(x.size());
  double reduction = 1.0;
  for (int retries = 0;; ++retries) {
    const double scale = max_abs * reduction;
    for (std::size_t k = 0; k < x.size(); ++k) scaled[k] = x[k] / scale;
    // Saturation is judged on the clamped analog value, which sits exactly at +/-alpha.
    Vector y = analog_mvm(scaled, transpose, rng);
    const bool saturated =
        std::isfinite(alpha) &&
        std::any_of(y.begin(), y.end(), [alpha](double v) { return std::abs(v) >= alpha; });
    if (!saturated || retries == kMaxBoundRetries) {
      for (double& v : y) v *= scale;
      result.value = std::move(y);
      result.scale_used = scale;
      result.bound_retries = retries;
      return result;
    }
    reduction *= 2.0;
  }
}

ManagedResult AnalogTile::managed_forward(std::span<const double> x, Rng& rng) const {
  return managed(x, false, rng);
}

ManagedResult AnalogTile::managed_backward(std::span<const double> d, Rng& rng) const {
  return managed(d, true, rng);
}

void AnalogTile::stochastic_update(std::span<const double> x, std::span<const double> d,
                                   double lr) {
  if (mode_ != TileMode::analog) {
    throw std::logic_error("stochastic_update: tile is in fp mode; use fp_apply_delta");
  }
  if (!(lr > 0.0) || !std::isfinite(lr)) {
    throw std::invalid_argument("stochastic_update: learning rate must be positive");
  }
  check_length(x.size(), cols(), "stochastic_update x");
  check_length(d.size(), rows(), "stochastic_update d");

  const int bl = cfg_.bl;
  const double gain = std::sqrt(lr / (bl * cfg_.dw_min_effective()));
  const std::uint64_t all_slots = bl == 64 ? ~std::uint64_t{0} : (std::uint64_t{1} << bl) - 1;

  auto pulse_train = [&](double value) -> std::uint64_t {
    const double p = std::min(1.0, gain * std::abs(value));
    if (p <= 0.0) return 0;
    if (p >= 1.0) return all_slots;
    std::uint64_t bits = 0;
    for (int slot = 0; slot < bl; ++slot) {
      if (rng_.bernoulli(p)) bits |= std::uint64_t{1} << slot;
    }
    return bits;
  };

  struct Line {
    std::size_t index;
    std::uint64_t bits;
    bool positive;
  };
  std::vector<Line> active_cols;
  active_cols.reserve(cols());
  for (std::size_t c = 0; c < cols(); ++c) {
    const std::uint64_t bits = pulse_train(x[c]);
    if (bits != 0) active_cols.push_back({c, bits, x[c] > 0.0});
  }
  std::vector<Line> active_rows;
  active_rows.reserve(rows());
  for (std::size_t r = 0; r < rows(); ++r) {
    const std::uint64_t bits = pulse_train(d[r]);
    if (bits != 0) active_rows.push_back({r, bits, d[r] > 0.0});
  }
  if (active_cols.empty()) return;

  const double ctoc = cfg_.dw_min_ctoc;
  for (const Line& row : active_rows) {
    auto w = w_.row(row.index);
    const auto up = devices_.dw_plus.row(row.index);
    const auto down = devices_.dw_minus.row(row.index);
    const auto lo = devices_.w_min.row(row.index);
    const auto hi = devices_.w_max.row(row.index);
    for (const Line& col : active_cols) {
      const int coincidences = std::popcount(row.bits & col.bits);
      if (coincidences == 0) continue;
      const std::size_t c = col.index;
      const bool increase = row.positive == col.positive;
      const double step = increase ? up[c] : down[c];
      double total;
      if (ctoc > 0.0) {
        total = 0.0;
        for (int k = 0; k < coincidences; ++k) {
          total += step * std::max(0.0, 1.0 + ctoc * rng_.normal());
        }
      } else {
        total = step * coincidences;
      }
      // All coincidences of one device move it the same way, so clamping the
      // sum equals clamping after each pulse.
      w[c] = std::clamp(increase ? w[c] + total : w[c] - total, lo[c], hi[c]);
    }
  }
}

Vector AnalogTile::fp_forward(std::span<const double> x) const {
  if (mode_ != TileMode::fp) throw std::logic_error("fp_forward: tile is in analog mode");
  check_length(x.size(), cols(), "fp_forward");
  Vector y(rows(), 0.0);
  for (std::size_t r = 0; r < rows(); ++r) {
    const auto wr = w_.row(r);
    double acc = 0.0;
    for (std::size_t c = 0; c < wr.size(); ++c) acc += wr[c] * x[c];
    y[r] = acc;
  }
  return y;
}

Vector AnalogTile::fp_backward(std::span<const double> d) const {
  if (mode_ != TileMode::fp) throw std::logic_error("fp_backward: tile is in analog mode");
  check_length(d.size(), rows(), "fp_backward");
  Vector z(cols(), 0.0);
  for (std::size_t r = 0; r < rows(); ++r) {
    const double dr = d[r];
    if (dr == 0.0) continue;
    const auto wr = w_.row(r);
    for (std::size_t c = 0; c < wr.size(); ++c) z[c] += wr[c] * dr;
  }
  return z;
}

void AnalogTile::fp_apply_delta(const Matrix& delta, double lr) {
  if (mode_ != TileMode::fp) throw std::logic_error("fp_apply_delta: tile is in analog mode");
  if (delta.rows() != rows() || delta.cols() != cols()) {
    throw std::invalid_argument("fp_apply_delta: shape mismatch");
  }
  auto w = w_.data();
  const auto dw = delta.data();
  for (std::size_t k = 0; k < w.size(); ++k) w[k] += lr * dw[k];
}

Vector AnalogTile::forward(std::span<const double> x, Rng& rng) const {
  return mode_ == TileMode::analog ? managed_forward(x, rng).value : fp_forward(x);
}

Vector AnalogTile::backward(std::span<const double> d, Rng& rng) const {
  return mode_ == TileMode::analog ? managed_backward(d, rng).value : fp_backward(d);
}

bool AnalogTile::weights_within_bounds() const {
  if (mode_ != TileMode::analog) return true;
  const auto w = w_.data();
  const auto lo = devices_.w_min.data();
  const auto hi = devices_.w_max.data();
  for (std::size_t k = 0; k < w.size(); ++k) {
    if (w[k] < lo[k] || w[k] > hi[k]) return false;
  }
  return true;
}

}  // namespace rpulstm
