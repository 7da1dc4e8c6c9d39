#include "rpulstm/perf_model.hpp"

#include <cmath>
#include <stdexcept>

namespace rpulstm {

TileInventory TileInventory::from_shape(const LstmShape& shape, double t_meas) {
  return {shape.tile_shapes(), t_meas};
}

void TileInventory::validate() const {
  if (!(t_meas > 0.0) || !std::isfinite(t_meas)) {
    throw std::invalid_argument("TileInventory: t_meas must be positive");
  }
  for (const auto& [rows, cols] : tiles) {
    if (rows == 0 || cols == 0) throw std::invalid_argument("TileInventory: empty tile");
  }
}

std::uint64_t count_devices(const TileInventory& inventory) {
  inventory.validate();
  std::uint64_t total = 0;
  for (const auto& [rows, cols] : inventory.tiles) total += std::uint64_t{rows} * cols;
  return total;
}

std::uint64_t count_devices(const LstmShape& shape) {
  return count_devices(TileInventory::from_shape(shape));
}

double throughput(std::uint64_t total_devices, double t_meas) {
  if (total_devices == 0 || !(t_meas > 0.0)) {
    throw std::invalid_argument("throughput: device count and t_meas must be positive");
  }
  return 2.0 * static_cast<double>(total_devices) / t_meas;
}

}  // namespace rpulstm
