#pragma once

#include <cstddef>
#include <cstdint>
#include <utility>
#include <vector>

#include "rpulstm/lstm_net.hpp"

namespace rpulstm {

/// Arrays active at once in a fully pipelined accelerator.
struct TileInventory {
  std::vector<std::pair<std::size_t, std::size_t>> tiles;
  double t_meas = 80e-9;  // seconds per forward/backward/update cycle

  static TileInventory from_shape(const LstmShape& shape, double t_meas = 80e-9);
  void validate() const;
};

std::uint64_t count_devices(const TileInventory& inventory);
std::uint64_t count_devices(const LstmShape& shape);

/// Every device does one multiply and one add per cycle: 2 * devices / t_meas.
double throughput(std::uint64_t total_devices, double t_meas);

}  // namespace rpulstm
