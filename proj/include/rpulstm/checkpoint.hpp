#pragma once

#include <cstdint>
#include <filesystem>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

#include "rpulstm/config.hpp"
#include "rpulstm/lstm_net.hpp"
#include "rpulstm/trainer.hpp"

namespace rpulstm {

class CheckpointError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Everything needed to resume a run bit-exactly.
struct Checkpoint {
  ExperimentConfig config;
  std::vector<char32_t> vocab;
  LstmNetwork network;
  TrainerState state;
};

/// File layout:
///   "RPULSTM1"
///   u64 LE header length, UTF-8 JSON header (version, shapes, config, vocab,
///     RNG states, trainer counters, array manifest)
///   f64 LE arrays in manifest order: per tile w, then dw_plus, dw_minus,
///     w_max, w_min for analog tiles
///   u32 LE CRC-32 of everything between the magic and the CRC
inline constexpr std::string_view kCheckpointMagic = "RPULSTM1";
inline constexpr int kCheckpointVersion = 1;

std::string serialize_checkpoint(const Checkpoint& ckpt);
Checkpoint deserialize_checkpoint(std::string_view bytes);

void save_checkpoint(const std::filesystem::path& path, const Checkpoint& ckpt);
Checkpoint load_checkpoint(const std::filesystem::path& path);

}  // namespace rpulstm
