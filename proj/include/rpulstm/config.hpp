#pragma once

#include <cstddef>
#include <filesystem>
#include <string>

#include <json.hpp>

#include "rpulstm/device_model.hpp"
#include "rpulstm/lstm_net.hpp"
#include "rpulstm/trainer.hpp"

namespace rpulstm {

struct ModelConfig {
  std::size_t depth = 2;
  std::size_t hidden = 512;
  std::string name;  // empty: derived as LSTM<depth>-<hidden>
  bool zero_head_init = true;

  std::string display_name() const;
  bool operator==(const ModelConfig&) const = default;
};

struct DataConfig {
  std::string path;
  std::size_t test_chars = 0;  // 0: last 10% of the corpus

  bool operator==(const DataConfig&) const = default;
};

struct OutputConfig {
  std::string dir = "runs/default";
  bool record_wall_time = false;
  int checkpoint_every = 1;  // epochs

  bool operator==(const OutputConfig&) const = default;
};

/// Full description of one experiment. Serialized as
///   {"model": {...}, "training": {...}, "rpu": {...}, "data": {...}, "output": {...}}
/// Every key is optional; missing keys take the defaults above. Unknown keys
/// and type mismatches are rejected with the full key path in the message.
struct ExperimentConfig {
  ModelConfig model;
  TrainConfig training;
  RpuConfig rpu;
  DataConfig data;
  OutputConfig output;

  void validate() const;
  /// Resolved test split length for a corpus of `corpus_chars` characters.
  std::size_t test_chars_for(std::size_t corpus_chars) const;
  LstmShape shape(std::size_t vocab) const;
  NetworkOptions network_options() const;

  bool operator==(const ExperimentConfig&) const = default;
};

nlohmann::json to_json(const ExperimentConfig& cfg);
nlohmann::json rpu_to_json(const RpuConfig& cfg);

/// Overlays `doc` onto `base`.
ExperimentConfig parse_config(const nlohmann::json& doc, ExperimentConfig base = {});
ExperimentConfig parse_config_text(const std::string& text, ExperimentConfig base = {});
ExperimentConfig load_config_file(const std::filesystem::path& path, ExperimentConfig base = {});

}  // namespace rpulstm
