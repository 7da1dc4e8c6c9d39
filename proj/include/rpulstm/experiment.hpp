#pragma once

#include <filesystem>
#include <optional>
#include <ostream>
#include <string>
#include <utility>
#include <vector>

#include <json.hpp>

#include "rpulstm/checkpoint.hpp"
#include "rpulstm/config.hpp"
#include "rpulstm/trainer.hpp"

namespace rpulstm {

/// Corpus named by cfg.data, split per cfg.data.test_chars.
Corpus load_experiment_corpus(const ExperimentConfig& cfg);

struct RunResult {
  std::vector<EpochSummary> epochs;
  TrainerState state;
};

/// Trains per `cfg`, writing into cfg.output.dir:
///   config.json     resolved configuration
///   metrics.csv     one row per evaluation point (appended on resume)
///   checkpoint.bin  latest checkpoint, every output.checkpoint_every epochs and at the end
/// With `resume`, the run continues from that checkpoint up to
/// cfg.training.epochs total epochs; everything else comes from the checkpoint.
RunResult run_training(const ExperimentConfig& cfg,
                       const std::optional<std::filesystem::path>& resume = std::nullopt,
                       std::ostream* log = nullptr);

/// Test loss of a checkpoint, evaluated exactly as the trainer does at the
/// checkpoint's training position. `data_path` overrides the stored corpus path.
double evaluate_checkpoint(const std::filesystem::path& checkpoint,
                           const std::optional<std::string>& data_path = std::nullopt);

/// One-line JSON report of device count and peak throughput for a model.
nlohmann::json throughput_report(const ModelConfig& model, std::size_t vocab,
                                 double t_meas = 80e-9);

/// `count` learning rates spaced evenly in log between lo and hi.
std::vector<double> log_spaced(double lo, double hi, int count);

/// Trains one fresh network per learning rate for cfg.training.epochs and
/// returns (lr, final test loss) pairs.
std::vector<std::pair<double, double>> sweep_learning_rates(const ExperimentConfig& cfg,
                                                            const Corpus& corpus,
                                                            const std::vector<double>& lrs);

}  // namespace rpulstm
