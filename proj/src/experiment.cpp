#include "rpulstm/experiment.hpp"

#include <cmath>
#include <fstream>
#include <limits>
#include <stdexcept>

#include "rpulstm/perf_model.hpp"

namespace rpulstm {

Corpus load_experiment_corpus(const ExperimentConfig& cfg) {
  if (cfg.data.path.empty()) throw std::invalid_argument("data.path: no corpus file given");
  if (!std::filesystem::exists(cfg.data.path)) {
    throw std::runtime_error("data.path: file not found: " + cfg.data.path);
  }
  // Character count is needed for the default split; decode once to measure.
  std::ifstream in(cfg.data.path, std::ios::binary);
  const std::string bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  const std::u32string text = decode_utf8(bytes);
  return make_corpus(text, cfg.test_chars_for(text.size()));
}

RunResult run_training(const ExperimentConfig& requested,
                       const std::optional<std::filesystem::path>& resume, std::ostream* log) {
  requested.validate();
  Checkpoint ckpt;
  if (resume) {
    ckpt = load_checkpoint(*resume);
    ckpt.config.training.epochs = requested.training.epochs;
    ckpt.config.output = requested.output;
  } else {
    ckpt.config = requested;
  }
  const ExperimentConfig& cfg = ckpt.config;

  const Corpus corpus = load_experiment_corpus(cfg);
  if (resume) {
    if (corpus.vocab != ckpt.vocab) {
      throw std::runtime_error("resume: corpus vocabulary differs from the checkpoint's");
    }
  } else {
    ckpt.vocab = corpus.vocab;
    ckpt.network = LstmNetwork(cfg.shape(corpus.vocab_size()), cfg.network_options());
  }

  const std::filesystem::path dir = cfg.output.dir;
  std::filesystem::create_directories(dir);
  {
    std::ofstream out(dir / "config.json", std::ios::trunc);
    out << to_json(cfg).dump(2) << '\n';
  }
  CsvMetricsSink sink(dir / "metrics.csv");

  RunResult result;
  while (ckpt.state.epochs_done < cfg.training.epochs) {
    EpochSummary summary = train_epoch(ckpt.network, corpus, cfg.training, ckpt.state, &sink,
                                       cfg.output.record_wall_time);
    if (log) {
      *log << "epoch " << summary.epoch << ": train " << format_double(summary.train_loss)
           << " test " << format_double(summary.test_loss) << " nats/char\n";
    }
    result.epochs.push_back(summary);
    const bool last = ckpt.state.epochs_done == cfg.training.epochs;
    if (last || ckpt.state.epochs_done % cfg.output.checkpoint_every == 0) {
      save_checkpoint(dir / "checkpoint.bin", ckpt);
    }
  }
  result.state = ckpt.state;
  return result;
}

double evaluate_checkpoint(const std::filesystem::path& checkpoint,
                           const std::optional<std::string>& data_path) {
  Checkpoint ckpt = load_checkpoint(checkpoint);
  if (data_path) ckpt.config.data.path = *data_path;
  const Corpus corpus = load_experiment_corpus(ckpt.config);
  if (corpus.vocab != ckpt.vocab) {
    throw std::runtime_error("eval: corpus vocabulary differs from the checkpoint's");
  }
  return evaluate(ckpt.network, corpus, ckpt.config.training, ckpt.state);
}

nlohmann::json throughput_report(const ModelConfig& model, std::size_t vocab, double t_meas) {
  const LstmShape shape = LstmShape::character_model(model.depth, model.hidden, vocab);
  const TileInventory inventory = TileInventory::from_shape(shape, t_meas);
  const std::uint64_t devices = count_devices(inventory);
  const double ops = throughput(devices, t_meas);
  nlohmann::json tiles = nlohmann::json::array();
  for (const auto& [rows, cols] : inventory.tiles) tiles.push_back({rows, cols});
  return {{"model", model.display_name()},
          {"vocab", vocab},
          {"tiles", tiles},
          {"devices", devices},
          {"t_meas_seconds", t_meas},
          {"ops_per_second", ops},
          {"tera_ops_per_second", ops / 1e12}};
}

std::vector<double> log_spaced(double lo, double hi, int count) {
  if (!(lo > 0.0 && hi >= lo) || count < 1) {
    throw std::invalid_argument("log_spaced: need 0 < lo <= hi and count >= 1");
  }
  std::vector<double> out;
  for (int k = 0; k < count; ++k) {
    const double t = count == 1 ? 0.0 : static_cast<double>(k) / (count - 1);
    out.push_back(std::exp(std::log(lo) + t * (std::log(hi) - std::log(lo))));
  }
  return out;
}

std::vector<std::pair<double, double>> sweep_learning_rates(const ExperimentConfig& cfg,
                                                            const Corpus& corpus,
                                                            const std::vector<double>& lrs) {
  std::vector<std::pair<double, double>> out;
  for (double lr : lrs) {
    ExperimentConfig run = cfg;
    run.training.lr = lr;
    run.validate();
    LstmNetwork net(run.shape(corpus.vocab_size()), run.network_options());
    TrainerState state;
    double loss = 0.0;
    try {
      for (int e = 0; e < run.training.epochs; ++e) {
        loss = train_epoch(net, corpus, run.training, state, nullptr).test_loss;
      }
    } catch (const std::runtime_error&) {
      loss = std::numeric_limits<double>::infinity();  // diverged
    }
    out.emplace_back(lr, loss);
  }
  return out;
}

}  // namespace rpulstm
