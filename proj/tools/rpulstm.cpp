// Command-line front end: train, eval, throughput, dump-config, sweep.

#include <CLI11.hpp>

#include <cstdio>
#include <iostream>
#include <optional>
#include <string>

#include "rpulstm/config.hpp"
#include "rpulstm/device_model.hpp"
#include "rpulstm/experiment.hpp"

namespace {

using rpulstm::ExperimentConfig;

struct ConfigFlags {
  std::string config_file;
  std::string preset;
  std::optional<std::uint64_t> seed;
  std::optional<int> epochs;
  std::optional<double> lr;
  std::optional<double> dropout;
  std::optional<std::size_t> bptt;
  std::optional<std::string> mode;
  std::optional<std::size_t> depth;
  std::optional<std::size_t> hidden;
  std::optional<std::string> data;
  std::optional<std::size_t> test_chars;
  std::optional<std::string> out;
  std::optional<int> in_bits;
  std::optional<int> out_bits;
  std::optional<std::string> rounding;
  bool noiseless_eval = false;

  void attach(CLI::App* app) {
    app->add_option("-c,--config", config_file, "JSON config file");
    app->add_option("--preset", preset, "device ablation preset")
        ->check(CLI::IsMember(rpulstm::preset_names()));
    app->add_option("--seed", seed);
    app->add_option("--epochs", epochs);
    app->add_option("--lr", lr, "learning rate");
    app->add_option("--dropout", dropout, "dropout probability on non-recurrent edges");
    app->add_option("--bptt", bptt);
    app->add_option("--mode", mode)->check(CLI::IsMember({"analog", "fp"}));
    app->add_option("--depth", depth);
    app->add_option("--hidden", hidden);
    app->add_option("--data", data, "UTF-8 corpus file");
    app->add_option("--test-chars", test_chars);
    app->add_option("--out", out, "output directory");
    app->add_option("--in-bits", in_bits);
    app->add_option("--out-bits", out_bits);
    app->add_option("--rounding", rounding)->check(CLI::IsMember({"nearest", "stochastic"}));
    app->add_flag("--noiseless-eval", noiseless_eval);
  }

  ExperimentConfig resolve() const {
    ExperimentConfig cfg;
    if (!config_file.empty()) cfg = rpulstm::load_config_file(config_file);
    if (!preset.empty()) cfg.rpu = rpulstm::apply_preset(cfg.rpu, preset);
    nlohmann::json overlay = nlohmann::json::object();
    if (seed) overlay["training"]["seed"] = *seed;
    if (epochs) overlay["training"]["epochs"] = *epochs;
    if (lr) overlay["training"]["lr"] = *lr;
    if (dropout) overlay["training"]["dropout_p"] = *dropout;
    if (bptt) overlay["training"]["bptt"] = *bptt;
    if (mode) overlay["training"]["mode"] = *mode;
    if (noiseless_eval) overlay["training"]["noiseless_eval"] = true;
    if (depth) overlay["model"]["depth"] = *depth;
    if (hidden) overlay["model"]["hidden"] = *hidden;
    if (data) overlay["data"]["path"] = *data;
    if (test_chars) overlay["data"]["test_chars"] = *test_chars;
    if (out) overlay["output"]["dir"] = *out;
    if (in_bits) overlay["rpu"]["in_bits"] = *in_bits;
    if (out_bits) overlay["rpu"]["out_bits"] = *out_bits;
    if (rounding) overlay["rpu"]["rounding"] = *rounding;
    return rpulstm::parse_config(overlay, cfg);
  }
};

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Train character-level LSTMs on simulated resistive cross-point arrays"};
  app.require_subcommand(1);

  ConfigFlags train_flags;
  std::string resume;
  auto* train = app.add_subcommand("train", "train a model and write metrics/checkpoints");
  train_flags.attach(train);
  train->add_option("--resume", resume, "continue from this checkpoint");

  std::string eval_checkpoint;
  std::optional<std::string> eval_data;
  auto* eval = app.add_subcommand("eval", "print the test loss of a checkpoint");
  eval->add_option("checkpoint", eval_checkpoint)->required();
  eval->add_option("--data", eval_data, "corpus file (defaults to the stored path)");

  ConfigFlags tp_flags;
  std::optional<std::size_t> vocab;
  double t_meas = 80e-9;
  auto* tp = app.add_subcommand("throughput", "device count and peak throughput of a model");
  tp_flags.attach(tp);
  tp->add_option("--vocab", vocab, "output classes (default: from --data)");
  tp->add_option("--t-meas", t_meas, "array cycle time in seconds");

  ConfigFlags dump_flags;
  auto* dump = app.add_subcommand("dump-config", "print the fully resolved config");
  dump_flags.attach(dump);

  ConfigFlags sweep_flags;
  double lr_min = 1e-3, lr_max = 1e-1;
  int lr_count = 5;
  auto* sweep = app.add_subcommand("sweep", "short training runs over log-spaced learning rates");
  sweep_flags.attach(sweep);
  sweep->add_option("--lr-min", lr_min);
  sweep->add_option("--lr-max", lr_max);
  sweep->add_option("--count", lr_count)->check(CLI::Range(1, 16));

  CLI11_PARSE(app, argc, argv);

  try {
    if (*train) {
      const ExperimentConfig cfg = train_flags.resolve();
      std::optional<std::filesystem::path> from;
      if (!resume.empty()) from = resume;
      rpulstm::run_training(cfg, from, &std::cerr);
    } else if (*eval) {
      const double loss = rpulstm::evaluate_checkpoint(eval_checkpoint, eval_data);
      std::cout << rpulstm::format_double(loss) << '\n';
    } else if (*tp) {
      const ExperimentConfig cfg = tp_flags.resolve();
      std::size_t classes = 0;
      if (vocab) {
        classes = *vocab;
      } else if (!cfg.data.path.empty()) {
        classes = rpulstm::load_experiment_corpus(cfg).vocab_size();
      } else {
        throw std::invalid_argument("throughput: give --vocab or a corpus via --data");
      }
      std::cout << rpulstm::throughput_report(cfg.model, classes, t_meas).dump() << '\n';
    } else if (*dump) {
      std::cout << rpulstm::to_json(dump_flags.resolve()).dump(2) << '\n';
    } else if (*sweep) {
      const ExperimentConfig cfg = sweep_flags.resolve();
      const rpulstm::Corpus corpus = rpulstm::load_experiment_corpus(cfg);
      const auto results =
          rpulstm::sweep_learning_rates(cfg, corpus, rpulstm::log_spaced(lr_min, lr_max, lr_count));
      std::cout << "lr,test_loss_nats\n";
      for (const auto& [lr, loss] : results) {
        std::cout << rpulstm::format_double(lr) << ',' << rpulstm::format_double(loss) << '\n';
      }
    }
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 1;
  }
  return 0;
}
