#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <span>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

#include "rpulstm/lstm_net.hpp"
#include "rpulstm/rng.hpp"

namespace rpulstm {

/// Half-open index interval [begin, end).
struct Range {
  std::size_t begin = 0;
  std::size_t end = 0;
  std::size_t size() const { return end - begin; }
  bool operator==(const Range&) const = default;
};

/// Character stream with a first-appearance vocabulary and a trailing test split.
struct Corpus {
  std::vector<std::size_t> tokens;  // vocabulary index per character
  std::vector<char32_t> vocab;
  Range train;
  Range test;

  std::size_t vocab_size() const { return vocab.size(); }
  std::u32string text(Range range) const;
};

std::u32string decode_utf8(std::string_view bytes);
std::string encode_utf8(std::u32string_view text);

/// Builds the vocabulary over the whole text; the last `test_chars`
/// characters form the test range.
Corpus make_corpus(std::u32string_view text, std::size_t test_chars);
Corpus load_corpus(const std::filesystem::path& path, std::size_t test_chars);

struct Window {
  std::span<const std::size_t> inputs;
  std::span<const std::size_t> targets;
};

/// Consecutive non-overlapping windows of `bptt` characters; targets are the
/// inputs shifted by one. A trailing partial window is dropped, so a range of
/// at most `bptt` characters yields no windows.
std::vector<Window> windows(const Corpus& corpus, Range range, std::size_t bptt);

struct TrainConfig {
  double lr = 0.01;
  double dropout_p = 0.0;
  std::size_t bptt = 100;
  int epochs = 1;
  std::uint64_t seed = 0;
  TileMode mode = TileMode::analog;
  bool noiseless_eval = false;
  std::size_t eval_every_windows = 0;  // 0: evaluate at epoch ends only

  void validate() const;
  bool operator==(const TrainConfig&) const = default;
};

struct TrainerState {
  int epochs_done = 0;
  std::uint64_t windows_seen = 0;
  double wall_seconds = 0.0;

  bool operator==(const TrainerState&) const = default;
};

struct MetricRecord {
  int epoch = 0;
  std::uint64_t windows_seen = 0;
  double train_loss = 0.0;  // nats per character, running mean over the epoch so far
  double test_loss = 0.0;   // nats per character
  double wall_seconds = 0.0;

  bool operator==(const MetricRecord&) const = default;
};

class MetricsSink {
 public:
  virtual ~MetricsSink() = default;
  virtual void record(const MetricRecord& rec) = 0;
};

class MemoryMetricsSink : public MetricsSink {
 public:
  void record(const MetricRecord& rec) override { records.push_back(rec); }
  std::vector<MetricRecord> records;
};

/// Append-only CSV: epoch,windows_seen,train_loss_nats,test_loss_nats,wall_seconds.
/// The header is written when the file is new or empty. Each row is flushed.
class CsvMetricsSink : public MetricsSink {
 public:
  static constexpr std::string_view kHeader =
      "epoch,windows_seen,train_loss_nats,test_loss_nats,wall_seconds";

  explicit CsvMetricsSink(const std::filesystem::path& path);
  void record(const MetricRecord& rec) override;

  static std::string format_row(const MetricRecord& rec);

 private:
  std::ofstream out_;
};

/// Shortest text that round-trips the double.
std::string format_double(double value);

/// Evaluation read stream for a given training position, so that evaluations
/// never perturb the training streams and can be replayed from a checkpoint.
Rng evaluation_rng(std::uint64_t seed, std::uint64_t windows_seen);

/// Mean test loss in nats per character: forward only, no dropout, hidden
/// state carried across test windows from zero.
double evaluate(const LstmNetwork& network, const Corpus& corpus, const TrainConfig& cfg,
                Rng& read_rng);

/// Evaluation at the current training position.
double evaluate(const LstmNetwork& network, const Corpus& corpus, const TrainConfig& cfg,
                const TrainerState& state);

struct EpochSummary {
  int epoch = 0;
  std::size_t windows = 0;
  double train_loss = 0.0;
  double test_loss = 0.0;
};

/// One pass over the training windows, hidden state zeroed at the start and
/// carried across windows. Records a metric row at every evaluation point.
/// Wall time is accumulated into `state` only when `record_wall_time` is set,
/// so that metric streams are reproducible by default.
EpochSummary train_epoch(LstmNetwork& network, const Corpus& corpus, const TrainConfig& cfg,
                         TrainerState& state, MetricsSink* sink, bool record_wall_time = false);

}  // namespace rpulstm
