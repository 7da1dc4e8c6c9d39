#include "rpulstm/trainer.hpp"

#include <charconv>
#include <chrono>
#include <cmath>
#include <iterator>
#include <sstream>
#include <stdexcept>

namespace rpulstm {

namespace {

[[noreturn]] void utf8_error(std::size_t offset) {
  throw std::invalid_argument("invalid UTF-8 at byte offset " + std::to_string(offset));
}

}  // namespace

std::u32string decode_utf8(std::string_view bytes) {
  std::u32string out;
  out.reserve(bytes.size());
  std::size_t k = 0;
  while (k < bytes.size()) {
    const auto lead = static_cast<unsigned char>(bytes[k]);
    std::size_t extra;
    char32_t cp;
    if (lead < 0x80) {
      extra = 0;
      cp = lead;
    } else if ((lead & 0xE0) == 0xC0) {
      extra = 1;
      cp = lead & 0x1F;
    } else if ((lead & 0xF0) == 0xE0) {
      extra = 2;
      cp = lead & 0x0F;
    } else if ((lead & 0xF8) == 0xF0) {
      extra = 3;
      cp = lead & 0x07;
    } else {
      utf8_error(k);
    }
    if (k + extra >= bytes.size()) utf8_error(k);
    for (std::size_t j = 1; j <= extra; ++j) {
      const auto cont = static_cast<unsigned char>(bytes[k + j]);
      if ((cont & 0xC0) != 0x80) utf8_error(k + j);
      cp = (cp << 6) | (cont & 0x3F);
    }
    static constexpr char32_t kMinForLength[] = {0, 0x80, 0x800, 0x10000};
    if (cp < kMinForLength[extra] || cp > 0x10FFFF || (cp >= 0xD800 && cp <= 0xDFFF)) utf8_error(k);
    out.push_back(cp);
    k += extra + 1;
  }
  return out;
}

std::string encode_utf8(std::u32string_view text) {
  std::string out;
  for (char32_t cp : text) {
    if (cp < 0x80) {
      out.push_back(static_cast<char>(cp));
    } else if (cp < 0x800) {
      out.push_back(static_cast<char>(0xC0 | (cp >> 6)));
      out.push_back(static_cast<char>(0x80 | (cp & 0x3F)));
    } else if (cp < 0x10000) {
      out.push_back(static_cast<char>(0xE0 | (cp >> 12)));
      out.push_back(static_cast<char>(0x80 | ((cp >> 6) & 0x3F)));
      out.push_back(static_cast<char>(0x80 | (cp & 0x3F)));
    } else {
      out.push_back(static_cast<char>(0xF0 | (cp >> 18)));
      out.push_back(static_cast<char>(0x80 | ((cp >> 12) & 0x3F)));
      out.push_back(static_cast<char>(0x80 | ((cp >> 6) & 0x3F)));
      out.push_back(static_cast<char>(0x80 | (cp & 0x3F)));
    }
  }
  return out;
}

std::u32string Corpus::text(Range range) const {
  std::u32string out;
  out.reserve(range.size());
  for (std::size_t k = range.begin; k < range.end; ++k) out.push_back(vocab.at(tokens.at(k)));
  return out;
}

Corpus make_corpus(std::u32string_view text, std::size_t test_chars) {
  if (text.empty()) throw std::invalid_argument("corpus is empty");
  if (test_chars >= text.size()) {
    throw std::invalid_argument("test_chars (" + std::to_string(test_chars) +
                                ") must be smaller than the corpus length (" +
                                std::to_string(text.size()) + ")");
  }
  Corpus corpus;
  std::unordered_map<char32_t, std::size_t> index;
  corpus.tokens.reserve(text.size());
  for (char32_t ch : text) {
    auto [it, inserted] = index.try_emplace(ch, corpus.vocab.size());
    if (inserted) corpus.vocab.push_back(ch);
    corpus.tokens.push_back(it->second);
  }
  corpus.train = {0, text.size() - test_chars};
  corpus.test = {text.size() - test_chars, text.size()};
  return corpus;
}

Corpus load_corpus(const std::filesystem::path& path, std::size_t test_chars) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot read corpus file " + path.string());
  const std::string bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  return make_corpus(decode_utf8(bytes), test_chars);
}

std::vector<Window> windows(const Corpus& corpus, Range range, std::size_t bptt) {
  if (bptt == 0) throw std::invalid_argument("windows: bptt must be >= 1");
  if (range.begin > range.end || range.end > corpus.tokens.size()) {
    throw std::invalid_argument("windows: range outside the corpus");
  }
  std::vector<Window> out;
  if (range.size() <= bptt) return out;
  const std::size_t count = (range.size() - 1) / bptt;
  const std::span<const std::size_t> tokens(corpus.tokens);
  out.reserve(count);
  for (std::size_t w = 0; w < count; ++w) {
    const std::size_t start = range.begin + w * bptt;
    out.push_back({tokens.subspan(start, bptt), tokens.subspan(start + 1, bptt)});
  }
  return out;
}

void TrainConfig::validate() const {
  auto fail = [](const std::string& what) { throw std::invalid_argument("training." + what); };
  if (!(lr >= 0.0) || !std::isfinite(lr)) fail("lr: must be >= 0 and finite");
  if (!(dropout_p >= 0.0 && dropout_p < 1.0)) fail("dropout_p: must be in [0, 1)");
  if (bptt == 0) fail("bptt: must be >= 1");
  if (epochs < 1) fail("epochs: must be >= 1");
}

CsvMetricsSink::CsvMetricsSink(const std::filesystem::path& path) {
  const bool fresh = !std::filesystem::exists(path) || std::filesystem::file_size(path) == 0;
  out_.open(path, std::ios::app | std::ios::binary);
  if (!out_) throw std::runtime_error("cannot open metrics file " + path.string());
  if (fresh) {
    out_ << kHeader << '\n';
    out_.flush();
  }
}

void CsvMetricsSink::record(const MetricRecord& rec) {
  out_ << format_row(rec) << '\n';
  out_.flush();
  if (!out_) throw std::runtime_error("failed writing metrics row");
}

std::string CsvMetricsSink::format_row(const MetricRecord& rec) {
  std::ostringstream os;
  os << rec.epoch << ',' << rec.windows_seen << ',' << format_double(rec.train_loss) << ','
     << format_double(rec.test_loss) << ',' << format_double(rec.wall_seconds);
  return os.str();
}

std::string format_double(double value) {
  char buf[64];
  const auto res = std::to_chars(buf, buf + sizeof(buf), value);
  return std::string(buf, res.ptr);
}

Rng evaluation_rng(std::uint64_t seed, std::uint64_t windows_seen) {
  return Rng::derive(seed ^ 0x5eed'e7a1'0000'0000ULL, windows_seen);
}

double evaluate(const LstmNetwork& network, const Corpus& corpus, const TrainConfig& cfg,
                Rng& read_rng) {
  LstmNetwork net = (cfg.noiseless_eval && network.mode() == TileMode::analog)
                        ? network.without_read_noise()
                        : network;
  const auto test_windows = windows(corpus, corpus.test, cfg.bptt);
  if (test_windows.empty()) throw std::invalid_argument("evaluate: test range too short");
  HiddenState hidden = HiddenState::zeros(net.shape());
  double total = 0.0;
  std::size_t count = 0;
  for (const Window& w : test_windows) {
    const WindowResult r = net.window_pass(w.inputs, w.targets, hidden, {}, &read_rng);
    total += r.loss_sum;
    count += r.steps;
  }
  return total / static_cast<double>(count);
}

double evaluate(const LstmNetwork& network, const Corpus& corpus, const TrainConfig& cfg,
                const TrainerState& state) {
  Rng rng = evaluation_rng(cfg.seed, state.windows_seen);
  return evaluate(network, corpus, cfg, rng);
}

EpochSummary train_epoch(LstmNetwork& network, const Corpus& corpus, const TrainConfig& cfg,
                         TrainerState& state, MetricsSink* sink, bool record_wall_time) {
  cfg.validate();
  const auto train_windows = windows(corpus, corpus.train, cfg.bptt);
  if (train_windows.empty()) throw std::invalid_argument("train_epoch: training range too short");

  const auto started = std::chrono::steady_clock::now();
  const double wall_before = state.wall_seconds;
  auto update_clock = [&] {
    if (!record_wall_time) return;
    state.wall_seconds =
        wall_before +
        std::chrono::duration<double>(std::chrono::steady_clock::now() - started).count();
  };

  EpochSummary summary;
  summary.epoch = state.epochs_done + 1;
  HiddenState hidden = HiddenState::zeros(network.shape());
  const WindowOptions options{true, cfg.lr, cfg.dropout_p};
  double loss_total = 0.0;
  std::size_t chars = 0;

  auto emit = [&](double test_loss) {
    update_clock();
    if (!sink) return;
    MetricRecord rec;
    rec.epoch = summary.epoch;
    rec.windows_seen = state.windows_seen;
    rec.train_loss = loss_total / static_cast<double>(chars);
    rec.test_loss = test_loss;
    rec.wall_seconds = state.wall_seconds;
    sink->record(rec);
  };

  for (std::size_t k = 0; k < train_windows.size(); ++k) {
    const Window& w = train_windows[k];
    const WindowResult r = network.window_pass(w.inputs, w.targets, hidden, options);
    if (!std::isfinite(r.loss_sum)) {
      throw std::runtime_error("train_epoch: non-finite loss at epoch " +
                               std::to_string(summary.epoch) + ", window " + std::to_string(k));
    }
    loss_total += r.loss_sum;
    chars += r.steps;
    ++state.windows_seen;
    const bool last = k + 1 == train_windows.size();
    if (!last && cfg.eval_every_windows > 0 && (k + 1) % cfg.eval_every_windows == 0) {
      emit(evaluate(network, corpus, cfg, state));
    }
  }

  summary.windows = train_windows.size();
  summary.train_loss = loss_total / static_cast<double>(chars);
  summary.test_loss = evaluate(network, corpus, cfg, state);
  state.epochs_done = summary.epoch;
  emit(summary.test_loss);
  return summary;
}

}  // namespace rpulstm
