#include <doctest.h>

#include <cmath>
#include <filesystem>
#include <fstream>
#include <sstream>

#include "rpulstm/trainer.hpp"

using namespace rpulstm;

namespace {

std::u32string repeat(std::u32string_view unit, std::size_t times) {
  std::u32string out;
  for (std::size_t k = 0; k < times; ++k) out += unit;
  return out;
}

std::filesystem::path scratch(const std::string& name) {
  const auto dir = std::filesystem::temp_directory_path() / "rpulstm_trainer_tests";
  std::filesystem::create_directories(dir);
  const auto path = dir / name;
  std::filesystem::remove(path);
  return path;
}

std::string slurp(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

std::string to_string(const Corpus& c, std::span<const std::size_t> tokens) {
  std::u32string s;
  for (std::size_t t : tokens) s += c.vocab[t];
  return encode_utf8(s);
}

LstmNetwork small_net(const Corpus& corpus, TileMode mode, std::uint64_t seed) {
  NetworkOptions opts;
  opts.mode = mode;
  opts.seed = seed;
  return LstmNetwork(LstmShape::character_model(1, 8, corpus.vocab_size()), opts);
}

}  // namespace

TEST_CASE("make_corpus") {
  const Corpus c = make_corpus(U"ababab", 2);
  CHECK(c.vocab == std::vector<char32_t>{U'a', U'b'});
  CHECK(c.text(c.train) == U"abab");
  CHECK(c.text(c.test) == U"ab");
  CHECK(c.train == Range{0, 4});
  CHECK(c.test == Range{4, 6});

  const Corpus u = make_corpus(U"héllo wörld", 3);
  CHECK(u.vocab_size() == 9);
  CHECK(u.vocab[1] == U'é');

  CHECK_THROWS_AS(make_corpus(U"", 0), std::invalid_argument);
  CHECK_THROWS_AS(make_corpus(U"abc", 3), std::invalid_argument);
}

TEST_CASE("utf8 round trip and rejection") {
  const std::u32string text = U"aé€\U0001F600z";
  CHECK(decode_utf8(encode_utf8(text)) == text);
  CHECK_THROWS_AS(decode_utf8("\xff"), std::invalid_argument);
  CHECK_THROWS_AS(decode_utf8("\xc3"), std::invalid_argument);
  CHECK_THROWS_AS(decode_utf8("\xc0\x80"), std::invalid_argument);
  CHECK_THROWS_AS(decode_utf8("\xed\xa0\x80"), std::invalid_argument);
}

TEST_CASE("load_corpus") {
  const auto path = scratch("corpus.txt");
  {
    std::ofstream out(path, std::ios::binary);
    out << encode_utf8(U"abéabéab");
  }
  const Corpus c = load_corpus(path, 3);
  CHECK(c.tokens.size() == 8);
  CHECK(c.vocab_size() == 3);
  CHECK(c.test.size() == 3);
  CHECK_THROWS(load_corpus(scratch("missing.txt"), 1));
  const auto empty = scratch("empty.txt");
  { std::ofstream out(empty); }
  CHECK_THROWS(load_corpus(empty, 0));
}

TEST_CASE("windows") {
  const Corpus c = make_corpus(U"abcdefg", 1);
  const Range all{0, 7};
  const auto ws = windows(c, all, 3);
  REQUIRE(ws.size() == 2);
  CHECK(to_string(c, ws[0].inputs) == "abc");
  CHECK(to_string(c, ws[0].targets) == "bcd");
  CHECK(to_string(c, ws[1].inputs) == "def");
  CHECK(to_string(c, ws[1].targets) == "efg");

  const Corpus big = make_corpus(repeat(U"xyz", 200), 299);
  CHECK(big.train.size() == 301);
  CHECK(windows(big, big.train, 100).size() == 3);
  CHECK(windows(c, Range{0, 3}, 3).empty());
  CHECK_THROWS_AS(windows(c, all, 0), std::invalid_argument);
  CHECK_THROWS_AS(windows(c, Range{0, 9}, 3), std::invalid_argument);
}

TEST_CASE("TrainConfig validation") {
  TrainConfig cfg;
  CHECK(cfg.bptt == 100);
  CHECK_NOTHROW(cfg.validate());
  cfg.lr = 0.0;
  CHECK_NOTHROW(cfg.validate());
  cfg.lr = -0.01;
  CHECK_THROWS_AS(cfg.validate(), std::invalid_argument);
  cfg = TrainConfig{};
  cfg.dropout_p = 1.0;
  CHECK_THROWS_AS(cfg.validate(), std::invalid_argument);
  cfg = TrainConfig{};
  cfg.bptt = 0;
  CHECK_THROWS_AS(cfg.validate(), std::invalid_argument);
  cfg = TrainConfig{};
  cfg.epochs = 0;
  CHECK_THROWS_AS(cfg.validate(), std::invalid_argument);
}

TEST_CASE("evaluate") {
  const Corpus c = make_corpus(repeat(U"the cat sat. ", 40), 200);
  TrainConfig cfg;
  cfg.bptt = 10;
  cfg.mode = TileMode::fp;

  SUBCASE("zero head predicts uniformly") {
    const LstmNetwork net = small_net(c, TileMode::fp, 1);
    CHECK(evaluate(net, c, cfg, TrainerState{}) ==
          doctest::Approx(std::log(static_cast<double>(c.vocab_size()))).epsilon(1e-14));
  }
  SUBCASE("frozen network evaluates identically") {
    const LstmNetwork net = small_net(c, TileMode::analog, 2);
    CHECK(evaluate(net, c, cfg, TrainerState{}) == evaluate(net, c, cfg, TrainerState{}));
    Rng a(5), b(5);
    CHECK(evaluate(net, c, cfg, a) == evaluate(net, c, cfg, b));
  }
}

TEST_CASE("train_epoch with lr = 0 leaves fp weights alone") {
  const Corpus c = make_corpus(repeat(U"hello world ", 30), 60);
  NetworkOptions opts;
  opts.seed = 3;
  opts.zero_head_init = false;
  LstmNetwork net(LstmShape::character_model(1, 8, c.vocab_size()), opts);
  const LstmNetwork before = net;

  TrainConfig cfg;
  cfg.mode = TileMode::fp;
  cfg.bptt = 20;
  cfg.lr = 0.0;
  TrainerState state;
  const EpochSummary s = train_epoch(net, c, cfg, state, nullptr);
  for (std::size_t k = 0; k < net.tile_count(); ++k) {
    CHECK(net.tile(k).weights() == before.tile(k).weights());
  }

  // The same windows evaluated with carried state give the same mean loss.
  double sum = 0.0;
  std::size_t steps = 0;
  HiddenState h = HiddenState::zeros(before.shape());
  LstmNetwork probe = before;
  for (const Window& w : windows(c, c.train, cfg.bptt)) {
    const WindowResult r = probe.window_pass(w.inputs, w.targets, h, WindowOptions{});
    sum += r.loss_sum;
    steps += r.steps;
  }
  CHECK(s.train_loss == doctest::Approx(sum / static_cast<double>(steps)).epsilon(1e-14));
  CHECK(state.epochs_done == 1);
  CHECK(state.windows_seen == s.windows);
}

TEST_CASE("fp training learns a periodic sequence") {
  const Corpus c = make_corpus(repeat(U"abcd", 300), 200);
  NetworkOptions opts;
  opts.seed = 1;
  LstmNetwork net(LstmShape::character_model(1, 16, c.vocab_size()), opts);
  TrainConfig cfg;
  cfg.mode = TileMode::fp;
  cfg.bptt = 20;
  cfg.lr = 0.1;
  TrainerState state;
  double last = std::log(4.0);
  for (int epoch = 0; epoch < 10; ++epoch) last = train_epoch(net, c, cfg, state, nullptr).test_loss;
  CHECK(last < 0.05);
}

TEST_CASE("analog training is bit-reproducible") {
  const Corpus c = make_corpus(repeat(U"to be or not to be, ", 30), 100);
  TrainConfig cfg;
  cfg.bptt = 25;
  cfg.lr = 0.05;
  cfg.dropout_p = 0.1;
  cfg.eval_every_windows = 7;
  auto run = [&] {
    LstmNetwork net = small_net(c, TileMode::analog, 11);
    TrainerState state;
    MemoryMetricsSink sink;
    train_epoch(net, c, cfg, state, &sink);
    train_epoch(net, c, cfg, state, &sink);
    return sink.records;
  };
  const auto a = run();
  const auto b = run();
  CHECK(a.size() >= 4);
  CHECK(a == b);
  for (const auto& r : a) CHECK(r.wall_seconds == 0.0);
}

TEST_CASE("metrics CSV") {
  CHECK(format_double(0.1) == "0.1");
  CHECK(format_double(2.0) == "2");
  CHECK(std::stod(format_double(1.0 / 3.0)) == 1.0 / 3.0);
  CHECK(CsvMetricsSink::format_row(MetricRecord{2, 40, 1.5, 1.25, 0.0}) == "2,40,1.5,1.25,0");

  const auto path = scratch("metrics.csv");
  {
    CsvMetricsSink sink(path);
    sink.record(MetricRecord{1, 10, 2.0, 1.9, 0.0});
  }
  {
    CsvMetricsSink sink(path);  // reopening appends without a second header
    sink.record(MetricRecord{2, 20, 1.8, 1.7, 0.0});
  }
  CHECK(slurp(path) == std::string(CsvMetricsSink::kHeader) + "\n1,10,2,1.9,0\n2,20,1.8,1.7,0\n");
}

TEST_CASE("evaluation stream is independent of training streams") {
  CHECK_FALSE(evaluation_rng(1, 5) == evaluation_rng(1, 6));
  CHECK(evaluation_rng(1, 5) == evaluation_rng(1, 5));
  CHECK_FALSE(evaluation_rng(1, 1) == Rng::derive(1, 1));
}
