#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <utility>
#include <vector>

#include "rpulstm/analog_tile.hpp"
#include "rpulstm/device_model.hpp"
#include "rpulstm/matrix.hpp"
#include "rpulstm/rng.hpp"

namespace rpulstm {

/// Network geometry. Block 1 maps onto a 4m x (n+m+1) tile, deeper blocks
/// onto 4m x (2m+1) tiles and the softmax head onto a vocab x (m+1) tile.
struct LstmShape {
  std::size_t n = 0;      // input length (one-hot, equal to vocab for character models)
  std::size_t m = 0;      // hidden length
  std::size_t depth = 1;  // stacked blocks
  std::size_t vocab = 0;  // output classes

  static LstmShape character_model(std::size_t depth, std::size_t hidden, std::size_t vocab) {
    return {vocab, hidden, depth, vocab};
  }

  void validate() const;
  /// Tile shapes in storage order: blocks 1..depth, then the head.
  std::vector<std::pair<std::size_t, std::size_t>> tile_shapes() const;

  bool operator==(const LstmShape&) const = default;
};

/// Activations of one block at one time step. Gate slices of the 4m tile
/// output are ordered [f; i; o; g].
struct BlockCache {
  Vector x_tilde;  // [x (post-dropout); h_prev; 1]
  Vector input_mask;
  Vector f, i, o, g;
  Vector c_prev, c, tanh_c;
};

struct StepCache {
  std::vector<BlockCache> blocks;
  Vector head_input;  // [h_top (post-dropout); 1]
  Vector head_mask;
  Vector probs;
  std::size_t target = 0;
};

struct HiddenState {
  std::vector<Vector> h;
  std::vector<Vector> c;

  static HiddenState zeros(const LstmShape& shape);
  bool operator==(const HiddenState&) const = default;
};

/// [x; h_prev; 1].
Vector concat_input(std::span<const double> x, std::span<const double> h_prev);

struct StepForward {
  Vector h;
  Vector c;
  BlockCache cache;
};

/// One LSTM block step: one tile read, then the gate nonlinearities.
StepForward lstm_step_forward(const AnalogTile& tile, std::span<const double> x_tilde,
                              std::span<const double> c_prev, Rng& rng);

struct StepBackward {
  Vector delta;  // [df; di; do; dg], pre-activation gradients
  Vector dx;
  Vector dh_prev;
  Vector dc_prev;
};

/// `input_len` is the length of the x part of x_tilde.
StepBackward lstm_step_backward(const AnalogTile& tile, const BlockCache& cache,
                                std::span<const double> dh, std::span<const double> dc_in,
                                std::size_t input_len, Rng& rng);

/// Inverted dropout mask: 0 with probability p, else 1 / (1 - p).
Vector sample_dropout_mask(std::size_t length, double p, Rng& rng);

struct SoftmaxXent {
  double loss = 0.0;  // nats
  Vector probs;
  Vector delta;  // probs - onehot(target)
};

SoftmaxXent softmax_xent(std::span<const double> logits, std::size_t target);

struct WindowOptions {
  bool train = false;
  double lr = 0.0;
  double dropout_p = 0.0;
};

struct WindowResult {
  double loss_sum = 0.0;
  std::size_t steps = 0;
  double max_forward_scale = 0.0;  // largest max|x_tilde| fed to a block tile (analog mode)
};

struct NetworkOptions {
  TileMode mode = TileMode::fp;
  RpuConfig rpu;
  std::uint64_t seed = 0;
  bool zero_head_init = true;
};

/// Stacked LSTM blocks plus a softmax head, each on its own tile.
class LstmNetwork {
 public:
  LstmNetwork() = default;
  LstmNetwork(const LstmShape& shape, const NetworkOptions& options);
  /// Reassembles a network from stored tiles (checkpoint restore).
  LstmNetwork(const LstmShape& shape, std::vector<AnalogTile> tiles, Rng dropout_rng);

  const LstmShape& shape() const { return shape_; }
  TileMode mode() const { return mode_; }
  std::size_t tile_count() const { return tiles_.size(); }
  const AnalogTile& tile(std::size_t k) const { return tiles_.at(k); }
  AnalogTile& tile(std::size_t k) { return tiles_.at(k); }
  const AnalogTile& head() const { return tiles_.back(); }
  const Rng& dropout_rng() const { return dropout_rng_; }

  /// Runs one window of truncated BPTT. `hidden` is consumed as the initial
  /// state and overwritten with the final state. In training mode the window
  /// ends with the weight updates: one pulse update per (x_tilde, delta) pair
  /// in reverse time order (analog) or one summed delta per tile (fp).
  ///
  /// When `read_rng` is given, evaluation reads draw from it instead of the
  /// tiles' own streams.
  WindowResult window_pass(std::span<const std::size_t> inputs,
                           std::span<const std::size_t> targets, HiddenState& hidden,
                           const WindowOptions& options, Rng* read_rng = nullptr);

  /// Loss gradients dL/dW per tile (storage order) for one window, without
  /// dropout and without updating. fp mode only.
  std::vector<Matrix> gradients(std::span<const std::size_t> inputs,
                                std::span<const std::size_t> targets,
                                const HiddenState& hidden);

  /// Copy whose analog reads carry no output noise.
  LstmNetwork without_read_noise() const;

 private:
  struct Record {
    Vector x_tilde;
    Vector delta;
  };

  std::vector<StepCache> forward(std::span<const std::size_t> inputs,
                                 std::span<const std::size_t> targets, HiddenState& hidden,
                                 double dropout_p, Rng* read_rng, WindowResult& result);
  // records[t][k] holds the pair for tile k at step t.
  std::vector<std::vector<Record>> backward(const std::vector<StepCache>& caches);

  LstmShape shape_;
  TileMode mode_ = TileMode::fp;
  std::vector<AnalogTile> tiles_;
  Rng dropout_rng_;
};

}  // namespace rpulstm
