#include "rpulstm/lstm_net.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <stdexcept>
#include <string>

namespace rpulstm {

namespace {

double sigmoid(double x) { return 1.0 / (1.0 + std::exp(-x)); }

void require_finite(std::span<const double> v, const char* what) {
  for (double x : v) {
    if (!std::isfinite(x)) throw std::runtime_error(std::string(what) + ": non-finite value");
  }
}

Vector one_hot(std::size_t length, std::size_t index) {
  Vector v(length, 0.0);
  v.at(index) = 1.0;
  return v;
}

void apply_mask(Vector& v, const Vector& mask) {
  if (mask.empty()) return;
  for (std::size_t k = 0; k < v.size(); ++k) v[k] *= mask[k];
}

Vector negated(const Vector& v) {
  Vector out(v.size());
  for (std::size_t k = 0; k < v.size(); ++k) out[k] = -v[k];
  return out;
}

// acc += scale * d x^T
void add_outer(Matrix& acc, const Vector& d, const Vector& x, double scale) {
  for (std::size_t r = 0; r < d.size(); ++r) {
    const double dr = scale * d[r];
    if (dr == 0.0) continue;
    auto row = acc.row(r);
    for (std::size_t c = 0; c < x.size(); ++c) row[c] += dr * x[c];
  }
}

}  // namespace

void LstmShape::validate() const {
  if (n == 0 || m == 0 || depth == 0 || vocab == 0) {
    throw std::invalid_argument("LstmShape: n, m, depth and vocab must all be >= 1");
  }
}

std::vector<std::pair<std::size_t, std::size_t>> LstmShape::tile_shapes() const {
  validate();
  std::vector<std::pair<std::size_t, std::size_t>> shapes;
  shapes.emplace_back(4 * m, n + m + 1);
  for (std::size_t l = 1; l < depth; ++l) shapes.emplace_back(4 * m, m + m + 1);
  shapes.emplace_back(vocab, m + 1);
  return shapes;
}

HiddenState HiddenState::zeros(const LstmShape& shape) {
  HiddenState s;
  s.h.assign(shape.depth, Vector(shape.m, 0.0));
  s.c.assign(shape.depth, Vector(shape.m, 0.0));
  return s;
}

Vector concat_input(std::span<const double> x, std::span<const double> h_prev) {
  if (x.empty() && h_prev.empty()) {
    throw std::invalid_argument("concat_input: input and hidden vectors are both empty");
  }
  Vector out;
  out.reserve(x.size() + h_prev.size() + 1);
  out.insert(out.end(), x.begin(), x.end());
  out.insert(out.end(), h_prev.begin(), h_prev.end());
  out.push_back(1.0);
  return out;
}

StepForward lstm_step_forward(const AnalogTile& tile, std::span<const double> x_tilde,
                              std::span<const double> c_prev, Rng& rng) {
  const std::size_t m = c_prev.size();
  if (tile.rows() != 4 * m) {
    throw std::invalid_argument("lstm_step_forward: tile rows must be 4 * hidden length");
  }
  const Vector y = tile.forward(x_tilde, rng);

  StepForward out;
  BlockCache& cache = out.cache;
  cache.x_tilde.assign(x_tilde.begin(), x_tilde.end());
  cache.c_prev.assign(c_prev.begin(), c_prev.end());
  cache.f.resize(m);
  cache.i.resize(m);
  cache.o.resize(m);
  cache.g.resize(m);
  cache.c.resize(m);
  cache.tanh_c.resize(m);
  out.h.resize(m);
  for (std::size_t k = 0; k < m; ++k) {
    cache.f[k] = sigmoid(y[k]);
    cache.i[k] = sigmoid(y[m + k]);
    cache.o[k] = sigmoid(y[2 * m + k]);
    cache.g[k] = std::tanh(y[3 * m + k]);
    cache.c[k] = cache.f[k] * c_prev[k] + cache.i[k] * cache.g[k];
    cache.tanh_c[k] = std::tanh(cache.c[k]);
    out.h[k] = cache.o[k] * cache.tanh_c[k];
  }
  require_finite(cache.c, "lstm_step_forward");
  out.c = cache.c;
  return out;
}

StepBackward lstm_step_backward(const AnalogTile& tile, const BlockCache& cache,
                                std::span<const double> dh, std::span<const double> dc_in,
                                std::size_t input_len, Rng& rng) {
  const std::size_t m = cache.c.size();
  if (m == 0 || cache.x_tilde.empty()) {
    throw std::invalid_argument("lstm_step_backward: missing forward cache");
  }
  if (dh.size() != m || dc_in.size() != m || cache.x_tilde.size() != input_len + m + 1) {
    throw std::invalid_argument("lstm_step_backward: length mismatch");
  }

  StepBackward out;
  out.delta.resize(4 * m);
  out.dc_prev.resize(m);
  for (std::size_t k = 0; k < m; ++k) {
    const double f = cache.f[k];
    const double i = cache.i[k];
    const double o = cache.o[k];
    const double g = cache.g[k];
    const double tc = cache.tanh_c[k];
    const double d_o = dh[k] * tc * o * (1.0 - o);
    const double dc = dc_in[k] + dh[k] * o * (1.0 - tc * tc);
    out.delta[k] = dc * cache.c_prev[k] * f * (1.0 - f);
    out.delta[m + k] = dc * g * i * (1.0 - i);
    out.delta[2 * m + k] = d_o;
    out.delta[3 * m + k] = dc * i * (1.0 - g * g);
    out.dc_prev[k] = dc * f;
  }

  const Vector z = tile.backward(out.delta, rng);
  out.dx.assign(z.begin(), z.begin() + static_cast<std::ptrdiff_t>(input_len));
  out.dh_prev.assign(z.begin() + static_cast<std::ptrdiff_t>(input_len),
                     z.begin() + static_cast<std::ptrdiff_t>(input_len + m));
  return out;
}

Vector sample_dropout_mask(std::size_t length, double p, Rng& rng) {
  if (!(p >= 0.0 && p < 1.0)) {
    throw std::invalid_argument("sample_dropout_mask: p must be in [0, 1)");
  }
  Vector mask(length, 1.0);
  if (p == 0.0) return mask;
  const double keep_scale = 1.0 / (1.0 - p);
  for (double& v : mask) v = rng.uniform() < p ? 0.0 : keep_scale;
  return mask;
}

SoftmaxXent softmax_xent(std::span<const double> logits, std::size_t target) {
  if (target >= logits.size()) throw std::invalid_argument("softmax_xent: target out of range");
  require_finite(logits, "softmax_xent");
  const double top = *std::max_element(logits.begin(), logits.end());
  SoftmaxXent out;
  out.probs.resize(logits.size());
  double sum = 0.0;
  for (std::size_t k = 0; k < logits.size(); ++k) {
    out.probs[k] = std::exp(logits[k] - top);
    sum += out.probs[k];
  }
  for (double& p : out.probs) p /= sum;
  // log-sum-exp form keeps the loss accurate when the target dominates.
  out.loss = std::log(sum) - (logits[target] - top);
  out.delta = out.probs;
  out.delta[target] -= 1.0;
  return out;
}

LstmNetwork::LstmNetwork(const LstmShape& shape, const NetworkOptions& options)
    : shape_(shape), mode_(options.mode), dropout_rng_(Rng::derive(options.seed, 1)) {
  const auto shapes = shape_.tile_shapes();
  if (mode_ == TileMode::analog) options.rpu.validate();
  Rng init_rng = Rng::derive(options.seed, 2);
  for (std::size_t k = 0; k < shapes.size(); ++k) {
    const auto [rows, cols] = shapes[k];
    const bool is_head = k + 1 == shapes.size();
    Matrix w(rows, cols, 0.0);
    if (!(is_head && options.zero_head_init)) {
      const double limit = 1.0 / std::sqrt(static_cast<double>(cols));
      for (double& v : w.data()) v = limit * (2.0 * init_rng.uniform() - 1.0);
    }
    if (mode_ == TileMode::analog) {
      DeviceArray devices = sample_device_array(rows, cols, options.rpu,
                                                Rng::derive(options.seed, 100 + k).next_u64());
      tiles_.push_back(AnalogTile::make_analog(std::move(w), std::move(devices), options.rpu,
                                               Rng::derive(options.seed, 200 + k)));
    } else {
      tiles_.push_back(AnalogTile::make_fp(std::move(w)));
    }
  }
}

LstmNetwork::LstmNetwork(const LstmShape& shape, std::vector<AnalogTile> tiles, Rng dropout_rng)
    : shape_(shape), tiles_(std::move(tiles)), dropout_rng_(std::move(dropout_rng)) {
  const auto shapes = shape_.tile_shapes();
  if (tiles_.size() != shapes.size()) {
    throw std::invalid_argument("LstmNetwork: tile count does not match shape");
  }
  mode_ = tiles_.front().mode();
  for (std::size_t k = 0; k < shapes.size(); ++k) {
    if (tiles_[k].rows() != shapes[k].first || tiles_[k].cols() != shapes[k].second) {
      throw std::invalid_argument("LstmNetwork: tile " + std::to_string(k) +
                                  " shape does not match network shape");
    }
    if (tiles_[k].mode() != mode_) throw std::invalid_argument("LstmNetwork: mixed tile modes");
  }
}

std::vector<StepCache> LstmNetwork::forward(std::span<const std::size_t> inputs,
                                            std::span<const std::size_t> targets,
                                            HiddenState& hidden, double dropout_p,
                                            Rng* read_rng, WindowResult& result) {
  if (inputs.size() != targets.size()) {
    throw std::invalid_argument("window_pass: inputs and targets differ in length");
  }
  if (hidden.h.size() != shape_.depth || hidden.c.size() != shape_.depth) {
    throw std::invalid_argument("window_pass: hidden state depth mismatch");
  }
  const bool dropout = dropout_p > 0.0;
  std::vector<StepCache> caches(inputs.size());
  for (std::size_t t = 0; t < inputs.size(); ++t) {
    StepCache& step = caches[t];
    step.blocks.resize(shape_.depth);
    Vector x = one_hot(shape_.n, inputs[t]);
    for (std::size_t l = 0; l < shape_.depth; ++l) {
      Vector mask = dropout ? sample_dropout_mask(x.size(), dropout_p, dropout_rng_) : Vector{};
      apply_mask(x, mask);
      const Vector x_tilde = concat_input(x, hidden.h[l]);
      if (mode_ == TileMode::analog) {
        const double scale = *std::max_element(x_tilde.begin(), x_tilde.end(),
                                               [](double a, double b) {
                                                 return std::abs(a) < std::abs(b);
                                               });
        result.max_forward_scale = std::max(result.max_forward_scale, std::abs(scale));
      }
      Rng& rng = read_rng ? *read_rng : tiles_[l].rng();
      StepForward fwd = lstm_step_forward(tiles_[l], x_tilde, hidden.c[l], rng);
      fwd.cache.input_mask = std::move(mask);
      hidden.h[l] = fwd.h;
      hidden.c[l] = std::move(fwd.c);
      step.blocks[l] = std::move(fwd.cache);
      x = std::move(fwd.h);
    }
    step.head_mask = dropout ? sample_dropout_mask(x.size(), dropout_p, dropout_rng_) : Vector{};
    apply_mask(x, step.head_mask);
    step.head_input = concat_input(x, {});
    Rng& rng = read_rng ? *read_rng : tiles_.back().rng();
    const Vector logits = tiles_.back().forward(step.head_input, rng);
    SoftmaxXent xent = softmax_xent(logits, targets[t]);
    result.loss_sum += xent.loss;
    step.probs = std::move(xent.probs);
    step.target = targets[t];
  }
  result.steps = inputs.size();
  if (!std::isfinite(result.loss_sum)) throw std::runtime_error("window_pass: non-finite loss");
  return caches;
}

std::vector<std::vector<LstmNetwork::Record>> LstmNetwork::backward(
    const std::vector<StepCache>& caches) {
  const std::size_t m = shape_.m;
  const std::size_t depth = shape_.depth;
  const std::size_t head = tiles_.size() - 1;
  std::vector<std::vector<Record>> records(caches.size(), std::vector<Record>(tiles_.size()));
  std::vector<Vector> dh_next(depth, Vector(m, 0.0));
  std::vector<Vector> dc_next(depth, Vector(m, 0.0));

  for (std::size_t t = caches.size(); t-- > 0;) {
    const StepCache& step = caches[t];
    Vector delta_out = step.probs;
    delta_out[step.target] -= 1.0;
    const Vector z = tiles_[head].backward(delta_out, tiles_[head].rng());
    Vector dh_above(z.begin(), z.begin() + static_cast<std::ptrdiff_t>(m));
    apply_mask(dh_above, step.head_mask);
    records[t][head] = {step.head_input, std::move(delta_out)};

    for (std::size_t l = depth; l-- > 0;) {
      const BlockCache& cache = step.blocks[l];
      Vector dh = std::move(dh_above);
      for (std::size_t k = 0; k < m; ++k) dh[k] += dh_next[l][k];
      const std::size_t input_len = l == 0 ? shape_.n : m;
      StepBackward back =
          lstm_step_backward(tiles_[l], cache, dh, dc_next[l], input_len, tiles_[l].rng());
      dh_next[l] = std::move(back.dh_prev);
      dc_next[l] = std::move(back.dc_prev);
      dh_above = std::move(back.dx);
      apply_mask(dh_above, cache.input_mask);
      records[t][l] = {cache.x_tilde, std::move(back.delta)};
    }
  }
  return records;
}

WindowResult LstmNetwork::window_pass(std::span<const std::size_t> inputs,
                                      std::span<const std::size_t> targets, HiddenState& hidden,
                                      const WindowOptions& options, Rng* read_rng) {
  if (options.train && !(options.lr >= 0.0)) {
    throw std::invalid_argument("window_pass: learning rate must be >= 0");
  }
  WindowResult result;
  const double dropout_p = options.train ? options.dropout_p : 0.0;
  const auto caches =
      forward(inputs, targets, hidden, dropout_p, options.train ? nullptr : read_rng, result);
  if (!options.train) return result;

  const auto records = backward(caches);
  if (options.lr == 0.0) return result;

  if (mode_ == TileMode::analog) {
    for (std::size_t t = records.size(); t-- > 0;) {
      for (std::size_t k = 0; k < tiles_.size(); ++k) {
        const Record& rec = records[t][k];
        tiles_[k].stochastic_update(rec.x_tilde, negated(rec.delta), options.lr);
      }
    }
  } else {
    for (std::size_t k = 0; k < tiles_.size(); ++k) {
      Matrix delta(tiles_[k].rows(), tiles_[k].cols(), 0.0);
      for (const auto& step : records) add_outer(delta, step[k].delta, step[k].x_tilde, -1.0);
      tiles_[k].fp_apply_delta(delta, options.lr);
    }
  }
  return result;
}

std::vector<Matrix> LstmNetwork::gradients(std::span<const std::size_t> inputs,
                                           std::span<const std::size_t> targets,
                                           const HiddenState& hidden) {
  if (mode_ != TileMode::fp) throw std::logic_error("gradients: fp mode only");
  HiddenState state = hidden;
  WindowResult result;
  const auto caches = forward(inputs, targets, state, 0.0, nullptr, result);
  const auto records = backward(caches);
  std::vector<Matrix> grads;
  for (std::size_t k = 0; k < tiles_.size(); ++k) {
    Matrix g(tiles_[k].rows(), tiles_[k].cols(), 0.0);
    for (const auto& step : records) add_outer(g, step[k].delta, step[k].x_tilde, 1.0);
    grads.push_back(std::move(g));
  }
  return grads;
}

LstmNetwork LstmNetwork::without_read_noise() const {
  if (mode_ != TileMode::analog) return *this;
  std::vector<AnalogTile> tiles;
  for (const AnalogTile& tile : tiles_) {
    RpuConfig cfg = tile.config();
    cfg.noise_sigma = 0.0;
    tiles.push_back(AnalogTile::make_analog(tile.weights(), tile.devices(), cfg, tile.rng()));
  }
  return LstmNetwork(shape_, std::move(tiles), dropout_rng_);
}

}  // namespace rpulstm
