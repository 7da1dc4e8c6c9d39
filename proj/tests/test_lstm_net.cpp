#include <doctest.h>

#include <cmath>
#include <numeric>

#include "rpulstm/lstm_net.hpp"
#include "gradcheck.hpp"
#include "stats.hpp"

using namespace rpulstm;

namespace {

AnalogTile zero_fp_tile(std::size_t m, std::size_t n) {
  return AnalogTile::make_fp(Matrix(4 * m, n + m + 1, 0.0));
}

}  // namespace

TEST_CASE("concat_input") {
  CHECK(concat_input(Vector{0.2}, Vector{0.3}) == Vector{0.2, 0.3, 1.0});
  CHECK_THROWS_AS(concat_input(Vector{}, Vector{}), std::invalid_argument);
  Vector x(87, 0.0);
  x[5] = 1.0;
  const Vector xt = concat_input(x, Vector(512, 0.1));
  CHECK(xt.size() == 600);
  CHECK(xt.back() == 1.0);
}

TEST_CASE("lstm_step_forward") {
  Rng rng(0);
  SUBCASE("zero weights, zero cell") {
    const StepForward out =
        lstm_step_forward(zero_fp_tile(3, 2), concat_input(Vector{1, 0}, Vector(3, 0.2)),
                          Vector(3, 0.0), rng);
    CHECK(out.cache.f == Vector(3, 0.5));
    CHECK(out.cache.i == Vector(3, 0.5));
    CHECK(out.cache.o == Vector(3, 0.5));
    CHECK(out.cache.g == Vector(3, 0.0));
    CHECK(out.c == Vector(3, 0.0));
    CHECK(out.h == Vector(3, 0.0));
  }
  SUBCASE("zero weights, c_prev = 2") {
    const StepForward out =
        lstm_step_forward(zero_fp_tile(1, 1), concat_input(Vector{0}, Vector{0}), Vector{2.0}, rng);
    CHECK(out.c[0] == doctest::Approx(1.0));
    CHECK(out.h[0] == doctest::Approx(0.380797).epsilon(1e-6));
  }
  SUBCASE("single g-row input weight") {
    Matrix w(4, 3, 0.0);
    w(3, 0) = 1.0;
    const StepForward out = lstm_step_forward(AnalogTile::make_fp(w),
                                              concat_input(Vector{1}, Vector{0}), Vector{0}, rng);
    const double g = std::tanh(1.0);
    const double c = 0.5 * g;
    CHECK(out.cache.g[0] == doctest::Approx(g).epsilon(1e-15));
    CHECK(out.c[0] == doctest::Approx(c).epsilon(1e-15));
    CHECK(out.h[0] == doctest::Approx(0.5 * std::tanh(c)).epsilon(1e-15));
    CHECK(g == doctest::Approx(0.761594).epsilon(1e-6));
    CHECK(out.c[0] == doctest::Approx(0.380797).epsilon(1e-6));
    CHECK(out.h[0] == doctest::Approx(0.181700).epsilon(1e-5));
  }
  SUBCASE("wrong tile height") {
    CHECK_THROWS_AS(lstm_step_forward(AnalogTile::make_fp(Matrix(3, 3, 0.0)),
                                      Vector{0, 0, 1}, Vector{0}, rng),
                    std::invalid_argument);
  }
}

TEST_CASE("lstm_step_backward") {
  Rng rng(0);
  SUBCASE("scalar chain") {
    Matrix w(4, 3, 0.0);
    w(3, 0) = 1.0;
    const AnalogTile tile = AnalogTile::make_fp(w);
    const StepForward fwd = lstm_step_forward(tile, concat_input(Vector{1}, Vector{0}), Vector{0}, rng);
    const StepBackward back = lstm_step_backward(tile, fwd.cache, Vector{1.0}, Vector{0.0}, 1, rng);

    const double g = std::tanh(1.0);
    const double c = 0.5 * g;
    const double tc = std::tanh(c);
    const double dc = 0.5 * (1 - tc * tc);
    const double dg = dc * 0.5 * (1 - g * g);
    CHECK(dc == doctest::Approx(0.433970).epsilon(1e-6));
    CHECK(dg == doctest::Approx(0.091128).epsilon(1e-5));
    REQUIRE(back.delta.size() == 4);
    CHECK(back.delta[0] == 0.0);  // c_prev = 0
    CHECK(back.delta[1] == doctest::Approx(dc * g * 0.25).epsilon(1e-14));
    CHECK(back.delta[2] == doctest::Approx(tc * 0.25).epsilon(1e-14));
    CHECK(back.delta[3] == doctest::Approx(dg).epsilon(1e-14));
    CHECK(back.dc_prev[0] == doctest::Approx(dc * 0.5).epsilon(1e-14));
    CHECK(back.dx[0] == doctest::Approx(dg).epsilon(1e-14));  // only the g-row input weight
    CHECK(back.dh_prev[0] == 0.0);
  }
  SUBCASE("zero upstream gradient") {
    Rng gen(3);
    Matrix w(8, 5);
    for (double& v : w.data()) v = gen.uniform() - 0.5;
    const AnalogTile tile = AnalogTile::make_fp(w);
    const StepForward fwd =
        lstm_step_forward(tile, concat_input(Vector{1, 0}, Vector{0.3, -0.1}), Vector{0.4, 0.2}, rng);
    const StepBackward back =
        lstm_step_backward(tile, fwd.cache, Vector{0, 0}, Vector{0, 0}, 2, rng);
    for (double v : back.delta) CHECK(v == 0.0);
    for (double v : back.dx) CHECK(v == 0.0);
    for (double v : back.dh_prev) CHECK(v == 0.0);
    for (double v : back.dc_prev) CHECK(v == 0.0);
  }
  SUBCASE("missing cache") {
    CHECK_THROWS_AS(lstm_step_backward(zero_fp_tile(1, 1), BlockCache{}, Vector{1}, Vector{0}, 1, rng),
                    std::invalid_argument);
  }
}

TEST_CASE("gate ranges hold on random networks") {
  Rng gen(21);
  Rng rng(0);
  for (int instance = 0; instance < 200; ++instance) {
    Matrix w(4 * 6, 4 + 6 + 1);
    for (double& v : w.data()) v = 2.0 * (gen.uniform() - 0.5);
    const AnalogTile tile = AnalogTile::make_fp(w);
    Vector x(4), h(6), c(6);
    for (double& v : x) v = 4.0 * (gen.uniform() - 0.5);
    for (double& v : h) v = 2.0 * (gen.uniform() - 0.5);
    for (double& v : c) v = 10.0 * (gen.uniform() - 0.5);
    const StepForward out = lstm_step_forward(tile, concat_input(x, h), c, rng);
    for (std::size_t k = 0; k < 6; ++k) {
      CHECK((out.cache.f[k] > 0.0 && out.cache.f[k] < 1.0));
      CHECK((out.cache.i[k] > 0.0 && out.cache.i[k] < 1.0));
      CHECK((out.cache.o[k] > 0.0 && out.cache.o[k] < 1.0));
      CHECK(std::abs(out.cache.g[k]) < 1.0);
      CHECK(std::abs(out.cache.tanh_c[k]) < 1.0);
      CHECK(std::abs(out.h[k]) < 1.0);
    }
  }
}

TEST_CASE("dropout masks") {
  Rng rng(5);
  CHECK(sample_dropout_mask(17, 0.0, rng) == Vector(17, 1.0));
  const Vector big = sample_dropout_mask(1000000, 0.4, rng);
  CHECK(std::abs(testing::mean(big) - 1.0) < 0.005);
  const Vector small = sample_dropout_mask(5, 0.4, rng);
  for (double v : small) CHECK((v == 0.0 || v == 1.0 / 0.6));
  CHECK_THROWS_AS(sample_dropout_mask(3, 1.0, rng), std::invalid_argument);
  CHECK_THROWS_AS(sample_dropout_mask(3, -0.1, rng), std::invalid_argument);
}

TEST_CASE("softmax_xent") {
  const SoftmaxXent flat = softmax_xent(Vector(87, 0.3), 11);
  CHECK(flat.loss == doctest::Approx(std::log(87.0)).epsilon(1e-14));
  CHECK(flat.loss == doctest::Approx(4.46591).epsilon(1e-6));

  Vector sharp(5, 0.0);
  sharp[2] = 50.0;
  CHECK(softmax_xent(sharp, 2).loss < 1e-20);

  Rng gen(8);
  for (int instance = 0; instance < 100; ++instance) {
    Vector logits(1 + static_cast<std::size_t>(gen.uniform() * 50));
    for (double& v : logits) v = 40.0 * (gen.uniform() - 0.5);
    const auto target = static_cast<std::size_t>(gen.uniform() * static_cast<double>(logits.size()));
    const SoftmaxXent s = softmax_xent(logits, target);
    CHECK(std::abs(std::accumulate(s.probs.begin(), s.probs.end(), 0.0) - 1.0) < 1e-12);
    CHECK(std::abs(std::accumulate(s.delta.begin(), s.delta.end(), 0.0)) < 1e-12);
    CHECK(s.loss >= 0.0);
  }
  CHECK_THROWS_AS(softmax_xent(Vector{1, 2}, 2), std::invalid_argument);
}

TEST_CASE("tile shapes follow the geometry") {
  for (std::size_t depth : {1, 2, 3}) {
    for (std::size_t m : {1, 4, 9}) {
      const LstmShape shape{5, m, depth, 7};
      const auto shapes = shape.tile_shapes();
      REQUIRE(shapes.size() == depth + 1);
      CHECK(shapes[0] == std::pair<std::size_t, std::size_t>{4 * m, 5 + m + 1});
      for (std::size_t l = 1; l < depth; ++l) {
        CHECK(shapes[l] == std::pair<std::size_t, std::size_t>{4 * m, 2 * m + 1});
      }
      CHECK(shapes.back() == std::pair<std::size_t, std::size_t>{7, m + 1});
      const LstmNetwork net(shape, NetworkOptions{});
      for (std::size_t k = 0; k < shapes.size(); ++k) {
        CHECK(net.tile(k).rows() == shapes[k].first);
        CHECK(net.tile(k).cols() == shapes[k].second);
      }
    }
  }
  const auto wp = LstmShape::character_model(2, 512, 87).tile_shapes();
  CHECK(wp[0] == std::pair<std::size_t, std::size_t>{2048, 600});
  CHECK(wp[1] == std::pair<std::size_t, std::size_t>{2048, 1025});
  CHECK(wp[2] == std::pair<std::size_t, std::size_t>{87, 513});
  CHECK_THROWS_AS((LstmShape{0, 4, 1, 3}.validate()), std::invalid_argument);
}

TEST_CASE("initial weights") {
  NetworkOptions opts;
  opts.zero_head_init = false;
  const LstmNetwork net(LstmShape::character_model(1, 16, 10), opts);
  const double bound = 1.0 / std::sqrt(27.0);
  for (double v : net.tile(0).weights().data()) CHECK(std::abs(v) <= bound);
  for (double v : net.head().weights().data()) CHECK(std::abs(v) <= 1.0 / std::sqrt(17.0));

  const LstmNetwork zero_head(LstmShape::character_model(1, 16, 10), NetworkOptions{});
  for (double v : zero_head.head().weights().data()) CHECK(v == 0.0);
}

TEST_CASE("finite-difference gradient check") {
  for (std::uint64_t seed : {1, 2, 3}) {
    CHECK(testing::worst_gradient_error(LstmShape::character_model(1, 8, 5), seed, 6) < 1e-5);
    CHECK(testing::worst_gradient_error(LstmShape::character_model(2, 8, 5), seed, 6) < 1e-5);
  }
  CHECK(testing::worst_gradient_error(LstmShape::character_model(1, 4, 3), 17, 3) < 1e-5);
}

TEST_CASE("fp training step follows the negative gradient") {
  NetworkOptions opts;
  opts.seed = 4;
  opts.zero_head_init = false;
  LstmNetwork net(LstmShape::character_model(1, 6, 4), opts);
  const std::vector<std::size_t> in{0, 1, 2, 3, 0};
  const std::vector<std::size_t> tgt{1, 2, 3, 0, 1};
  const auto grads = net.gradients(in, tgt, HiddenState::zeros(net.shape()));
  std::vector<Matrix> before;
  for (std::size_t k = 0; k < net.tile_count(); ++k) before.push_back(net.tile(k).weights());
  HiddenState h = HiddenState::zeros(net.shape());
  net.window_pass(in, tgt, h, WindowOptions{true, 0.1, 0.0});
  for (std::size_t k = 0; k < net.tile_count(); ++k) {
    for (std::size_t idx = 0; idx < before[k].size(); ++idx) {
      CHECK(net.tile(k).weights().data()[idx] ==
            doctest::Approx(before[k].data()[idx] - 0.1 * grads[k].data()[idx]).epsilon(1e-12));
    }
  }
}

TEST_CASE("window_pass") {
  const std::vector<std::size_t> in{0, 1, 2, 3, 4, 0, 1};
  const std::vector<std::size_t> tgt{1, 2, 3, 4, 0, 1, 2};

  SUBCASE("evaluation is read-only") {
    NetworkOptions opts;
    opts.mode = TileMode::analog;
    opts.seed = 9;
    LstmNetwork net(LstmShape::character_model(2, 8, 5), opts);
    const LstmNetwork before = net;
    HiddenState h = HiddenState::zeros(net.shape());
    Rng reads(1);
    net.window_pass(in, tgt, h, WindowOptions{}, &reads);
    for (std::size_t k = 0; k < net.tile_count(); ++k) {
      CHECK(net.tile(k).weights() == before.tile(k).weights());
      CHECK(net.tile(k).rng() == before.tile(k).rng());
    }
    CHECK(net.dropout_rng() == before.dropout_rng());
  }

  SUBCASE("train with lr = 0 reports the evaluation loss in fp mode") {
    NetworkOptions opts;
    opts.seed = 2;
    opts.zero_head_init = false;
    LstmNetwork net(LstmShape::character_model(1, 8, 5), opts);
    HiddenState h1 = HiddenState::zeros(net.shape());
    HiddenState h2 = h1;
    const double eval = net.window_pass(in, tgt, h1, WindowOptions{}).loss_sum;
    const Matrix w = net.tile(0).weights();
    const double train = net.window_pass(in, tgt, h2, WindowOptions{true, 0.0, 0.0}).loss_sum;
    CHECK(eval == train);
    CHECK(h1 == h2);
    CHECK(net.tile(0).weights() == w);
  }

  SUBCASE("dropout pushes block inputs past unity") {
    NetworkOptions opts;
    opts.mode = TileMode::analog;
    opts.seed = 5;
    LstmNetwork net(LstmShape::character_model(1, 8, 5), opts);
    HiddenState h = HiddenState::zeros(net.shape());
    const WindowResult r = net.window_pass(in, tgt, h, WindowOptions{true, 0.01, 0.4});
    CHECK(r.max_forward_scale > 1.0);

    LstmNetwork plain(LstmShape::character_model(1, 8, 5), opts);
    HiddenState h0 = HiddenState::zeros(plain.shape());
    CHECK(plain.window_pass(in, tgt, h0, WindowOptions{true, 0.01, 0.0}).max_forward_scale ==
          1.0);
  }

  SUBCASE("analog training keeps weights in bounds and is deterministic") {
    NetworkOptions opts;
    opts.mode = TileMode::analog;
    opts.seed = 6;
    LstmNetwork a(LstmShape::character_model(1, 8, 5), opts);
    LstmNetwork b(LstmShape::character_model(1, 8, 5), opts);
    HiddenState ha = HiddenState::zeros(a.shape());
    HiddenState hb = ha;
    for (int rep = 0; rep < 5; ++rep) {
      const double la = a.window_pass(in, tgt, ha, WindowOptions{true, 0.5, 0.2}).loss_sum;
      const double lb = b.window_pass(in, tgt, hb, WindowOptions{true, 0.5, 0.2}).loss_sum;
      CHECK(la == lb);
    }
    for (std::size_t k = 0; k < a.tile_count(); ++k) {
      CHECK(a.tile(k).weights() == b.tile(k).weights());
      CHECK(a.tile(k).weights_within_bounds());
    }
  }

  SUBCASE("zero head gives the uniform loss") {
    LstmNetwork net(LstmShape::character_model(1, 8, 5), NetworkOptions{});
    HiddenState h = HiddenState::zeros(net.shape());
    const WindowResult r = net.window_pass(in, tgt, h, WindowOptions{});
    CHECK(r.steps == in.size());
    CHECK(r.loss_sum == doctest::Approx(7 * std::log(5.0)).epsilon(1e-14));
  }

  SUBCASE("errors") {
    LstmNetwork net(LstmShape::character_model(1, 8, 5), NetworkOptions{});
    HiddenState h = HiddenState::zeros(net.shape());
    CHECK_THROWS_AS(net.window_pass(in, std::vector<std::size_t>{1}, h, WindowOptions{}),
                    std::invalid_argument);
    CHECK_THROWS_AS(net.window_pass(in, tgt, h, WindowOptions{true, -1.0, 0.0}),
                    std::invalid_argument);
    HiddenState wrong = HiddenState::zeros(LstmShape::character_model(2, 8, 5));
    CHECK_THROWS_AS(net.window_pass(in, tgt, wrong, WindowOptions{}), std::invalid_argument);
  }
}
