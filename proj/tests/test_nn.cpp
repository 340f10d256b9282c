#include <cmath>
#include <cstring>
#include <vector>

#include "doctest.h"
#include "inv/errors.hpp"
#include "inv/model.hpp"
#include "inv/nn.hpp"
#include "test_util.hpp"

using namespace inv;

namespace {

MatRX batch_from(const std::vector<std::vector<float>>& rows) {
  MatRX m(static_cast<Eigen::Index>(rows.size()), static_cast<Eigen::Index>(rows[0].size()));
  for (std::size_t r = 0; r < rows.size(); ++r) {
    for (std::size_t c = 0; c < rows[r].size(); ++c) m(r, c) = rows[r][c];
  }
  return m;
}

std::vector<std::vector<double>> to_double(const MatRX& m) {
  std::vector<std::vector<double>> out(m.rows(), std::vector<double>(m.cols()));
  for (Eigen::Index r = 0; r < m.rows(); ++r) {
    for (Eigen::Index c = 0; c < m.cols(); ++c) out[r][c] = m(r, c);
  }
  return out;
}

}  // namespace

TEST_CASE("positional encoding basics") {
  PosEncodingSpec spec{1, 1, true};
  VecX p(1);
  p << 0.0f;
  VecX e = positional_encode(p, spec);
  REQUIRE(e.size() == 3);
  CHECK(e[0] == doctest::Approx(0.0));
  CHECK(e[1] == doctest::Approx(0.0));
  CHECK(e[2] == doctest::Approx(1.0));

  p << 0.5f;
  e = positional_encode(p, spec);
  CHECK(e[0] == doctest::Approx(0.5));
  CHECK(e[1] == doctest::Approx(1.0));
  CHECK(e[2] == doctest::Approx(0.0).epsilon(1e-6));
}

TEST_CASE("positional encoding dimension formula") {
  for (int dim = 1; dim <= 4; ++dim) {
    for (int L = 0; L <= 12; ++L) {
      for (bool inc : {false, true}) {
        PosEncodingSpec spec{dim, L, inc};
        VecX p = VecX::Constant(dim, 0.25f);
        CHECK(positional_encode(p, spec).size() == spec.encoded_dim());
      }
    }
  }
  // the 63-wide first layer of the paper configuration
  CHECK(PosEncodingSpec{3, 10, true}.encoded_dim() == 63);
}

TEST_CASE("positional encoding rejects dimension mismatch") {
  PosEncodingSpec spec{2, 3, true};
  VecX p(3);
  p.setZero();
  CHECK_THROWS_AS(positional_encode(p, spec), std::invalid_argument);
  MatRX batch(4, 3);
  batch.setZero();
  CHECK_THROWS_AS(positional_encode(batch, spec), std::invalid_argument);
}

TEST_CASE("positional encoding batch matches single-vector path") {
  PosEncodingSpec spec{3, 5, true};
  Rng rng(11);
  MatRX batch(7, 3);
  for (Eigen::Index r = 0; r < batch.rows(); ++r) {
    for (int c = 0; c < 3; ++c) batch(r, c) = rng.uniform(-1.0f, 1.0f);
  }
  const MatRX enc = positional_encode(batch, spec);
  for (Eigen::Index r = 0; r < batch.rows(); ++r) {
    const VecX one = positional_encode(VecX(batch.row(r).transpose()), spec);
    for (Eigen::Index c = 0; c < enc.cols(); ++c) {
      CHECK(enc(r, c) == doctest::Approx(one[c]).epsilon(1e-6));
    }
  }
}

TEST_CASE("mlp_forward identity and relu clamp") {
  MlpNetwork net;
  net.input_dim = 2;
  DenseLayer l;
  l.weights = MatRX::Identity(2, 2);
  l.bias = VecX::Zero(2);
  l.act = Activation::kNone;
  net.layers.push_back(l);

  const MatRX x = batch_from({{0.3f, -0.7f}, {1.0f, 2.0f}});
  CHECK(mlp_eval(net, x).isApprox(x));

  MlpNetwork relu_net;
  relu_net.input_dim = 1;
  DenseLayer rl;
  rl.weights = MatRX::Constant(1, 1, 1.0f);
  rl.bias = VecX::Constant(1, -1.0f);
  rl.act = Activation::kReLU;
  relu_net.layers.push_back(rl);
  const MatRX y = mlp_eval(relu_net, batch_from({{0.5f}}));
  CHECK(y(0, 0) == 0.0f);
}

TEST_CASE("mlp_forward rejects dimension mismatch") {
  Rng rng(3);
  int input_dim = 0;
  const MlpNetwork net = testutil::random_small_net(rng, &input_dim);
  MatRX x(2, input_dim + 1);
  x.setZero();
  CHECK_THROWS_AS(mlp_eval(net, x), std::invalid_argument);
}

TEST_CASE("mlp_forward matches an independent matrix-chain evaluation") {
  Rng rng(17);
  std::vector<LayerSpec> specs{{5, 16, Activation::kReLU},
                               {16, 16, Activation::kSigmoid},
                               {16, 3, Activation::kNone}};
  const MlpNetwork net = init_network(5, specs, 99);
  MatRX x(9, 5);
  for (Eigen::Index r = 0; r < x.rows(); ++r) {
    for (int c = 0; c < 5; ++c) x(r, c) = rng.uniform(-1.0f, 1.0f);
  }
  const MatRX out = mlp_eval(net, x);
  const auto ref = testutil::naive_forward(net, to_double(x));
  for (Eigen::Index r = 0; r < out.rows(); ++r) {
    for (Eigen::Index c = 0; c < out.cols(); ++c) {
      const double rel = std::abs(out(r, c) - ref[r][c]) /
                         std::max({std::abs(ref[r][c]), std::abs(double(out(r, c))), 1e-6});
      CHECK(rel <= 1e-6);
    }
  }
}

TEST_CASE("mlp_backward trivial cases") {
  Rng rng(5);
  int input_dim = 0;
  const MlpNetwork net = testutil::random_small_net(rng, &input_dim);
  MatRX x(4, input_dim);
  for (Eigen::Index r = 0; r < x.rows(); ++r) {
    for (int c = 0; c < input_dim; ++c) x(r, c) = rng.uniform(-1.0f, 1.0f);
  }
  ForwardCache cache;
  mlp_forward(net, x, cache);

  MatRX zero = MatRX::Zero(4, net.output_dim());
  const Gradients g = mlp_backward(net, cache, zero);
  for (const auto& gw : g.weights) CHECK(gw.isZero(0.0f));
  for (const auto& gb : g.bias) CHECK(gb.isZero(0.0f));

  // 1-layer scalar linear net: dW = x, db = 1
  MlpNetwork lin;
  lin.input_dim = 1;
  DenseLayer l;
  l.weights = MatRX::Constant(1, 1, 0.7f);
  l.bias = VecX::Constant(1, 0.1f);
  l.act = Activation::kNone;
  lin.layers.push_back(l);
  ForwardCache lc;
  const float xv = 0.37f;
  mlp_forward(lin, batch_from({{xv}}), lc);
  const Gradients lg = mlp_backward(lin, lc, batch_from({{1.0f}}));
  CHECK(lg.weights[0](0, 0) == doctest::Approx(xv));
  CHECK(lg.bias[0][0] == doctest::Approx(1.0));
}

TEST_CASE("mlp_backward matches central finite differences") {
  Rng rng(2024);
  int nets = 0;
  while (nets < 10) {
    int input_dim = 0;
    const MlpNetwork net = testutil::random_small_net(rng, &input_dim);
    MatRX x(6, input_dim);
    MatRX target(6, net.output_dim());
    for (Eigen::Index r = 0; r < x.rows(); ++r) {
      for (int c = 0; c < input_dim; ++c) x(r, c) = rng.uniform(-1.0f, 1.0f);
      for (int c = 0; c < net.output_dim(); ++c) target(r, c) = rng.uniform(0.0f, 1.0f);
    }
    ForwardCache cache;
    const MatRX pred = mlp_forward(net, x, cache);
    auto [loss, d_pred] = mse_loss(pred, target);
    (void)loss;
    const Gradients analytic = mlp_backward(net, cache, d_pred);

    const auto res =
        testutil::finite_difference_check(net, to_double(x), to_double(target), analytic, 1e-3);
    REQUIRE(res.checked > 0);
    CHECK(res.max_rel_err <= 1e-3);
    // Glorot preactivations center at zero, so some ReLU kink skips are
    // expected; most parameters must still be checkable.
    CHECK(res.skipped * 100 <= (res.checked + res.skipped) * 15);
    ++nets;
  }
}

TEST_CASE("mlp_backward rejects mismatched cache") {
  Rng rng(8);
  int input_dim = 0;
  const MlpNetwork net = testutil::random_small_net(rng, &input_dim);
  ForwardCache cache;
  MatRX x = MatRX::Zero(3, input_dim);
  mlp_forward(net, x, cache);
  MatRX bad = MatRX::Zero(2, net.output_dim());
  CHECK_THROWS_AS(mlp_backward(net, cache, bad), std::invalid_argument);
}

TEST_CASE("mse_loss values and gradient") {
  const MatRX a = batch_from({{1.0f, 0.0f}});
  const MatRX b = batch_from({{0.0f, 0.0f}});
  auto [loss, grad] = mse_loss(a, b);
  CHECK(loss == doctest::Approx(0.5));
  CHECK(grad(0, 0) == doctest::Approx(1.0));
  CHECK(grad(0, 1) == doctest::Approx(0.0));

  auto [zero_loss, zero_grad] = mse_loss(a, a);
  CHECK(zero_loss == 0.0);
  CHECK(zero_grad.isZero(0.0f));

  CHECK_THROWS_AS(mse_loss(a, batch_from({{1.0f}})), std::invalid_argument);

  // finite differences on the loss itself
  Rng rng(31);
  MatRX pred(3, 4), target(3, 4);
  for (Eigen::Index r = 0; r < 3; ++r) {
    for (int c = 0; c < 4; ++c) {
      pred(r, c) = rng.uniform(-1.0f, 1.0f);
      target(r, c) = rng.uniform(-1.0f, 1.0f);
    }
  }
  auto [l0, g] = mse_loss(pred, target);
  (void)l0;
  const double h = 1e-3;
  for (Eigen::Index r = 0; r < 3; ++r) {
    for (int c = 0; c < 4; ++c) {
      MatRX pp = pred, pm = pred;
      pp(r, c) += static_cast<float>(h);
      pm(r, c) -= static_cast<float>(h);
      const double fd = (mse_loss(pp, target).first - mse_loss(pm, target).first) / (2.0 * h);
      const double rel = std::abs(fd - g(r, c)) / std::max({std::abs(fd), 1e-4});
      CHECK(rel <= 1e-4);
    }
  }
}

TEST_CASE("adam_step with everything frozen is a no-op") {
  Rng rng(12);
  int input_dim = 0;
  MlpNetwork net = testutil::random_small_net(rng, &input_dim);
  const auto before = serialize_weights(net);
  AdamState state = AdamState::zeros_like(net);
  Gradients g;
  for (const auto& l : net.layers) {
    g.weights.push_back(MatRX::Constant(l.out_dim(), l.in_dim(), 1.0f));
    g.bias.push_back(VecX::Constant(l.out_dim(), 1.0f));
  }
  const FreezeMask mask = FreezeMask::all(net.layers.size());
  for (int i = 0; i < 7; ++i) adam_step(net, g, state, AdamParams{}, mask);
  CHECK(serialize_weights(net) == before);
}

TEST_CASE("adam first step moves a parameter by about -lr") {
  MlpNetwork net;
  net.input_dim = 1;
  DenseLayer l;
  l.weights = MatRX::Constant(1, 1, 0.5f);
  l.bias = VecX::Zero(1);
  l.act = Activation::kNone;
  net.layers.push_back(l);
  AdamState state = AdamState::zeros_like(net);
  Gradients g;
  g.weights.push_back(MatRX::Constant(1, 1, 1.0f));
  g.bias.push_back(VecX::Zero(1));
  AdamParams params;  // lr = 5e-4
  adam_step(net, g, state, params, FreezeMask::none(1));
  const double update = static_cast<double>(net.layers[0].weights(0, 0)) - 0.5;
  CHECK(std::abs(update + params.lr) <= 1e-6);
}

TEST_CASE("adam trajectory matches an independent reference implementation") {
  // quadratic loss of a 4-parameter layer: L = sum c_i (w_i - o_i)^2
  const int n = 4;
  const float c[n] = {0.5f, 2.0f, 1.0f, 3.5f};
  const float o[n] = {0.3f, -0.6f, 1.2f, 0.0f};

  MlpNetwork net;
  net.input_dim = n;
  DenseLayer l;
  l.weights = MatRX::Zero(1, n);
  l.bias = VecX::Zero(1);
  l.act = Activation::kNone;
  net.layers.push_back(l);
  AdamState state = AdamState::zeros_like(net);
  const AdamParams params{1e-2f, 0.9f, 0.999f, 1e-8f};
  const FreezeMask mask({false});

  // independent Adam on the same quadratic
  float ref_w[n] = {0, 0, 0, 0}, ref_m[n] = {0, 0, 0, 0}, ref_v[n] = {0, 0, 0, 0};

  for (int step = 1; step <= 100; ++step) {
    Gradients g;
    g.weights.push_back(MatRX::Zero(1, n));
    for (int i = 0; i < n; ++i) {
      g.weights[0](0, i) = 2.0f * c[i] * (net.layers[0].weights(0, i) - o[i]);
    }
    g.bias.push_back(VecX::Zero(1));
    adam_step(net, g, state, params, mask);

    for (int i = 0; i < n; ++i) {
      const float grad = 2.0f * c[i] * (ref_w[i] - o[i]);
      ref_m[i] = 0.9f * ref_m[i] + 0.1f * grad;
      ref_v[i] = 0.999f * ref_v[i] + 0.001f * grad * grad;
      const float mhat = ref_m[i] / (1.0f - std::pow(0.9f, static_cast<float>(step)));
      const float vhat = ref_v[i] / (1.0f - std::pow(0.999f, static_cast<float>(step)));
      ref_w[i] -= params.lr * mhat / (std::sqrt(vhat) + params.eps);
    }
    for (int i = 0; i < n; ++i) {
      const double a = net.layers[0].weights(0, i);
      const double rel = std::abs(a - ref_w[i]) / std::max({std::abs(a), std::abs(double(ref_w[i])), 1e-8});
      CHECK(rel <= 1e-5);
    }
  }
}

TEST_CASE("freeze safety: masked layers keep parameters and moments bit-identical") {
  Rng rng(77);
  std::vector<LayerSpec> specs{{4, 8, Activation::kReLU},
                               {8, 8, Activation::kReLU},
                               {8, 2, Activation::kNone}};
  MlpNetwork net = init_network(4, specs, 123);
  AdamState state = AdamState::zeros_like(net);
  const FreezeMask mask({false, true, false});

  std::vector<std::uint8_t> frozen_before = serialize_block(std::span(&net.layers[1], 1));
  for (int it = 0; it < 50; ++it) {
    Gradients g;
    for (const auto& l : net.layers) {
      MatRX gw(l.out_dim(), l.in_dim());
      for (int r = 0; r < l.out_dim(); ++r) {
        for (int c2 = 0; c2 < l.in_dim(); ++c2) gw(r, c2) = rng.uniform(-1.0f, 1.0f);
      }
      g.weights.push_back(gw);
      g.bias.push_back(VecX::Constant(l.out_dim(), rng.uniform(-1.0f, 1.0f)));
    }
    adam_step(net, g, state, AdamParams{}, mask);
  }
  CHECK(serialize_block(std::span(&net.layers[1], 1)) == frozen_before);
  CHECK(state.m_w[1].isZero(0.0f));
  CHECK(state.v_w[1].isZero(0.0f));
  // unmasked layers did move
  CHECK_FALSE(state.m_w[0].isZero(0.0f));
}

TEST_CASE("init_network determinism and Glorot statistics") {
  std::vector<LayerSpec> specs{{8, 32, Activation::kReLU}, {32, 16, Activation::kNone}};
  const MlpNetwork a = init_network(8, specs, 42);
  const MlpNetwork b = init_network(8, specs, 42);
  const MlpNetwork c = init_network(8, specs, 43);
  CHECK(serialize_weights(a) == serialize_weights(b));
  CHECK(serialize_weights(a) != serialize_weights(c));

  for (const auto& l : a.layers) {
    CHECK(l.bias.isZero(0.0f));
    const double bound = std::sqrt(6.0 / (l.in_dim() + l.out_dim()));
    double sum = 0.0;
    for (int r = 0; r < l.out_dim(); ++r) {
      for (int cc = 0; cc < l.in_dim(); ++cc) {
        CHECK(std::abs(l.weights(r, cc)) <= bound);
        sum += l.weights(r, cc);
      }
    }
    const double n = static_cast<double>(l.weights.size());
    const double mean = sum / n;
    const double sigma = bound / std::sqrt(3.0);
    CHECK(std::abs(mean) <= 3.0 * sigma / std::sqrt(n));
  }
}

TEST_CASE("weight serialization roundtrip and layout") {
  // 1-layer net 2->3: 4 * (2*3 + 3) = 36 bytes
  std::vector<LayerSpec> specs{{2, 3, Activation::kSigmoid}};
  MlpNetwork net = init_network(2, specs, 7);
  const auto bytes = serialize_weights(net);
  CHECK(bytes.size() == 36);
  CHECK(bytes.size() == static_cast<std::size_t>(4 * net.param_count()));

  const MlpNetwork back = deserialize_weights(bytes, 2, specs);
  CHECK(serialize_weights(back) == bytes);
  CHECK(back.layers[0].act == Activation::kSigmoid);

  // layout: row-major weights then bias, little-endian f32
  float w00;
  std::memcpy(&w00, bytes.data(), 4);
  CHECK(w00 == net.layers[0].weights(0, 0));
  float b0;
  std::memcpy(&b0, bytes.data() + 4 * 6, 4);
  CHECK(b0 == net.layers[0].bias[0]);

  auto corrupt = bytes;
  corrupt.pop_back();
  CHECK_THROWS_AS(deserialize_weights(corrupt, 2, specs), CorruptDataError);
}

TEST_CASE("serialization roundtrip is bit-exact on random nets") {
  Rng rng(555);
  for (int trial = 0; trial < 20; ++trial) {
    int input_dim = 0;
    MlpNetwork net = testutil::random_small_net(rng, &input_dim);
    // non-trivial biases too
    for (auto& l : net.layers) {
      for (int r = 0; r < l.out_dim(); ++r) l.bias[r] = rng.uniform(-2.0f, 2.0f);
    }
    std::vector<LayerSpec> specs;
    for (const auto& l : net.layers) specs.push_back(l.spec());
    const auto bytes = serialize_weights(net);
    CHECK(bytes.size() == static_cast<std::size_t>(4 * net.param_count()));
    const MlpNetwork back = deserialize_weights(bytes, input_dim, specs);
    CHECK(serialize_weights(back) == bytes);
  }
}
