#include "inv/nn.hpp"

#include <bit>
#include <cmath>
#include <cstring>
#include <stdexcept>
#include <string>

#include "inv/errors.hpp"

namespace inv {

namespace {

constexpr float kPi = 3.14159265358979323846f;

void apply_activation(MatRX& z, Activation act) {
  switch (act) {
    case Activation::kReLU:
      z = z.cwiseMax(0.0f);
      break;
    case Activation::kSigmoid:
      z = (1.0f / (1.0f + (-z.array()).exp())).matrix();
      break;
    case Activation::kNone:
      break;
  }
}

void write_f32_le(std::vector<std::uint8_t>& out, float v) {
  auto bits = std::bit_cast<std::uint32_t>(v);
  out.push_back(static_cast<std::uint8_t>(bits & 0xff));
  out.push_back(static_cast<std::uint8_t>((bits >> 8) & 0xff));
  out.push_back(static_cast<std::uint8_t>((bits >> 16) & 0xff));
  out.push_back(static_cast<std::uint8_t>((bits >> 24) & 0xff));
}

float read_f32_le(const std::uint8_t* p) {
  std::uint32_t bits = static_cast<std::uint32_t>(p[0]) |
                       (static_cast<std::uint32_t>(p[1]) << 8) |
                       (static_cast<std::uint32_t>(p[2]) << 16) |
                       (static_cast<std::uint32_t>(p[3]) << 24);
  return std::bit_cast<float>(bits);
}

}  // namespace

bool same_shape(const DenseLayer& a, const DenseLayer& b) {
  return a.in_dim() == b.in_dim() && a.out_dim() == b.out_dim() && a.act == b.act;
}

std::int64_t MlpNetwork::param_count() const {
  std::int64_t n = 0;
  for (const auto& l : layers) n += l.param_count();
  return n;
}

void MlpNetwork::validate() const {
  if (layers.empty()) throw std::invalid_argument("MlpNetwork: no layers");
  if (input_dim <= 0) throw std::invalid_argument("MlpNetwork: input_dim must be positive");
  int prev = input_dim;
  for (std::size_t i = 0; i < layers.size(); ++i) {
    const auto& l = layers[i];
    if (l.in_dim() != prev) {
      throw std::invalid_argument("MlpNetwork: layer " + std::to_string(i) +
                                  " input dim " + std::to_string(l.in_dim()) +
                                  " does not match preceding dim " + std::to_string(prev));
    }
    if (l.bias.size() != l.out_dim()) {
      throw std::invalid_argument("MlpNetwork: layer " + std::to_string(i) +
                                  " bias length does not match weight rows");
    }
    prev = l.out_dim();
  }
}

bool same_structure(const MlpNetwork& a, const MlpNetwork& b) {
  if (a.input_dim != b.input_dim || a.layers.size() != b.layers.size()) return false;
  for (std::size_t i = 0; i < a.layers.size(); ++i) {
    if (!same_shape(a.layers[i], b.layers[i])) return false;
  }
  return true;
}

VecX positional_encode(const VecX& p, const PosEncodingSpec& spec) {
  if (p.size() != spec.input_dim) {
    throw std::invalid_argument("positional_encode: coordinate length " +
                                std::to_string(p.size()) + " != spec input_dim " +
                                std::to_string(spec.input_dim));
  }
  VecX out(spec.encoded_dim());
  int at = 0;
  if (spec.include_input) {
    out.head(spec.input_dim) = p;
    at = spec.input_dim;
  }
  float freq = kPi;  // 2^0 * pi
  for (int l = 0; l < spec.num_freqs; ++l) {
    for (int d = 0; d < spec.input_dim; ++d) out[at++] = std::sin(freq * p[d]);
    for (int d = 0; d < spec.input_dim; ++d) out[at++] = std::cos(freq * p[d]);
    freq *= 2.0f;
  }
  return out;
}

MatRX positional_encode(const MatRX& pts, const PosEncodingSpec& spec) {
  if (pts.cols() != spec.input_dim) {
    throw std::invalid_argument("positional_encode: batch column dim " +
                                std::to_string(pts.cols()) + " != spec input_dim " +
                                std::to_string(spec.input_dim));
  }
  MatRX out(pts.rows(), spec.encoded_dim());
  int at = 0;
  if (spec.include_input) {
    out.leftCols(spec.input_dim) = pts;
    at = spec.input_dim;
  }
  float freq = kPi;
  for (int l = 0; l < spec.num_freqs; ++l) {
    out.middleCols(at, spec.input_dim) = (pts.array() * freq).sin();
    at += spec.input_dim;
    out.middleCols(at, spec.input_dim) = (pts.array() * freq).cos();
    at += spec.input_dim;
    freq *= 2.0f;
  }
  return out;
}

MatRX mlp_eval(const MlpNetwork& net, const MatRX& input) {
  if (input.cols() != net.input_dim) {
    throw std::invalid_argument("mlp_eval: input column dim " + std::to_string(input.cols()) +
                                " != network input_dim " + std::to_string(net.input_dim));
  }
  MatRX x = input;
  for (const auto& l : net.layers) {
    MatRX z = x * l.weights.transpose();
    z.rowwise() += l.bias.transpose();
    apply_activation(z, l.act);
    x = std::move(z);
  }
  return x;
}

MatRX mlp_forward(const MlpNetwork& net, const MatRX& input, ForwardCache& cache) {
  if (input.cols() != net.input_dim) {
    throw std::invalid_argument("mlp_forward: input column dim " + std::to_string(input.cols()) +
                                " != network input_dim " + std::to_string(net.input_dim));
  }
  cache.input = input;
  cache.pre.resize(net.layers.size());
  cache.post.resize(net.layers.size());
  const MatRX* x = &cache.input;
  for (std::size_t i = 0; i < net.layers.size(); ++i) {
    const auto& l = net.layers[i];
    cache.pre[i] = (*x) * l.weights.transpose();
    cache.pre[i].rowwise() += l.bias.transpose();
    cache.post[i] = cache.pre[i];
    apply_activation(cache.post[i], l.act);
    x = &cache.post[i];
  }
  return cache.post.back();
}

Gradients mlp_backward(const MlpNetwork& net, const ForwardCache& cache, const MatRX& d_output) {
  const std::size_t n = net.layers.size();
  if (cache.pre.size() != n || cache.post.size() != n) {
    throw std::invalid_argument("mlp_backward: cache does not match network layer count");
  }
  if (d_output.rows() != cache.input.rows() || d_output.cols() != net.output_dim()) {
    throw std::invalid_argument("mlp_backward: d_output shape does not match forward output");
  }
  Gradients g;
  g.weights.resize(n);
  g.bias.resize(n);

  MatRX d = d_output;
  for (std::size_t ii = n; ii-- > 0;) {
    const auto& l = net.layers[ii];
    if (cache.pre[ii].rows() != d.rows() || cache.pre[ii].cols() != l.out_dim()) {
      throw std::invalid_argument("mlp_backward: cache shape mismatch at layer " +
                                  std::to_string(ii));
    }
    MatRX dz;
    switch (l.act) {
      case Activation::kReLU:
        dz = (cache.pre[ii].array() > 0.0f).cast<float>() * d.array();
        break;
      case Activation::kSigmoid: {
        const auto& s = cache.post[ii].array();
        dz = (s * (1.0f - s) * d.array()).matrix();
        break;
      }
      case Activation::kNone:
        dz = d;
        break;
    }
    const MatRX& x = (ii == 0) ? cache.input : cache.post[ii - 1];
    g.weights[ii] = dz.transpose() * x;
    g.bias[ii] = dz.colwise().sum().transpose();
    if (ii > 0) d = dz * l.weights;
  }
  return g;
}

std::pair<double, MatRX> mse_loss(const MatRX& pred, const MatRX& target) {
  if (pred.rows() != target.rows() || pred.cols() != target.cols()) {
    throw std::invalid_argument("mse_loss: shape mismatch");
  }
  const auto count = static_cast<double>(pred.size());
  MatRX diff = pred - target;
  double loss = diff.cast<double>().array().square().sum() / count;
  MatRX d_pred = diff * static_cast<float>(2.0 / count);
  return {loss, std::move(d_pred)};
}

AdamState AdamState::zeros_like(const MlpNetwork& net) {
  AdamState s;
  s.m_w.reserve(net.layers.size());
  s.v_w.reserve(net.layers.size());
  s.m_b.reserve(net.layers.size());
  s.v_b.reserve(net.layers.size());
  for (const auto& l : net.layers) {
    s.m_w.push_back(MatRX::Zero(l.out_dim(), l.in_dim()));
    s.v_w.push_back(MatRX::Zero(l.out_dim(), l.in_dim()));
    s.m_b.push_back(VecX::Zero(l.out_dim()));
    s.v_b.push_back(VecX::Zero(l.out_dim()));
  }
  return s;
}

FreezeMask FreezeMask::train_first(std::size_t layer_count, std::size_t k) {
  std::vector<bool> frozen(layer_count, true);
  for (std::size_t i = 0; i < k && i < layer_count; ++i) frozen[i] = false;
  return FreezeMask(std::move(frozen));
}

bool FreezeMask::all_frozen() const {
  for (bool f : frozen_) {
    if (!f) return false;
  }
  return true;
}

void adam_step(MlpNetwork& net, const Gradients& grads, AdamState& state,
               const AdamParams& params, const FreezeMask& mask) {
  const std::size_t n = net.layers.size();
  if (grads.weights.size() != n || grads.bias.size() != n) {
    throw std::invalid_argument("adam_step: gradient layer count mismatch");
  }
  if (state.m_w.size() != n) throw std::invalid_argument("adam_step: state layer count mismatch");
  if (mask.size() != n) throw std::invalid_argument("adam_step: freeze mask length mismatch");

  state.step += 1;
  const float t = static_cast<float>(state.step);
  const float bc1 = 1.0f - std::pow(params.beta1, t);
  const float bc2 = 1.0f - std::pow(params.beta2, t);

  for (std::size_t i = 0; i < n; ++i) {
    if (mask.frozen(i)) continue;
    auto& l = net.layers[i];
    if (grads.weights[i].rows() != l.weights.rows() || grads.weights[i].cols() != l.weights.cols() ||
        grads.bias[i].size() != l.bias.size()) {
      throw std::invalid_argument("adam_step: gradient shape mismatch at layer " +
                                  std::to_string(i));
    }
    auto update = [&](auto& p, auto& m, auto& v, const auto& g) {
      m = params.beta1 * m + (1.0f - params.beta1) * g;
      v.array() = params.beta2 * v.array() + (1.0f - params.beta2) * g.array().square();
      p.array() -= params.lr * (m.array() / bc1) / ((v.array() / bc2).sqrt() + params.eps);
    };
    update(l.weights, state.m_w[i], state.v_w[i], grads.weights[i]);
    update(l.bias, state.m_b[i], state.v_b[i], grads.bias[i]);
  }
}

MlpNetwork init_network(int input_dim, std::span<const LayerSpec> layers, std::uint64_t seed) {
  if (input_dim <= 0) throw std::invalid_argument("init_network: input_dim must be positive");
  if (layers.empty()) throw std::invalid_argument("init_network: no layers");
  Rng rng(seed);
  MlpNetwork net;
  net.input_dim = input_dim;
  net.layers.reserve(layers.size());
  for (const auto& spec : layers) {
    DenseLayer l;
    l.act = spec.act;
    l.weights.resize(spec.out, spec.in);
    const float a = std::sqrt(6.0f / static_cast<float>(spec.in + spec.out));
    for (int r = 0; r < spec.out; ++r) {
      for (int c = 0; c < spec.in; ++c) l.weights(r, c) = rng.uniform(-a, a);
    }
    l.bias = VecX::Zero(spec.out);
    net.layers.push_back(std::move(l));
  }
  net.validate();
  return net;
}

std::vector<std::uint8_t> serialize_weights(const MlpNetwork& net) {
  std::vector<std::uint8_t> out;
  out.reserve(static_cast<std::size_t>(net.param_count()) * 4);
  for (const auto& l : net.layers) {
    for (int r = 0; r < l.out_dim(); ++r) {
      for (int c = 0; c < l.in_dim(); ++c) write_f32_le(out, l.weights(r, c));
    }
    for (int r = 0; r < l.out_dim(); ++r) write_f32_le(out, l.bias[r]);
  }
  return out;
}

MlpNetwork deserialize_weights(std::span<const std::uint8_t> bytes, int input_dim,
                               std::span<const LayerSpec> layers) {
  std::int64_t params = 0;
  for (const auto& s : layers) params += static_cast<std::int64_t>(s.in) * s.out + s.out;
  if (static_cast<std::int64_t>(bytes.size()) != params * 4) {
    throw CorruptDataError("deserialize_weights: got " + std::to_string(bytes.size()) +
                           " bytes, config expects " + std::to_string(params * 4));
  }
  MlpNetwork net;
  net.input_dim = input_dim;
  const std::uint8_t* p = bytes.data();
  for (const auto& spec : layers) {
    DenseLayer l;
    l.act = spec.act;
    l.weights.resize(spec.out, spec.in);
    for (int r = 0; r < spec.out; ++r) {
      for (int c = 0; c < spec.in; ++c) {
        l.weights(r, c) = read_f32_le(p);
        p += 4;
      }
    }
    l.bias.resize(spec.out);
    for (int r = 0; r < spec.out; ++r) {
      l.bias[r] = read_f32_le(p);
      p += 4;
    }
    net.layers.push_back(std::move(l));
  }
  net.validate();
  return net;
}

}  // namespace inv
