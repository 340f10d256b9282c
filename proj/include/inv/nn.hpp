#pragma once

#include <cstdint>
#include <span>
#include <utility>
#include <vector>

#include "inv/linalg.hpp"

namespace inv {

enum class Activation : std::uint8_t { kReLU = 0, kSigmoid = 1, kNone = 2 };

struct LayerSpec {
  int in = 0;
  int out = 0;
  Activation act = Activation::kReLU;
};

// One dense layer. weights is [out x in], bias is [out].
struct DenseLayer {
  MatRX weights;
  VecX bias;
  Activation act = Activation::kNone;

  int in_dim() const { return static_cast<int>(weights.cols()); }
  int out_dim() const { return static_cast<int>(weights.rows()); }
  std::int64_t param_count() const {
    return static_cast<std::int64_t>(weights.size()) + bias.size();
  }
  LayerSpec spec() const { return {in_dim(), out_dim(), act}; }
};

bool same_shape(const DenseLayer& a, const DenseLayer& b);

// A plain affine+activation chain. No skip connections.
struct MlpNetwork {
  int input_dim = 0;
  std::vector<DenseLayer> layers;

  int output_dim() const { return layers.empty() ? input_dim : layers.back().out_dim(); }
  std::int64_t param_count() const;
  // Checks layer_i.out == layer_{i+1}.in and layer_0.in == input_dim.
  void validate() const;
};

bool same_structure(const MlpNetwork& a, const MlpNetwork& b);

// Sinusoidal positional encoding at geometrically increasing frequencies.
struct PosEncodingSpec {
  int input_dim = 0;
  int num_freqs = 0;        // L
  bool include_input = true;

  int encoded_dim() const {
    return input_dim * (include_input ? 1 : 0) + 2 * input_dim * num_freqs;
  }
};

// Output layout, frequency-major:
//   [p (if include_input), sin(2^0 pi p), cos(2^0 pi p), ..., sin(2^{L-1} pi p), cos(2^{L-1} pi p)]
// where sin/cos apply to every coordinate of p at that frequency.
VecX positional_encode(const VecX& p, const PosEncodingSpec& spec);
// Row-wise batch variant; rows of pts are coordinate vectors.
MatRX positional_encode(const MatRX& pts, const PosEncodingSpec& spec);

struct ForwardCache {
  MatRX input;
  std::vector<MatRX> pre;   // pre-activation z_l per layer
  std::vector<MatRX> post;  // activation(z_l); post.back() is the network output
};

// Evaluation without gradient bookkeeping.
MatRX mlp_eval(const MlpNetwork& net, const MatRX& input);
// Forward pass retaining per-layer pre-activations for mlp_backward.
MatRX mlp_forward(const MlpNetwork& net, const MatRX& input, ForwardCache& cache);

struct Gradients {
  std::vector<MatRX> weights;
  std::vector<VecX> bias;
};

// Exact reverse-mode gradients of the forward chain. cache must come from a
// mlp_forward call on the same network and d_output must match the output shape.
Gradients mlp_backward(const MlpNetwork& net, const ForwardCache& cache, const MatRX& d_output);

// Mean of squared differences over all elements, accumulated in 64-bit.
// Second result is d loss / d pred = 2 (pred - target) / element_count.
std::pair<double, MatRX> mse_loss(const MatRX& pred, const MatRX& target);

struct AdamParams {
  float lr = 5e-4f;
  float beta1 = 0.9f;
  float beta2 = 0.999f;
  float eps = 1e-8f;
};

struct AdamState {
  std::vector<MatRX> m_w, v_w;
  std::vector<VecX> m_b, v_b;
  std::int64_t step = 0;

  static AdamState zeros_like(const MlpNetwork& net);
};

// Per-layer freeze flags; frozen layers are excluded from optimizer updates.
class FreezeMask {
 public:
  FreezeMask() = default;
  explicit FreezeMask(std::vector<bool> frozen) : frozen_(std::move(frozen)) {}

  static FreezeMask none(std::size_t layer_count) {
    return FreezeMask(std::vector<bool>(layer_count, false));
  }
  static FreezeMask all(std::size_t layer_count) {
    return FreezeMask(std::vector<bool>(layer_count, true));
  }
  // First k layers trainable, the rest frozen.
  static FreezeMask train_first(std::size_t layer_count, std::size_t k);

  bool frozen(std::size_t layer) const { return frozen_.at(layer); }
  std::size_t size() const { return frozen_.size(); }
  bool all_frozen() const;

 private:
  std::vector<bool> frozen_;
};

// Bias-corrected Adam step on every unmasked layer. Masked layers keep their
// parameters and moment buffers bit-identical. state.step increments once.
void adam_step(MlpNetwork& net, const Gradients& grads, AdamState& state,
               const AdamParams& params, const FreezeMask& mask);

// Glorot-uniform weights (a = sqrt(6 / (fan_in + fan_out))), zero biases.
// Deterministic for a fixed seed.
MlpNetwork init_network(int input_dim, std::span<const LayerSpec> layers, std::uint64_t seed);

// Weight blob format: layers in order, per layer the weight matrix row-major
// then the bias, each value a little-endian IEEE 754 binary32. Total length
// is 4 * param_count. Roundtrips bit-exactly.
std::vector<std::uint8_t> serialize_weights(const MlpNetwork& net);
MlpNetwork deserialize_weights(std::span<const std::uint8_t> bytes, int input_dim,
                               std::span<const LayerSpec> layers);

}  // namespace inv
