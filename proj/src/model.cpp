#include "inv/model.hpp"

#include <cstring>
#include <stdexcept>
#include <string>

#include "inv/errors.hpp"

namespace inv {

namespace {

std::int64_t layers_param_count(std::span<const DenseLayer> layers) {
  std::int64_t n = 0;
  for (const auto& l : layers) n += l.param_count();
  return n;
}

}  // namespace

std::int64_t StructureBlock::param_count() const { return layers_param_count(layers); }
std::int64_t ColorBlock::param_count() const { return layers_param_count(layers); }

std::pair<StructureBlock, ColorBlock> split_model(const MlpNetwork& net, int k) {
  const int n = static_cast<int>(net.layers.size());
  if (k <= 0 || k >= n) {
    throw std::invalid_argument("split_model: k must satisfy 0 < k < layer count (" +
                                std::to_string(k) + " vs " + std::to_string(n) + " layers)");
  }
  StructureBlock sb;
  sb.layers.assign(net.layers.begin(), net.layers.begin() + k);
  ColorBlock cb;
  cb.layers.assign(net.layers.begin() + k, net.layers.end());
  return {std::move(sb), std::move(cb)};
}

MlpNetwork assemble_model(const StructureBlock& sb, const ColorBlock& cb) {
  if (sb.layers.empty() || cb.layers.empty()) {
    throw std::invalid_argument("assemble_model: empty block");
  }
  if (sb.layers.back().out_dim() != cb.layers.front().in_dim()) {
    throw std::invalid_argument("assemble_model: structure output dim " +
                                std::to_string(sb.layers.back().out_dim()) +
                                " != color input dim " +
                                std::to_string(cb.layers.front().in_dim()));
  }
  MlpNetwork net;
  net.input_dim = sb.layers.front().in_dim();
  net.layers.reserve(sb.layers.size() + cb.layers.size());
  net.layers.insert(net.layers.end(), sb.layers.begin(), sb.layers.end());
  net.layers.insert(net.layers.end(), cb.layers.begin(), cb.layers.end());
  net.validate();
  return net;
}

MlpNetwork structure_swap(const MlpNetwork& a, const MlpNetwork& b, int k) {
  if (!same_structure(a, b)) {
    throw std::invalid_argument("structure_swap: networks are not structurally identical");
  }
  const int n = static_cast<int>(a.layers.size());
  if (k < 0 || k > n) {
    throw std::invalid_argument("structure_swap: k out of range");
  }
  MlpNetwork out = a;
  for (int i = 0; i < k; ++i) out.layers[i] = b.layers[i];
  return out;
}

std::int64_t structure_bytes(const NetworkConfig& config, int k) {
  return 4 * config.structure_param_count(k) * (config.paired_coarse_fine ? 2 : 1);
}

void InvArtifact::validate() const {
  config.validate();
  if (warmup_count < 0) throw std::invalid_argument("InvArtifact: negative warmup_count");
  if (shared_color.layers.empty()) throw std::invalid_argument("InvArtifact: empty color block");
  for (std::size_t i = 0; i < frames.size(); ++i) {
    if (frames[i].frame_index != static_cast<int>(i)) {
      throw std::invalid_argument("InvArtifact: frame indices must be contiguous from 0");
    }
    if (frames[i].layers.size() != frames[0].layers.size()) {
      throw std::invalid_argument("InvArtifact: structure blocks differ in layer count");
    }
    for (std::size_t j = 0; j < frames[i].layers.size(); ++j) {
      if (!same_shape(frames[i].layers[j], frames[0].layers[j])) {
        throw std::invalid_argument("InvArtifact: structure blocks differ in shape");
      }
    }
  }
}

MlpNetwork assemble_frame(const InvArtifact& art, int frame) {
  if (frame < 0 || frame >= static_cast<int>(art.frames.size())) {
    throw std::invalid_argument("assemble_frame: frame out of range");
  }
  return assemble_model(art.frames[frame], art.shared_color);
}

MlpNetwork make_network(const NetworkConfig& config, std::uint64_t seed) {
  auto specs = config.chain_layers();
  return init_network(config.pos_enc.encoded_dim(), specs, seed);
}

std::vector<std::uint8_t> serialize_block(std::span<const DenseLayer> layers) {
  MlpNetwork tmp;
  tmp.input_dim = layers.empty() ? 1 : layers.front().in_dim();
  tmp.layers.assign(layers.begin(), layers.end());
  return serialize_weights(tmp);
}

std::vector<float> flatten_block(std::span<const DenseLayer> layers) {
  std::vector<float> out;
  out.reserve(static_cast<std::size_t>(layers_param_count(layers)));
  for (const auto& l : layers) {
    for (int r = 0; r < l.out_dim(); ++r) {
      for (int c = 0; c < l.in_dim(); ++c) out.push_back(l.weights(r, c));
    }
    for (int r = 0; r < l.out_dim(); ++r) out.push_back(l.bias[r]);
  }
  return out;
}

void load_block_from_floats(std::span<const float> values, std::span<DenseLayer> layers) {
  if (static_cast<std::int64_t>(values.size()) != layers_param_count(layers)) {
    throw CorruptDataError("load_block_from_floats: value count " +
                           std::to_string(values.size()) + " does not match block shape");
  }
  const float* p = values.data();
  for (auto& l : layers) {
    for (int r = 0; r < l.out_dim(); ++r) {
      for (int c = 0; c < l.in_dim(); ++c) l.weights(r, c) = *p++;
    }
    for (int r = 0; r < l.out_dim(); ++r) l.bias[r] = *p++;
  }
}

bool blocks_equal(std::span<const DenseLayer> a, std::span<const DenseLayer> b) {
  if (a.size() != b.size()) return false;
  for (std::size_t i = 0; i < a.size(); ++i) {
    if (!same_shape(a[i], b[i])) return false;
    if (std::memcmp(a[i].weights.data(), b[i].weights.data(),
                    sizeof(float) * a[i].weights.size()) != 0) {
      return false;
    }
    if (std::memcmp(a[i].bias.data(), b[i].bias.data(), sizeof(float) * a[i].bias.size()) != 0) {
      return false;
    }
  }
  return true;
}

}  // namespace inv
