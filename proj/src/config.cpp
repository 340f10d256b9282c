#include "inv/config.hpp"

#include <stdexcept>
#include <string>

namespace inv {

void NetworkConfig::validate() const {
  if (pos_enc.input_dim <= 0 || pos_enc.num_freqs < 0) {
    throw std::invalid_argument("NetworkConfig: bad position encoding");
  }
  if (hidden_width <= 0 || num_hidden_layers <= 0) {
    throw std::invalid_argument("NetworkConfig: bad trunk dims");
  }
  if (structure_layer_count < 1 || structure_layer_count > num_hidden_layers) {
    throw std::invalid_argument("NetworkConfig: structure_layer_count must index trunk layers");
  }
  if (heads == HeadType::kRgbOnly && view_enc.has_value()) {
    throw std::invalid_argument("NetworkConfig: RGB-only heads take no view encoding");
  }
}

std::vector<LayerSpec> NetworkConfig::chain_layers() const {
  validate();
  if (!chain_representable()) {
    throw std::invalid_argument(
        "NetworkConfig: view-dependent head graph is not a layer chain");
  }
  std::vector<LayerSpec> specs;
  int in = pos_enc.encoded_dim();
  for (int i = 0; i < num_hidden_layers; ++i) {
    specs.push_back({in, hidden_width, Activation::kReLU});
    in = hidden_width;
  }
  if (heads == HeadType::kRgbOnly) {
    specs.push_back({in, 3, Activation::kSigmoid});
  } else {
    // rgb (3) + raw sigma (1); sigmoid/ReLU applied when compositing
    specs.push_back({in, 4, Activation::kNone});
  }
  return specs;
}

std::vector<std::pair<int, int>> NetworkConfig::accounting_dims() const {
  validate();
  std::vector<std::pair<int, int>> dims;
  int in = pos_enc.encoded_dim();
  for (int i = 0; i < num_hidden_layers; ++i) {
    dims.emplace_back(in, hidden_width);
    in = hidden_width;
  }
  if (heads == HeadType::kRgbOnly) {
    dims.emplace_back(in, 3);
  } else if (view_enc.has_value()) {
    // sigma head, feature layer, view branch, rgb head
    dims.emplace_back(in, 1);
    dims.emplace_back(in, hidden_width);
    dims.emplace_back(hidden_width + view_enc->encoded_dim(), hidden_width / 2);
    dims.emplace_back(hidden_width / 2, 3);
  } else {
    dims.emplace_back(in, 4);
  }
  return dims;
}

std::int64_t NetworkConfig::param_count() const {
  std::int64_t n = 0;
  for (auto [in, out] : accounting_dims()) {
    n += static_cast<std::int64_t>(in) * out + out;
  }
  return n;
}

std::int64_t NetworkConfig::structure_param_count(int k) const {
  validate();
  if (k < 1 || k > num_hidden_layers) {
    throw std::invalid_argument("structure_param_count: k out of trunk range");
  }
  std::int64_t n = 0;
  int in = pos_enc.encoded_dim();
  for (int i = 0; i < k; ++i) {
    n += static_cast<std::int64_t>(in) * hidden_width + hidden_width;
    in = hidden_width;
  }
  return n;
}

std::int64_t NetworkConfig::total_bytes() const {
  return 4 * param_count() * (paired_coarse_fine ? 2 : 1);
}

NetworkConfig paper_nerf_config() {
  NetworkConfig c;
  c.pos_enc = {3, 10, true};
  c.view_enc = PosEncodingSpec{3, 4, true};
  c.hidden_width = 256;
  c.num_hidden_layers = 8;
  c.heads = HeadType::kRgbSigmaViewdep;
  c.structure_layer_count = 3;
  c.paired_coarse_fine = true;
  return c;
}

NetworkConfig toy2d_config() {
  NetworkConfig c;
  c.pos_enc = {2, 8, true};
  c.hidden_width = 64;
  c.num_hidden_layers = 4;
  c.heads = HeadType::kRgbOnly;
  c.structure_layer_count = 1;
  c.paired_coarse_fine = false;
  return c;
}

NetworkConfig toy3d_config() {
  NetworkConfig c;
  c.pos_enc = {3, 6, true};
  c.hidden_width = 64;
  c.num_hidden_layers = 8;
  c.heads = HeadType::kRgbSigmaViewdep;
  c.structure_layer_count = 3;
  c.paired_coarse_fine = false;
  return c;
}

}  // namespace inv
