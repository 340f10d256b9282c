#pragma once

#include <cstdint>
#include <optional>
#include <utility>
#include <vector>

#include "inv/nn.hpp"

namespace inv {

enum class HeadType : std::uint8_t {
  kRgbOnly = 0,          // 2D image fitting: trunk + sigmoid RGB head
  kRgbSigmaViewdep = 1,  // volumetric: trunk + density/color heads
};

// Architecture description. The trunk is num_hidden_layers ReLU layers of
// hidden_width; heads follow. structure_layer_count (k) indexes trunk layers
// only -- heads always belong to the color block.
struct NetworkConfig {
  PosEncodingSpec pos_enc;
  std::optional<PosEncodingSpec> view_enc;  // 3D view direction branch, if any
  int hidden_width = 64;
  int num_hidden_layers = 4;
  HeadType heads = HeadType::kRgbOnly;
  int structure_layer_count = 1;  // k
  bool paired_coarse_fine = false;

  void validate() const;

  // True when the architecture is a plain layer chain that MlpNetwork can
  // represent. A view-direction branch makes the head graph diverge, so such
  // configs exist for size accounting only.
  bool chain_representable() const {
    return heads == HeadType::kRgbOnly || !view_enc.has_value();
  }

  // Layer chain for instantiable configs. RGB-only nets end in a sigmoid RGB
  // head; Lambertian RGB-sigma nets end in a fused 4-wide linear head whose
  // rgb/sigma channels are squashed at render time.
  std::vector<LayerSpec> chain_layers() const;

  // Every layer's (in, out) including branched heads; used for storage math.
  std::vector<std::pair<int, int>> accounting_dims() const;

  std::int64_t param_count() const;                 // one network
  std::int64_t structure_param_count(int k) const;  // first k trunk layers
  // Serialized sizes in bytes (4 bytes per parameter), doubled for a
  // coarse+fine pair.
  std::int64_t total_bytes() const;
};

// The 12-layer NeRF configuration the paper's storage figures refer to:
// 256-wide, 8 trunk layers, position L=10, view L=4, coarse+fine pair, k=3.
NetworkConfig paper_nerf_config();

// Desk-scale defaults.
NetworkConfig toy2d_config();  // 4 hidden x 64, L=8, RGB head, k=1
NetworkConfig toy3d_config();  // 8 hidden x 64, L=6, Lambertian RGB-sigma, k=3

}  // namespace inv
