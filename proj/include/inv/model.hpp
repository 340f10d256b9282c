#pragma once

#include <cstdint>
#include <span>
#include <utility>
#include <vector>

#include "inv/config.hpp"
#include "inv/nn.hpp"

namespace inv {

// Early layers of a model for one frame: the part that changes frame to frame.
struct StructureBlock {
  int frame_index = 0;
  std::vector<DenseLayer> layers;

  std::int64_t param_count() const;
};

// The remaining layers, shared across frames once frozen.
struct ColorBlock {
  std::vector<DenseLayer> layers;

  std::int64_t param_count() const;
};

// Copies layers [0, k) into a StructureBlock and [k, end) into a ColorBlock.
// Requires 0 < k < layer count.
std::pair<StructureBlock, ColorBlock> split_model(const MlpNetwork& net, int k);

// Concatenates the blocks back into a full network; exact inverse of split_model.
MlpNetwork assemble_model(const StructureBlock& sb, const ColorBlock& cb);

// B's first k layers followed by A's remaining layers. Networks must be
// structurally identical; k = 0 returns A, k = layer count returns B.
MlpNetwork structure_swap(const MlpNetwork& a, const MlpNetwork& b, int k);

// Serialized size of the first k trunk layers, doubled for a coarse+fine pair.
std::int64_t structure_bytes(const NetworkConfig& config, int k);

// One Shared Color Layer block plus per-frame Structure Layer blocks.
// frames are indexed contiguously from 0; for a trained artifact, frame j
// corresponds to video frame warmup_count + j.
struct InvArtifact {
  NetworkConfig config;
  ColorBlock shared_color;
  std::vector<StructureBlock> frames;
  int warmup_count = 0;

  void validate() const;
};

// Full model for one artifact frame.
MlpNetwork assemble_frame(const InvArtifact& art, int frame);

// Fresh network for an instantiable config (Glorot weights, zero biases).
MlpNetwork make_network(const NetworkConfig& config, std::uint64_t seed);

// Flat layer-block helpers, same value layout as serialize_weights.
std::vector<std::uint8_t> serialize_block(std::span<const DenseLayer> layers);
std::vector<float> flatten_block(std::span<const DenseLayer> layers);
// Writes values back into layers whose shapes are already correct.
void load_block_from_floats(std::span<const float> values, std::span<DenseLayer> layers);

bool blocks_equal(std::span<const DenseLayer> a, std::span<const DenseLayer> b);

}  // namespace inv
