#include <cmath>

#include "doctest.h"
#include "inv/config.hpp"
#include "inv/errors.hpp"
#include "inv/model.hpp"
#include "test_util.hpp"

using namespace inv;

namespace {

constexpr double kMiB = 1024.0 * 1024.0;

bool nets_equal(const MlpNetwork& a, const MlpNetwork& b) {
  return serialize_weights(a) == serialize_weights(b);
}

}  // namespace

TEST_CASE("split and assemble are exact inverses") {
  const NetworkConfig cfg = toy2d_config();
  const MlpNetwork net = make_network(cfg, 99);
  for (int k = 1; k < static_cast<int>(net.layers.size()); ++k) {
    const auto [sb, cb] = split_model(net, k);
    CHECK(static_cast<int>(sb.layers.size()) == k);
    CHECK(sb.layers.size() + cb.layers.size() == net.layers.size());
    CHECK(nets_equal(assemble_model(sb, cb), net));
  }
  CHECK_THROWS_AS(split_model(net, 0), std::invalid_argument);
  CHECK_THROWS_AS(split_model(net, static_cast<int>(net.layers.size())), std::invalid_argument);

  // k=1 on a 3-layer net -> blocks of 1 and 2 layers
  std::vector<LayerSpec> specs{{4, 6, Activation::kReLU},
                               {6, 6, Activation::kReLU},
                               {6, 2, Activation::kNone}};
  const MlpNetwork three = init_network(4, specs, 1);
  const auto [sb, cb] = split_model(three, 1);
  CHECK(sb.layers.size() == 1);
  CHECK(cb.layers.size() == 2);
}

TEST_CASE("assemble_model rejects mismatched dims") {
  const MlpNetwork a = make_network(toy2d_config(), 1);
  std::vector<LayerSpec> specs{{32, 5, Activation::kNone}};
  const MlpNetwork odd = init_network(32, specs, 2);
  StructureBlock sb;
  sb.layers = {odd.layers[0]};  // out dim 5 cannot feed the 64-wide color block
  ColorBlock cb;
  cb.layers.assign(a.layers.begin() + 1, a.layers.end());
  CHECK_THROWS_AS(assemble_model(sb, cb), std::invalid_argument);
}

TEST_CASE("structure_swap identity and boundaries") {
  const NetworkConfig cfg = toy2d_config();
  const MlpNetwork a = make_network(cfg, 5);
  const MlpNetwork b = make_network(cfg, 6);
  const int n = static_cast<int>(a.layers.size());

  for (int k = 0; k <= n; ++k) {
    CHECK(nets_equal(structure_swap(a, a, k), a));
  }
  CHECK(nets_equal(structure_swap(a, b, 0), a));
  CHECK(nets_equal(structure_swap(a, b, n), b));

  const MlpNetwork mixed = structure_swap(a, b, 2);
  CHECK(nets_equal(assemble_model(split_model(mixed, 2).first, split_model(a, 2).second), mixed));

  NetworkConfig other = cfg;
  other.hidden_width = 32;
  CHECK_THROWS_AS(structure_swap(a, make_network(other, 5), 1), std::invalid_argument);
  CHECK_THROWS_AS(structure_swap(a, b, n + 1), std::invalid_argument);
}

TEST_CASE("paper configuration size accounting") {
  const NetworkConfig cfg = paper_nerf_config();

  // layer-by-layer parameter count of the 12-layer NeRF pair
  CHECK(cfg.accounting_dims().size() == 12);
  CHECK(cfg.param_count() == 579716);

  const double full = static_cast<double>(cfg.total_bytes());
  CHECK(cfg.total_bytes() == 4637728);
  CHECK(std::abs(full / kMiB - 4.43) / 4.43 <= 0.02);

  CHECK(structure_bytes(cfg, 3) == 1183744);
  CHECK(std::abs(structure_bytes(cfg, 3) / kMiB - 1.12) / 1.12 <= 0.02);

  CHECK(structure_bytes(cfg, 6) == 2762752);
  CHECK(std::abs(structure_bytes(cfg, 6) / kMiB - 2.63) / 2.63 <= 0.02);

  // shared color layers: everything that is not the k=3 structure block
  const double color = full - static_cast<double>(structure_bytes(cfg, 3));
  CHECK(std::abs(color / kMiB - 3.29) / 3.29 <= 0.02);
}

TEST_CASE("structure_bytes is strictly increasing and matches serialized blocks") {
  const NetworkConfig cfg = toy2d_config();
  const MlpNetwork net = make_network(cfg, 3);
  std::int64_t prev = 0;
  for (int k = 1; k <= cfg.num_hidden_layers; ++k) {
    const std::int64_t bytes = structure_bytes(cfg, k);
    CHECK(bytes > prev);
    prev = bytes;
    if (k < static_cast<int>(net.layers.size())) {
      const auto sb = split_model(net, k).first;
      CHECK(static_cast<std::int64_t>(serialize_block(sb.layers).size()) == bytes);
    }
  }

  const NetworkConfig paper = paper_nerf_config();
  prev = 0;
  for (int k = 1; k <= paper.num_hidden_layers; ++k) {
    const std::int64_t bytes = structure_bytes(paper, k);
    CHECK(bytes > prev);
    prev = bytes;
  }
}

TEST_CASE("chain nets serialize to the accounted size") {
  for (const NetworkConfig& cfg : {toy2d_config(), toy3d_config()}) {
    const MlpNetwork net = make_network(cfg, 11);
    CHECK(static_cast<std::int64_t>(serialize_weights(net).size()) == cfg.total_bytes());
  }
  // the paper config is accounting-only: its head graph branches
  CHECK_FALSE(paper_nerf_config().chain_representable());
  CHECK_THROWS_AS(paper_nerf_config().chain_layers(), std::invalid_argument);
}

TEST_CASE("InvArtifact validation") {
  const NetworkConfig cfg = toy2d_config();
  const MlpNetwork net = make_network(cfg, 21);
  InvArtifact art;
  art.config = cfg;
  art.warmup_count = 2;
  auto [sb, cb] = split_model(net, 1);
  art.shared_color = cb;
  sb.frame_index = 0;
  art.frames.push_back(sb);
  sb.frame_index = 1;
  art.frames.push_back(sb);
  CHECK_NOTHROW(art.validate());

  CHECK(nets_equal(assemble_frame(art, 1), net));
  CHECK_THROWS_AS(assemble_frame(art, 2), std::invalid_argument);

  art.frames[1].frame_index = 5;
  CHECK_THROWS_AS(art.validate(), std::invalid_argument);
}

TEST_CASE("flatten and reload round-trips a block") {
  const MlpNetwork net = make_network(toy2d_config(), 31);
  auto [sb, cb] = split_model(net, 2);
  const auto values = flatten_block(sb.layers);
  CHECK(static_cast<std::int64_t>(values.size()) == sb.param_count());

  StructureBlock copy = sb;
  for (auto& l : copy.layers) l.weights.setZero();
  load_block_from_floats(values, copy.layers);
  CHECK(blocks_equal(copy.layers, sb.layers));

  std::vector<float> short_values(values.begin(), values.end() - 1);
  CHECK_THROWS_AS(load_block_from_floats(short_values, copy.layers), CorruptDataError);
}
