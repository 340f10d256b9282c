#pragma once

#include <cstdint>
#include <functional>
#include <string>
#include <utility>
#include <vector>

#include "inv/image.hpp"
#include "inv/model.hpp"
#include "inv/nn.hpp"

namespace inv {

enum class SynthKind { kTranslate, kRotate, kColorShift };

struct Rational {
  int num = 30;
  int den = 1;
};

struct Video2D {
  std::vector<Image> frames;
  Rational frame_rate;  // metadata only

  int width() const { return frames.empty() ? 0 : frames.front().width; }
  int height() const { return frames.empty() ? 0 : frames.front().height; }
};

// Deterministic procedural test video. `translate` cyclically shifts a fixed
// multi-frequency texture by 1 px/frame, `rotate` spins the same texture
// about the image center, `color_shift` keeps structure fixed and rotates hue.
Video2D synth_video(SynthKind kind, int frames, int width, int height, std::uint64_t seed);

// Pixel-center mapping into [-1, 1]; shared by sampling and rendering.
inline float norm_coord(int i, int n) {
  return (static_cast<float>(i) + 0.5f) * (2.0f / static_cast<float>(n)) - 1.0f;
}

struct PixelBatch {
  MatRX coords;  // n x 2, normalized to [-1,1]
  MatRX rgb;     // n x 3
};

// n uniform-with-replacement pixel draws.
PixelBatch sample_pixels(const Image& img, int n, Rng& rng);

struct TrainHyper {
  AdamParams adam;
  int batch_size = 1024;
  std::uint64_t seed = 0;
};

struct FrameStats {
  int frame = 0;
  double psnr_db = 0.0;
  int iters = 0;
  double seconds = 0.0;
  std::vector<float> loss_trace;
};

struct TrainReport {
  std::vector<FrameStats> frames;
};

// Plain-text metrics table: frame, psnr_db, iters, seconds (tab-separated).
void write_metrics_tsv(const std::string& path, const TrainReport& report);

// Adam/MSE fitting of one image; frozen layers are untouched.
std::pair<MlpNetwork, FrameStats> train_frame_2d(const MlpNetwork& init,
                                                 const PosEncodingSpec& enc, const Image& image,
                                                 int iters, const FreezeMask& mask,
                                                 const TrainHyper& hyper);

using FrameObserver = std::function<void(int frame, const MlpNetwork& net)>;

struct IncrementalResult {
  std::vector<MlpNetwork> nets;  // one per frame
  TrainReport report;
};

// Trains one model per frame, each initialized from the previous frame's
// weights; frame 0 starts from a fresh Glorot init.
IncrementalResult incremental_transfer_2d(const Video2D& video, const NetworkConfig& config,
                                          int iters_per_frame, const TrainHyper& hyper,
                                          const FrameObserver& observer = {});

struct InvTrainResult {
  InvArtifact artifact;
  MlpNetwork final_net;
  TrainReport report;
};

// Two-stage INV training: all layers train for warmup_frames frames, the
// color block is captured at the last warm-up frame, then only the first k
// layers train and one StructureBlock is stored per later frame.
InvTrainResult inv_train_2d(const Video2D& video, const NetworkConfig& config, int warmup_frames,
                            int k, int iters_per_frame, const TrainHyper& hyper,
                            const FrameObserver& observer = {});

// Finetunes the first k layers of netA on imageB (rest frozen), emitting
// (iteration, render) snapshots every snapshot_every iterations.
std::vector<std::pair<int, Image>> color_scheme_transfer_2d(const MlpNetwork& netA,
                                                            const PosEncodingSpec& enc,
                                                            const Image& imageB, int iters, int k,
                                                            int snapshot_every,
                                                            const TrainHyper& hyper);

// Evaluates the network at every pixel center; output clamped to [0,1].
Image render_image_2d(const MlpNetwork& net, const PosEncodingSpec& enc, int width, int height);

}  // namespace inv
