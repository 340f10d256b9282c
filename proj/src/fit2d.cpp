#include "inv/fit2d.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <stdexcept>

namespace inv {

namespace {

constexpr double kTwoPi = 6.283185307179586476925;

// Procedural frame content. Two ingredients:
//  - a smooth periodic texture (low-frequency gratings plus wide bumps) that
//    a coordinate MLP fits quickly, and
//  - row-structured grain (dense along y, three low x-frequency modes) that
//    fits slowly and so acts as the quality ceiling within a training budget.
// Under the 1 px/frame cyclic shift of `translate` the grain is nearly
// invariant, so incrementally trained models retain their progress on it.
struct Texture2D {
  struct Grating {
    int fx, fy;
    double amp, phase;
  };
  struct Bump {
    double u0, v0, ku, kv, amp;
  };
  static constexpr int kGrainModes = 1;

  int width, height;
  std::vector<Grating> gratings[2];  // two independent patterns
  std::vector<Bump> bumps[2];
  double norm[2];
  double base[3], mix0[3], mix1[3];
  std::vector<float> grain_amp, grain_phase;  // [height x 3 x kGrainModes]
  double grain_scale = 0.0;

  static Texture2D make(int w, int h, std::uint64_t seed) {
    Rng rng(derive_seed(seed, 0x7e8));
    Texture2D t;
    t.width = w;
    t.height = h;
    for (int p = 0; p < 2; ++p) {
      double total = 1e-9;
      const int n_gratings = p == 0 ? 3 : 2;
      for (int i = 0; i < n_gratings; ++i) {
        Grating g;
        do {
          g.fx = rng.uniform_int(5) - 2;
          g.fy = rng.uniform_int(5) - 2;
        } while (g.fx == 0 && g.fy == 0);
        g.amp = 0.25 + 0.75 * rng.uniform();
        g.phase = kTwoPi * rng.uniform();
        total += g.amp;
        t.gratings[p].push_back(g);
      }
      {
        Bump b;
        b.u0 = w * rng.uniform();
        b.v0 = h * rng.uniform();
        b.ku = 6.0 * (0.5 + rng.uniform());
        b.kv = 6.0 * (0.5 + rng.uniform());
        b.amp = (rng.uniform() < 0.5f ? -1.0 : 1.0) * (1.2 + 0.8 * rng.uniform());
        total += std::abs(b.amp) * 0.7;
        t.bumps[p].push_back(b);
      }
      t.norm[p] = total;
    }
    for (int c = 0; c < 3; ++c) {
      t.base[c] = 0.35 + 0.3 * rng.uniform();
      t.mix0[c] = (rng.uniform() < 0.5f ? -1.0 : 1.0) * (0.3 + 0.2 * rng.uniform());
      t.mix1[c] = (rng.uniform() < 0.5f ? -1.0 : 1.0) * (0.12 + 0.1 * rng.uniform());
    }

    t.grain_amp.resize(static_cast<std::size_t>(h) * 3 * kGrainModes);
    t.grain_phase.resize(t.grain_amp.size());
    for (std::size_t i = 0; i < t.grain_amp.size(); ++i) {
      t.grain_amp[i] = 2.0f * rng.uniform() - 1.0f;
      t.grain_phase[i] = static_cast<float>(kTwoPi) * rng.uniform();
    }
    double var = 0.0;
    for (int y = 0; y < h; ++y) {
      for (int c = 0; c < 3; ++c) {
        for (int x = 0; x < w; ++x) {
          const double g = t.grain_raw(x, y, c);
          var += g * g;
        }
      }
    }
    t.grain_scale = 0.05 / std::sqrt(var / (static_cast<double>(w) * h * 3));
    return t;
  }

  double grain_raw(double u, int row, int c) const {
    double g = 0.0;
    const std::size_t at = (static_cast<std::size_t>(row) * 3 + c) * kGrainModes;
    for (int m = 0; m < kGrainModes; ++m) {
      g += grain_amp[at + m] * std::cos(kTwoPi * m * u / width + grain_phase[at + m]);
    }
    return g;
  }

  double pattern(int p, double u, double v) const {
    double s = 0.0;
    for (const auto& g : gratings[p]) {
      s += g.amp * std::sin(kTwoPi * (g.fx * u / width + g.fy * v / height) + g.phase);
    }
    for (const auto& b : bumps[p]) {
      s += b.amp * std::exp(b.ku * (std::cos(kTwoPi * (u - b.u0) / width) - 1.0)) *
           std::exp(b.kv * (std::cos(kTwoPi * (v - b.v0) / height) - 1.0));
    }
    return s / norm[p];
  }

  // u, v may be fractional (rotation); the grain row snaps to the grid
  void eval(double u, double v, float out[3]) const {
    const int row = static_cast<int>(((std::lround(v) % height) + height) % height);
    const double b0 = pattern(0, u, v);
    const double b1 = pattern(1, u, v);
    for (int c = 0; c < 3; ++c) {
      const double val =
          base[c] + mix0[c] * b0 + mix1[c] * b1 + grain_scale * grain_raw(u, row, c);
      out[c] = static_cast<float>(std::clamp(val, 0.02, 0.98));
    }
  }
};

Image render_texture_grid(const Texture2D& tex) {
  Image img(tex.width, tex.height);
  float rgb[3];
  for (int y = 0; y < tex.height; ++y) {
    for (int x = 0; x < tex.width; ++x) {
      tex.eval(x, y, rgb);
      for (int c = 0; c < 3; ++c) img.at(x, y, c) = rgb[c];
    }
  }
  return img;
}

// Rotation about the gray axis (1,1,1)/sqrt(3) by `angle` radians.
void hue_matrix(double angle, double m[3][3]) {
  const double c = std::cos(angle);
  const double s = std::sin(angle);
  const double t = (1.0 - c) / 3.0;
  const double u = s / std::sqrt(3.0);
  // skew-symmetric part of the axis cross-product matrix
  const double k[3][3] = {{0, -1, 1}, {1, 0, -1}, {-1, 1, 0}};
  for (int i = 0; i < 3; ++i) {
    for (int j = 0; j < 3; ++j) {
      m[i][j] = (i == j ? c : 0.0) + t + u * k[i][j];
    }
  }
}

}  // namespace

Video2D synth_video(SynthKind kind, int frames, int width, int height, std::uint64_t seed) {
  if (frames < 2) throw std::invalid_argument("synth_video: need at least 2 frames");
  if (width <= 0 || height <= 0) throw std::invalid_argument("synth_video: bad dimensions");

  const Texture2D tex = Texture2D::make(width, height, seed);
  Video2D video;
  video.frames.reserve(frames);

  switch (kind) {
    case SynthKind::kTranslate: {
      // All frames are cyclic shifts of one precomputed grid, so adjacent
      // frames agree bit-exactly up to the 1 px shift.
      const Image grid = render_texture_grid(tex);
      for (int t = 0; t < frames; ++t) {
        Image frame(width, height);
        for (int y = 0; y < height; ++y) {
          for (int x = 0; x < width; ++x) {
            const int u = ((x - t) % width + width) % width;
            for (int c = 0; c < 3; ++c) frame.at(x, y, c) = grid.at(u, y, c);
          }
        }
        video.frames.push_back(std::move(frame));
      }
      break;
    }
    case SynthKind::kRotate: {
      const double cx = 0.5 * (width - 1);
      const double cy = 0.5 * (height - 1);
      const double step = 0.025;  // radians per frame
      for (int t = 0; t < frames; ++t) {
        const double a = -step * t;
        const double ca = std::cos(a), sa = std::sin(a);
        Image frame(width, height);
        float rgb[3];
        for (int y = 0; y < height; ++y) {
          for (int x = 0; x < width; ++x) {
            const double dx = x - cx, dy = y - cy;
            tex.eval(cx + ca * dx - sa * dy, cy + sa * dx + ca * dy, rgb);
            for (int c = 0; c < 3; ++c) frame.at(x, y, c) = rgb[c];
          }
        }
        video.frames.push_back(std::move(frame));
      }
      break;
    }
    case SynthKind::kColorShift: {
      const Image grid = render_texture_grid(tex);
      const double step = 0.06;  // radians of hue per frame
      for (int t = 0; t < frames; ++t) {
        double m[3][3];
        hue_matrix(step * t, m);
        Image frame(width, height);
        for (int y = 0; y < height; ++y) {
          for (int x = 0; x < width; ++x) {
            for (int i = 0; i < 3; ++i) {
              double v = 0.0;
              for (int j = 0; j < 3; ++j) v += m[i][j] * grid.at(x, y, j);
              frame.at(x, y, i) = static_cast<float>(std::clamp(v, 0.0, 1.0));
            }
          }
        }
        video.frames.push_back(std::move(frame));
      }
      break;
    }
  }
  return video;
}

PixelBatch sample_pixels(const Image& img, int n, Rng& rng) {
  if (n < 1) throw std::invalid_argument("sample_pixels: n must be >= 1");
  PixelBatch batch;
  batch.coords.resize(n, 2);
  batch.rgb.resize(n, 3);
  for (int i = 0; i < n; ++i) {
    const int x = rng.uniform_int(img.width);
    const int y = rng.uniform_int(img.height);
    batch.coords(i, 0) = norm_coord(x, img.width);
    batch.coords(i, 1) = norm_coord(y, img.height);
    batch.rgb(i, 0) = img.at(x, y, 0);
    batch.rgb(i, 1) = img.at(x, y, 1);
    batch.rgb(i, 2) = img.at(x, y, 2);
  }
  return batch;
}

void write_metrics_tsv(const std::string& path, const TrainReport& report) {
  std::ofstream f(path, std::ios::trunc);
  if (!f) throw std::runtime_error("write_metrics_tsv: cannot open " + path);
  f << "frame\tpsnr_db\titers\tseconds\n";
  char line[128];
  for (const auto& s : report.frames) {
    std::snprintf(line, sizeof(line), "%d\t%.4f\t%d\t%.3f\n", s.frame, s.psnr_db, s.iters,
                  s.seconds);
    f << line;
  }
}

std::pair<MlpNetwork, FrameStats> train_frame_2d(const MlpNetwork& init,
                                                 const PosEncodingSpec& enc, const Image& image,
                                                 int iters, const FreezeMask& mask,
                                                 const TrainHyper& hyper) {
  if (init.input_dim != enc.encoded_dim()) {
    throw std::invalid_argument("train_frame_2d: network input dim does not match encoding");
  }
  if (mask.size() != init.layers.size()) {
    throw std::invalid_argument("train_frame_2d: freeze mask length mismatch");
  }
  const auto t0 = std::chrono::steady_clock::now();

  MlpNetwork net = init;
  AdamState state = AdamState::zeros_like(net);
  Rng rng(hyper.seed);
  FrameStats stats;
  stats.iters = iters;
  stats.loss_trace.reserve(iters);

  ForwardCache cache;
  for (int it = 0; it < iters; ++it) {
    const PixelBatch batch = sample_pixels(image, hyper.batch_size, rng);
    const MatRX x = positional_encode(batch.coords, enc);
    const MatRX& pred = mlp_forward(net, x, cache);
    auto [loss, d_pred] = mse_loss(pred, batch.rgb);
    const Gradients grads = mlp_backward(net, cache, d_pred);
    adam_step(net, grads, state, hyper.adam, mask);
    stats.loss_trace.push_back(static_cast<float>(loss));
  }

  stats.psnr_db = psnr(render_image_2d(net, enc, image.width, image.height), image);
  stats.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  return {std::move(net), std::move(stats)};
}

IncrementalResult incremental_transfer_2d(const Video2D& video, const NetworkConfig& config,
                                          int iters_per_frame, const TrainHyper& hyper,
                                          const FrameObserver& observer) {
  if (video.frames.empty()) throw std::invalid_argument("incremental_transfer_2d: empty video");
  IncrementalResult result;
  MlpNetwork net = make_network(config, hyper.seed);
  const FreezeMask mask = FreezeMask::none(net.layers.size());
  for (int t = 0; t < static_cast<int>(video.frames.size()); ++t) {
    TrainHyper frame_hyper = hyper;
    frame_hyper.seed = derive_seed(hyper.seed, static_cast<std::uint64_t>(t));
    auto [trained, stats] =
        train_frame_2d(net, config.pos_enc, video.frames[t], iters_per_frame, mask, frame_hyper);
    net = std::move(trained);
    stats.frame = t;
    result.report.frames.push_back(std::move(stats));
    result.nets.push_back(net);
    if (observer) observer(t, net);
  }
  return result;
}

InvTrainResult inv_train_2d(const Video2D& video, const NetworkConfig& config, int warmup_frames,
                            int k, int iters_per_frame, const TrainHyper& hyper,
                            const FrameObserver& observer) {
  const int n_frames = static_cast<int>(video.frames.size());
  if (warmup_frames < 1 || warmup_frames >= n_frames) {
    throw std::invalid_argument("inv_train_2d: need 1 <= warmup_frames < frame count");
  }
  MlpNetwork net = make_network(config, hyper.seed);
  const int n_layers = static_cast<int>(net.layers.size());
  if (k < 1 || k >= n_layers || k > config.num_hidden_layers) {
    throw std::invalid_argument("inv_train_2d: k out of range");
  }

  InvTrainResult result;
  result.artifact.config = config;
  result.artifact.config.structure_layer_count = k;
  result.artifact.warmup_count = warmup_frames;

  const FreezeMask warm_mask = FreezeMask::none(net.layers.size());
  const FreezeMask transfer_mask = FreezeMask::train_first(net.layers.size(), k);

  for (int t = 0; t < n_frames; ++t) {
    const bool warm = t < warmup_frames;
    TrainHyper frame_hyper = hyper;
    frame_hyper.seed = derive_seed(hyper.seed, static_cast<std::uint64_t>(t));
    auto [trained, stats] = train_frame_2d(net, config.pos_enc, video.frames[t], iters_per_frame,
                                           warm ? warm_mask : transfer_mask, frame_hyper);
    net = std::move(trained);
    stats.frame = t;
    result.report.frames.push_back(std::move(stats));
    if (t == warmup_frames - 1) {
      result.artifact.shared_color = split_model(net, k).second;
    }
    if (!warm) {
      StructureBlock sb = split_model(net, k).first;
      sb.frame_index = t - warmup_frames;
      result.artifact.frames.push_back(std::move(sb));
    }
    if (observer) observer(t, net);
  }
  result.final_net = std::move(net);
  result.artifact.validate();
  return result;
}

std::vector<std::pair<int, Image>> color_scheme_transfer_2d(const MlpNetwork& netA,
                                                            const PosEncodingSpec& enc,
                                                            const Image& imageB, int iters, int k,
                                                            int snapshot_every,
                                                            const TrainHyper& hyper) {
  if (snapshot_every < 1) {
    throw std::invalid_argument("color_scheme_transfer_2d: snapshot_every must be >= 1");
  }
  const FreezeMask mask = FreezeMask::train_first(netA.layers.size(), k);
  std::vector<std::pair<int, Image>> snapshots;
  snapshots.emplace_back(0, render_image_2d(netA, enc, imageB.width, imageB.height));

  MlpNetwork net = netA;
  AdamState state = AdamState::zeros_like(net);
  Rng rng(hyper.seed);
  ForwardCache cache;
  for (int it = 1; it <= iters; ++it) {
    const PixelBatch batch = sample_pixels(imageB, hyper.batch_size, rng);
    const MatRX x = positional_encode(batch.coords, enc);
    const MatRX& pred = mlp_forward(net, x, cache);
    auto [loss, d_pred] = mse_loss(pred, batch.rgb);
    (void)loss;
    const Gradients grads = mlp_backward(net, cache, d_pred);
    adam_step(net, grads, state, hyper.adam, mask);
    if (it % snapshot_every == 0 || it == iters) {
      snapshots.emplace_back(it, render_image_2d(net, enc, imageB.width, imageB.height));
    }
  }
  return snapshots;
}

Image render_image_2d(const MlpNetwork& net, const PosEncodingSpec& enc, int width, int height) {
  Image img(width, height);
  const int chunk_rows = 8192;
  int row = 0;
  while (row < height) {
    const int rows = std::min(chunk_rows / std::max(width, 1) + 1, height - row);
    MatRX coords(rows * width, 2);
    for (int y = 0; y < rows; ++y) {
      for (int x = 0; x < width; ++x) {
        coords(y * width + x, 0) = norm_coord(x, width);
        coords(y * width + x, 1) = norm_coord(row + y, height);
      }
    }
    const MatRX out = mlp_eval(net, positional_encode(coords, enc));
    if (out.cols() < 3) throw std::invalid_argument("render_image_2d: network output is not RGB");
    for (int y = 0; y < rows; ++y) {
      for (int x = 0; x < width; ++x) {
        for (int c = 0; c < 3; ++c) {
          img.at(x, row + y, c) = std::clamp(out(y * width + x, c), 0.0f, 1.0f);
        }
      }
    }
    row += rows;
  }
  return img;
}

}  // namespace inv
