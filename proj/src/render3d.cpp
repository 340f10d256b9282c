#include "inv/render3d.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <stdexcept>

namespace inv {

namespace {

inline float logistic(float x) {
  if (x < -12.0f) return 0.0f;
  if (x > 12.0f) return 1.0f;
  return 1.0f / (1.0f + std::exp(-x));
}

}  // namespace

Camera look_at_camera(const Vec3& position, const Vec3& target, float focal, int width,
                      int height) {
  Camera cam;
  cam.position = position;
  cam.focal = focal;
  cam.width = width;
  cam.height = height;
  const Vec3 forward = (target - position).normalized();
  Vec3 world_up(0.0f, 1.0f, 0.0f);
  if (std::abs(forward.dot(world_up)) > 0.999f) world_up = Vec3(1.0f, 0.0f, 0.0f);
  const Vec3 right = forward.cross(world_up).normalized();
  const Vec3 down = forward.cross(right).normalized();
  cam.orientation.col(0) = right;
  cam.orientation.col(1) = down;
  cam.orientation.col(2) = forward;
  return cam;
}

std::vector<Ray> generate_rays(const Camera& cam, float near, float far) {
  if (cam.width <= 0 || cam.height <= 0 || cam.focal <= 0.0f) {
    throw std::invalid_argument("generate_rays: bad camera");
  }
  if (!(near > 0.0f) || !(near < far)) {
    throw std::invalid_argument("generate_rays: need 0 < near < far");
  }
  std::vector<Ray> rays;
  rays.reserve(static_cast<std::size_t>(cam.width) * cam.height);
  for (int y = 0; y < cam.height; ++y) {
    for (int x = 0; x < cam.width; ++x) {
      const float u = (static_cast<float>(x) + 0.5f - 0.5f * cam.width) / cam.focal;
      const float v = (static_cast<float>(y) + 0.5f - 0.5f * cam.height) / cam.focal;
      Ray r;
      r.origin = cam.position;
      r.dir = (cam.orientation * Vec3(u, v, 1.0f)).normalized();
      r.near = near;
      r.far = far;
      rays.push_back(r);
    }
  }
  return rays;
}

std::vector<float> stratified_samples(const Ray& ray, int n, Rng& rng) {
  if (n < 1) throw std::invalid_argument("stratified_samples: n must be >= 1");
  const float h = (ray.far - ray.near) / static_cast<float>(n);
  std::vector<float> depths(n);
  for (int i = 0; i < n; ++i) {
    depths[i] = ray.near + (static_cast<float>(i) + rng.uniform()) * h;
  }
  return depths;
}

std::vector<float> midpoint_samples(const Ray& ray, int n) {
  if (n < 1) throw std::invalid_argument("midpoint_samples: n must be >= 1");
  const float h = (ray.far - ray.near) / static_cast<float>(n);
  std::vector<float> depths(n);
  for (int i = 0; i < n; ++i) {
    depths[i] = ray.near + (static_cast<float>(i) + 0.5f) * h;
  }
  return depths;
}

CompositeResult volume_render(const MatRX& colors, const VecX& sigmas,
                              const std::vector<float>& depths, float far) {
  const int n = static_cast<int>(depths.size());
  if (colors.rows() != n || colors.cols() != 3 || sigmas.size() != n) {
    throw std::invalid_argument("volume_render: shape mismatch");
  }
  for (int i = 1; i < n; ++i) {
    if (!(depths[i] > depths[i - 1])) {
      throw std::invalid_argument("volume_render: depths must be strictly increasing");
    }
  }
  if (n > 0 && far < depths[n - 1]) {
    throw std::invalid_argument("volume_render: far is closer than the last sample");
  }
  CompositeResult res;
  res.weights.resize(n);
  float transmittance = 1.0f;
  for (int i = 0; i < n; ++i) {
    const float delta = (i + 1 < n) ? depths[i + 1] - depths[i] : far - depths[i];
    const float att = std::exp(-sigmas[i] * delta);
    const float w = transmittance * (1.0f - att);
    res.weights[i] = w;
    res.rgb += w * colors.row(i).transpose();
    transmittance *= att;
  }
  return res;
}

float SphereScene::sigma_at(const Vec3& p) const {
  float sigma = 0.0f;
  for (const auto& s : spheres) {
    const float d = (p - s.center).norm();
    sigma += s.density * logistic((s.radius - d) / s.softness);
  }
  return sigma;
}

Vec3 SphereScene::color_at(const Vec3& p) const {
  float total = 0.0f;
  Vec3 c = Vec3::Zero();
  for (const auto& s : spheres) {
    const float d = (p - s.center).norm();
    const float w = s.density * logistic((s.radius - d) / s.softness);
    total += w;
    c += w * s.color;
  }
  if (total <= 1e-12f) return Vec3::Zero();
  return c / total;
}

Image render_ground_truth(const SphereScene& scene, const Camera& cam, int steps, float near,
                          float far) {
  Image img(cam.width, cam.height);
  const auto rays = generate_rays(cam, near, far);
  const float h = (far - near) / static_cast<float>(steps);
  for (int idx = 0; idx < static_cast<int>(rays.size()); ++idx) {
    const Ray& ray = rays[idx];
    float transmittance = 1.0f;
    Vec3 rgb = Vec3::Zero();
    for (int i = 0; i < steps; ++i) {
      const float t = near + (static_cast<float>(i) + 0.5f) * h;
      const Vec3 p = ray.origin + t * ray.dir;
      const float sigma = scene.sigma_at(p);
      if (sigma > 0.0f) {
        const float att = std::exp(-sigma * h);
        rgb += transmittance * (1.0f - att) * scene.color_at(p);
        transmittance *= att;
        if (transmittance < 1e-5f) break;
      }
    }
    const int x = idx % cam.width;
    const int y = idx / cam.width;
    for (int c = 0; c < 3; ++c) img.at(x, y, c) = std::clamp(rgb[c], 0.0f, 1.0f);
  }
  return img;
}

std::vector<SceneFrame> synth_scene_sequence(int frames, int image_size, std::uint64_t seed) {
  if (frames < 2) throw std::invalid_argument("synth_scene_sequence: need >= 2 frames");
  Rng rng(derive_seed(seed, 0x3d));

  // Main sphere drifts linearly; a smaller satellite orbits it. Per-frame
  // motion stays below 2% of the scene extent.
  const Vec3 drift(0.030f * (rng.uniform() < 0.5f ? 1.0f : -1.0f), 0.012f * rng.uniform(),
                   0.020f * (rng.uniform() < 0.5f ? 1.0f : -1.0f));
  const float orbit_phase = rng.uniform(0.0f, 6.28318f);
  const float orbit_step = 0.05f;
  const float orbit_radius = 0.7f;

  const int cam_count = 9;
  const float ring_radius = 2.5f;
  const float focal = 1.6f * static_cast<float>(image_size);
  const float near = 0.5f, far = 4.0f;

  std::vector<SceneFrame> out;
  out.reserve(frames);
  for (int t = 0; t < frames; ++t) {
    SceneFrame frame;
    SphereScene::Sphere main;
    main.center = Vec3(-0.15f, 0.0f, 0.0f) + static_cast<float>(t) * drift;
    main.radius = 0.42f + 0.02f * std::sin(0.35f * static_cast<float>(t));
    main.color = Vec3(0.85f, 0.55f, 0.25f);
    main.density = 18.0f;
    main.softness = 0.04f;

    SphereScene::Sphere satellite;
    const float ang = orbit_phase + orbit_step * static_cast<float>(t);
    satellite.center =
        main.center + orbit_radius * Vec3(std::cos(ang), 0.35f * std::sin(2.0f * ang),
                                          std::sin(ang));
    satellite.radius = 0.18f;
    satellite.color = Vec3(0.3f, 0.55f, 0.9f);
    satellite.density = 18.0f;
    satellite.softness = 0.03f;

    frame.scene.spheres = {main, satellite};

    for (int v = 0; v < cam_count; ++v) {
      const float az = 6.2831853f * static_cast<float>(v) / static_cast<float>(cam_count) + 0.13f;
      const float el = (v % 2 == 0) ? 0.22f : -0.18f;
      const Vec3 pos(ring_radius * std::cos(az), el, ring_radius * std::sin(az));
      Camera cam = look_at_camera(pos, Vec3::Zero(), focal, image_size, image_size);
      Image gt = render_ground_truth(frame.scene, cam, 512, near, far);
      if (v == cam_count / 2) {
        frame.holdout_camera = cam;
        frame.holdout_image = std::move(gt);
      } else {
        frame.train_cameras.push_back(cam);
        frame.train_images.push_back(std::move(gt));
      }
    }
    out.push_back(std::move(frame));
  }
  return out;
}

namespace {

// Decoded per-sample fields plus everything the compositing backward needs.
struct RayBatchBuffers {
  MatRX positions;   // (rays * samples) x 3
  MatRX encoded;     // network input
  std::vector<float> depths;       // rays * samples
  std::vector<float> deltas;       // rays * samples
  MatRX rgb_s;                     // sigmoid(raw rgb)
  VecX sigma;                      // relu(raw sigma)
  std::vector<float> trans_next;   // transmittance after each sample
  std::vector<float> weights;      // per sample
};

// Forward composite over a flat (rays x samples) batch. pred is rays x 3.
void composite_batch(const MatRX& raw, int rays, int samples, RayBatchBuffers& buf, MatRX& pred) {
  buf.rgb_s.resize(raw.rows(), 3);
  buf.sigma.resize(raw.rows());
  buf.trans_next.assign(static_cast<std::size_t>(raw.rows()), 0.0f);
  buf.weights.assign(static_cast<std::size_t>(raw.rows()), 0.0f);
  for (Eigen::Index i = 0; i < raw.rows(); ++i) {
    buf.rgb_s(i, 0) = logistic(raw(i, 0));
    buf.rgb_s(i, 1) = logistic(raw(i, 1));
    buf.rgb_s(i, 2) = logistic(raw(i, 2));
    buf.sigma[i] = std::max(raw(i, 3), 0.0f);
  }
  pred.resize(rays, 3);
  pred.setZero();
  for (int r = 0; r < rays; ++r) {
    float transmittance = 1.0f;
    const int base = r * samples;
    for (int i = 0; i < samples; ++i) {
      const float att = std::exp(-buf.sigma[base + i] * buf.deltas[base + i]);
      const float w = transmittance * (1.0f - att);
      transmittance *= att;
      buf.weights[base + i] = w;
      buf.trans_next[base + i] = transmittance;
      pred(r, 0) += w * buf.rgb_s(base + i, 0);
      pred(r, 1) += w * buf.rgb_s(base + i, 1);
      pred(r, 2) += w * buf.rgb_s(base + i, 2);
    }
  }
}

// d loss / d raw network outputs, given d loss / d composited rgb.
void composite_backward(const MatRX& raw, const MatRX& d_pred, int rays, int samples,
                        const RayBatchBuffers& buf, MatRX& d_raw) {
  d_raw.resize(raw.rows(), 4);
  for (int r = 0; r < rays; ++r) {
    const int base = r * samples;
    float suffix = 0.0f;  // sum_{i>k} w_i (g . c_i)
    for (int i = samples - 1; i >= 0; --i) {
      const int idx = base + i;
      const float g0 = d_pred(r, 0), g1 = d_pred(r, 1), g2 = d_pred(r, 2);
      const float c0 = buf.rgb_s(idx, 0), c1 = buf.rgb_s(idx, 1), c2 = buf.rgb_s(idx, 2);
      const float q = g0 * c0 + g1 * c1 + g2 * c2;
      const float w = buf.weights[idx];
      // color path through the sigmoid
      d_raw(idx, 0) = w * g0 * c0 * (1.0f - c0);
      d_raw(idx, 1) = w * g1 * c1 * (1.0f - c1);
      d_raw(idx, 2) = w * g2 * c2 * (1.0f - c2);
      // density path through the ReLU
      const float d_sigma = buf.deltas[idx] * (buf.trans_next[idx] * q - suffix);
      d_raw(idx, 3) = (raw(idx, 3) > 0.0f) ? d_sigma : 0.0f;
      suffix += w * q;
    }
  }
}

}  // namespace

Image render_view(const MlpNetwork& net, const PosEncodingSpec& enc, const Camera& cam,
                  int n_samples, Rng& rng, float near, float far, float pos_scale) {
  if (net.output_dim() != 4) {
    throw std::invalid_argument("render_view: network must output rgb + sigma");
  }
  const auto rays = generate_rays(cam, near, far);
  Image img(cam.width, cam.height);
  const int chunk = 2048;
  std::vector<float> depths;
  for (std::size_t start = 0; start < rays.size(); start += chunk) {
    const int count = static_cast<int>(std::min<std::size_t>(chunk, rays.size() - start));
    MatRX positions(count * n_samples, 3);
    std::vector<float> deltas(static_cast<std::size_t>(count) * n_samples);
    std::vector<float> all_depths(static_cast<std::size_t>(count) * n_samples);
    for (int r = 0; r < count; ++r) {
      const Ray& ray = rays[start + r];
      depths = stratified_samples(ray, n_samples, rng);
      for (int i = 0; i < n_samples; ++i) {
        const Vec3 p = ray.origin + depths[i] * ray.dir;
        positions.row(r * n_samples + i) = (p / pos_scale).transpose();
        all_depths[r * n_samples + i] = depths[i];
        deltas[r * n_samples + i] =
            (i + 1 < n_samples ? depths[i + 1] - depths[i] : ray.far - depths[i]);
      }
    }
    const MatRX raw = mlp_eval(net, positional_encode(positions, enc));
    RayBatchBuffers buf;
    buf.deltas = std::move(deltas);
    MatRX pred;
    composite_batch(raw, count, n_samples, buf, pred);
    for (int r = 0; r < count; ++r) {
      const int idx = static_cast<int>(start) + r;
      const int x = idx % cam.width;
      const int y = idx / cam.width;
      for (int c = 0; c < 3; ++c) img.at(x, y, c) = std::clamp(pred(r, c), 0.0f, 1.0f);
    }
  }
  return img;
}

std::pair<MlpNetwork, FrameStats> train_frame_3d(const MlpNetwork& init,
                                                 const PosEncodingSpec& enc,
                                                 const std::vector<View>& views, int iters,
                                                 const FreezeMask& mask, const Hyper3D& hyper) {
  if (views.size() < 2) throw std::invalid_argument("train_frame_3d: need at least 2 views");
  if (init.output_dim() != 4) {
    throw std::invalid_argument("train_frame_3d: network must output rgb + sigma");
  }
  if (mask.size() != init.layers.size()) {
    throw std::invalid_argument("train_frame_3d: freeze mask length mismatch");
  }
  const auto t0 = std::chrono::steady_clock::now();

  // Precompute rays and targets per view.
  std::vector<std::vector<Ray>> view_rays;
  view_rays.reserve(views.size());
  for (const auto& [cam, img] : views) {
    if (img.width != cam.width || img.height != cam.height) {
      throw std::invalid_argument("train_frame_3d: image does not match camera dims");
    }
    view_rays.push_back(generate_rays(cam, hyper.near, hyper.far));
  }

  MlpNetwork net = init;
  AdamState state = AdamState::zeros_like(net);
  Rng rng(hyper.seed);
  FrameStats stats;
  stats.iters = iters;
  stats.loss_trace.reserve(iters);

  const int B = hyper.ray_batch;
  const int S = hyper.n_samples;
  ForwardCache cache;
  RayBatchBuffers buf;
  MatRX targets(B, 3);
  MatRX pred, d_raw;
  for (int it = 0; it < iters; ++it) {
    buf.positions.resize(B * S, 3);
    buf.deltas.assign(static_cast<std::size_t>(B) * S, 0.0f);
    for (int r = 0; r < B; ++r) {
      const int v = rng.uniform_int(static_cast<int>(views.size()));
      const Image& img = views[v].second;
      const int p = rng.uniform_int(img.width * img.height);
      const Ray& ray = view_rays[v][p];
      targets(r, 0) = img.pixels[static_cast<std::size_t>(p) * 3 + 0];
      targets(r, 1) = img.pixels[static_cast<std::size_t>(p) * 3 + 1];
      targets(r, 2) = img.pixels[static_cast<std::size_t>(p) * 3 + 2];
      const auto depths = stratified_samples(ray, S, rng);
      for (int i = 0; i < S; ++i) {
        const Vec3 pos = ray.origin + depths[i] * ray.dir;
        buf.positions.row(r * S + i) = (pos / hyper.pos_scale).transpose();
        buf.deltas[r * S + i] = (i + 1 < S ? depths[i + 1] - depths[i] : ray.far - depths[i]);
      }
    }
    buf.encoded = positional_encode(buf.positions, enc);
    const MatRX& raw = mlp_forward(net, buf.encoded, cache);
    composite_batch(raw, B, S, buf, pred);
    auto [loss, d_pred] = mse_loss(pred, targets);
    composite_backward(raw, d_pred, B, S, buf, d_raw);
    const Gradients grads = mlp_backward(net, cache, d_raw);
    adam_step(net, grads, state, hyper.adam, mask);
    stats.loss_trace.push_back(static_cast<float>(loss));
  }
  stats.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  return {std::move(net), std::move(stats)};
}

namespace {

double holdout_psnr(const MlpNetwork& net, const NetworkConfig& config, const SceneFrame& frame,
                    const Hyper3D& hyper, int frame_index) {
  Rng rng(derive_seed(hyper.seed, 0xe0a1 + static_cast<std::uint64_t>(frame_index)));
  const Image render = render_view(net, config.pos_enc, frame.holdout_camera, hyper.n_samples,
                                   rng, hyper.near, hyper.far, hyper.pos_scale);
  return psnr(render, frame.holdout_image);
}

std::vector<View> make_views(const SceneFrame& frame) {
  std::vector<View> views;
  views.reserve(frame.train_cameras.size());
  for (std::size_t i = 0; i < frame.train_cameras.size(); ++i) {
    views.emplace_back(frame.train_cameras[i], frame.train_images[i]);
  }
  return views;
}

}  // namespace

IncrementalResult3D incremental_transfer_3d(const std::vector<SceneFrame>& frames,
                                            const NetworkConfig& config, int iters_per_frame,
                                            const Hyper3D& hyper, const FrameObserver& observer) {
  if (frames.empty()) throw std::invalid_argument("incremental_transfer_3d: no frames");
  IncrementalResult3D result;
  MlpNetwork net = make_network(config, hyper.seed);
  const FreezeMask mask = FreezeMask::none(net.layers.size());
  for (int t = 0; t < static_cast<int>(frames.size()); ++t) {
    Hyper3D frame_hyper = hyper;
    frame_hyper.seed = derive_seed(hyper.seed, static_cast<std::uint64_t>(t));
    auto [trained, stats] =
        train_frame_3d(net, config.pos_enc, make_views(frames[t]), iters_per_frame, mask,
                       frame_hyper);
    net = std::move(trained);
    stats.frame = t;
    stats.psnr_db = holdout_psnr(net, config, frames[t], hyper, t);
    result.report.frames.push_back(std::move(stats));
    result.nets.push_back(net);
    if (observer) observer(t, net);
  }
  return result;
}

InvTrainResult inv_train_3d(const std::vector<SceneFrame>& frames, const NetworkConfig& config,
                            int warmup_frames, int k, int iters_per_frame, const Hyper3D& hyper,
                            const FrameObserver& observer) {
  const int n_frames = static_cast<int>(frames.size());
  if (warmup_frames < 1 || warmup_frames >= n_frames) {
    throw std::invalid_argument("inv_train_3d: need 1 <= warmup_frames < frame count");
  }
  MlpNetwork net = make_network(config, hyper.seed);
  const int n_layers = static_cast<int>(net.layers.size());
  if (k < 1 || k >= n_layers || k > config.num_hidden_layers) {
    throw std::invalid_argument("inv_train_3d: k out of range");
  }

  InvTrainResult result;
  result.artifact.config = config;
  result.artifact.config.structure_layer_count = k;
  result.artifact.warmup_count = warmup_frames;

  const FreezeMask warm_mask = FreezeMask::none(net.layers.size());
  const FreezeMask transfer_mask = FreezeMask::train_first(net.layers.size(), k);

  for (int t = 0; t < n_frames; ++t) {
    const bool warm = t < warmup_frames;
    Hyper3D frame_hyper = hyper;
    frame_hyper.seed = derive_seed(hyper.seed, static_cast<std::uint64_t>(t));
    auto [trained, stats] =
        train_frame_3d(net, config.pos_enc, make_views(frames[t]), iters_per_frame,
                       warm ? warm_mask : transfer_mask, frame_hyper);
    net = std::move(trained);
    stats.frame = t;
    stats.psnr_db = holdout_psnr(net, config, frames[t], hyper, t);
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

}  // namespace inv
