#pragma once

#include <cstdint>
#include <utility>
#include <vector>

#include "inv/fit2d.hpp"
#include "inv/image.hpp"
#include "inv/model.hpp"
#include "inv/nn.hpp"

namespace inv {

// Pinhole camera. orientation columns are (right, down, forward) in world
// space, so pixel rows grow downward along the second column.
struct Camera {
  Vec3 position = Vec3::Zero();
  Mat3 orientation = Mat3::Identity();
  float focal = 50.0f;  // pixels
  int width = 32;
  int height = 32;
};

Camera look_at_camera(const Vec3& position, const Vec3& target, float focal, int width,
                      int height);

struct Ray {
  Vec3 origin = Vec3::Zero();
  Vec3 dir = Vec3::UnitZ();  // unit length
  float near = 0.5f;
  float far = 4.0f;
};

// One ray per pixel through pixel centers, row-major.
std::vector<Ray> generate_rays(const Camera& cam, float near, float far);

// One depth per bin, uniform within the i-th of n equal bins of [near, far].
std::vector<float> stratified_samples(const Ray& ray, int n, Rng& rng);
// Deterministic bin midpoints: near + (i + 0.5) (far - near) / n.
std::vector<float> midpoint_samples(const Ray& ray, int n);

struct CompositeResult {
  Vec3 rgb = Vec3::Zero();
  std::vector<float> weights;
};

// Quadrature compositing: delta_i = depth_{i+1} - depth_i (last delta is
// far - depth_n), alpha_i = 1 - exp(-sigma_i delta_i), weights_i = T_i alpha_i.
// sigmas must be nonnegative and depths strictly increasing.
CompositeResult volume_render(const MatRX& colors, const VecX& sigmas,
                              const std::vector<float>& depths, float far);

// Analytic time-snapshot scene: soft-edged emissive spheres on a dark
// background.
struct SphereScene {
  struct Sphere {
    Vec3 center = Vec3::Zero();
    float radius = 0.4f;
    Vec3 color = Vec3(0.8f, 0.6f, 0.3f);
    float density = 14.0f;
    float softness = 0.03f;
  };
  std::vector<Sphere> spheres;

  float sigma_at(const Vec3& p) const;
  Vec3 color_at(const Vec3& p) const;
};

// Dense fixed-step reference ray-marcher (ground truth).
Image render_ground_truth(const SphereScene& scene, const Camera& cam, int steps, float near,
                          float far);

struct SceneFrame {
  SphereScene scene;
  std::vector<Camera> train_cameras;
  Camera holdout_camera;
  std::vector<Image> train_images;
  Image holdout_image;
};

// frames snapshots of a slowly moving two-sphere scene, with 8 training
// cameras and 1 held-out camera on a ring; ground truth from the dense
// marcher at 512 steps.
std::vector<SceneFrame> synth_scene_sequence(int frames, int image_size, std::uint64_t seed);

struct Hyper3D {
  AdamParams adam;
  int ray_batch = 1024;
  int n_samples = 32;
  float near = 0.5f;
  float far = 4.0f;
  float pos_scale = 3.0f;  // world -> [-1,1] normalization for encoding
  std::uint64_t seed = 0;
};

// Per-pixel stratified volumetric render of a Lambertian RGB-sigma network.
// Raw sigma is ReLU-rectified and raw rgb sigmoid-squashed before compositing.
Image render_view(const MlpNetwork& net, const PosEncodingSpec& enc, const Camera& cam,
                  int n_samples, Rng& rng, float near, float far, float pos_scale);

using View = std::pair<Camera, Image>;

// Each step samples ray_batch random pixels across the views, renders them,
// and applies one Adam/MSE step; frozen layers are untouched.
std::pair<MlpNetwork, FrameStats> train_frame_3d(const MlpNetwork& init,
                                                 const PosEncodingSpec& enc,
                                                 const std::vector<View>& views, int iters,
                                                 const FreezeMask& mask, const Hyper3D& hyper);

struct IncrementalResult3D {
  std::vector<MlpNetwork> nets;
  TrainReport report;  // psnr_db measured on the held-out view
};

IncrementalResult3D incremental_transfer_3d(const std::vector<SceneFrame>& frames,
                                            const NetworkConfig& config, int iters_per_frame,
                                            const Hyper3D& hyper,
                                            const FrameObserver& observer = {});

// Same two-stage scheme as inv_train_2d, over train_frame_3d.
InvTrainResult inv_train_3d(const std::vector<SceneFrame>& frames, const NetworkConfig& config,
                            int warmup_frames, int k, int iters_per_frame, const Hyper3D& hyper,
                            const FrameObserver& observer = {});

}  // namespace inv
