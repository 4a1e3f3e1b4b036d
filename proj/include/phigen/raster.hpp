#pragma once

#include <Eigen/Dense>
#include <optional>
#include <vector>

#include "phigen/scene.hpp"

namespace phigen {

struct ProjectedGaussian {
  Eigen::Vector2f mean2d = Eigen::Vector2f::Zero();
  Eigen::Matrix2f cov2d = Eigen::Matrix2f::Identity();  // EWA screen covariance, no dilation
  float depth = 0;                                      // camera-frame z
  int source_index = -1;
};

struct RenderConfig {
  int tile_size = 16;
  float near_plane = 0.05f;
  float far_sentinel = 1000.0f;   // depth reported for pixels with no coverage
  float alpha_clamp = 0.999f;     // per-sample opacity ceiling
  float min_transmittance = 1e-4f;  // front-to-back early-out threshold
  float dilation = 0.3f;            // low-pass variance added to cov2d diagonal, px^2
  float support_mahal_sq = 9.0f;    // contributions beyond 3 sigma are exactly zero
  float max_condition = 1e8f;       // degenerate-covariance skip threshold
  float min_z_over_scale = 3.0f;    // EWA validity cull: drop when z < ratio * max scale; <= 0 off
  Eigen::Vector3f background{0.0f, 0.0f, 0.0f};
  int threads = 1;
};

struct RenderOutput {
  int width = 0, height = 0, num_classes = 0;
  std::vector<float> rgb;    // height*width*3
  std::vector<float> depth;  // height*width, expected depth or far sentinel
  std::vector<float> alpha;  // height*width, accumulated weight
  std::vector<float> sem;    // height*width*num_classes, normalized where alpha > 1e-8
  int skipped = 0;           // Gaussians dropped for degenerate screen covariance
};

// Perspective projection of one Gaussian. Returns nullopt when the center is
// behind the near plane, too close for the affine footprint approximation
// (z < min_z_over_scale * max scale), or the 3 sigma dilated footprint misses
// the image.
std::optional<ProjectedGaussian> project_gaussian(const Gaussian4D& g,
                                                  const CameraIntrinsics& intr,
                                                  const CameraPose& world_to_cam,
                                                  float near_plane = 0.05f,
                                                  float dilation = 0.3f,
                                                  int source_index = -1,
                                                  float min_z_over_scale = 3.0f);

// Tile-based alpha compositing over front-to-back (depth, source_index) order.
// Pixel (row i, col j) samples the footprint at (j+0.5, i+0.5).
RenderOutput render(const GaussianScene& scene, const CameraIntrinsics& intr,
                    const CameraPose& world_to_cam, const RenderConfig& cfg = {});

// Per-pixel full-scan compositing with no tiling. Same contributions, same
// order, same early-out as render(); the tiled path is exactly this with the
// scan restricted to tiles the 3 sigma bbox overlaps.
RenderOutput render_reference(const GaussianScene& scene, const CameraIntrinsics& intr,
                              const CameraPose& world_to_cam, const RenderConfig& cfg = {});

// Renders every (time, view) pair along a trajectory, time-major view-minor.
// with_advection moves the scene to each frame id first (dt relative to
// scene.time_index); otherwise the scene is rendered frozen.
std::vector<RenderOutput> render_trajectory(const GaussianScene& scene, const CameraRig& rig,
                                            const Trajectory& traj, const RenderConfig& cfg = {},
                                            bool with_advection = true);

}  // namespace phigen
