#pragma once

#include <string>
#include <vector>

#include "phigen/camera.hpp"
#include "phigen/config.hpp"
#include "phigen/rng.hpp"
#include "phigen/tensor.hpp"

namespace phigen {

// Per-pixel reliability in [1e-4, 1-1e-4] that scales the conditioning latent
// before guided sampling. "off" keeps the condition untouched (u == 1).
enum class SfMode { off, random, entropy, locpot };

SfMode sf_mode_from(const std::string& name);

struct SfParams {
  SfMode mode = SfMode::locpot;
  double omega = 1.5;      // guidance strength
  double sigma_ref = 4.0;  // localization scale mapped to e-fold decay
  double b_min = 0.01;     // baseline floor, meters
};

SfParams sf_params_from(const RunConfig& cfg);

// Clamp shared by every mode so a condition is never zeroed exactly and never
// exactly unscaled.
float clamp_u(float u);

// Uniform per-pixel reliability draws.
Tensor<float> u_random(int h, int w, Rng& rng);

// Confidence of the depth-bin head: 1 - H(p)/log(D) for the per-pixel softmax
// over bin logits [D, H, W].
Tensor<float> u_entropy(const Tensor<float>& bin_logits);

// Stereo localization potential. For each pixel the best available baseline b
// is the largest camera-center displacement perpendicular to the pixel ray
// across {target pose} + context poses; localization error grows as
// sigma = d^2 / (f * max(b, b_min)) and u = exp(-sigma / sigma_ref). With no
// context poses the baseline floor applies everywhere.
Tensor<float> u_locpot(const std::vector<float>& depth, const CameraIntrinsics& intr,
                       const CameraPose& world_to_cam,
                       const std::vector<CameraPose>& context_world_to_cam, double sigma_ref,
                       double b_min);

// Image-resolution pair of maps for one latent step -> latent resolution:
// area-downsample each then average the two.
Tensor<float> u_to_latent(const Tensor<float>& u0, const Tensor<float>& u1, int lw, int lh);

// cond[c,y,x] *= u[0,y,x].
Tensor<float> sf_apply(const Tensor<float>& cond, const Tensor<float>& u);

}  // namespace phigen
