#include "phigen/stereo_forcing.hpp"

#include <cmath>

#include "phigen/image_io.hpp"

namespace phigen {

SfMode sf_mode_from(const std::string& name) {
  if (name == "off") return SfMode::off;
  if (name == "random") return SfMode::random;
  if (name == "entropy") return SfMode::entropy;
  if (name == "locpot") return SfMode::locpot;
  throw ConfigError("unknown stereo-forcing mode '" + name + "'");
}

SfParams sf_params_from(const RunConfig& cfg) {
  SfParams p;
  p.mode = sf_mode_from(cfg.get_string("sf.mode"));
  p.omega = cfg.get_double("sf.omega");
  p.sigma_ref = cfg.get_double("sf.sigma_ref");
  p.b_min = cfg.get_double("sf.b_min");
  return p;
}

float clamp_u(float u) { return std::clamp(u, 1e-4f, 1.0f - 1e-4f); }

Tensor<float> u_random(int h, int w, Rng& rng) {
  Tensor<float> u({1, h, w});
  for (auto& v : u.data) v = clamp_u(float(rng.uniform()));
  return u;
}

Tensor<float> u_entropy(const Tensor<float>& bin_logits) {
  const int D = bin_logits.shape[0], H = bin_logits.shape[1], W = bin_logits.shape[2];
  if (D < 2) throw ConfigError("u_entropy: need at least two bins");
  Tensor<float> u({1, H, W});
  const double hmax = std::log(double(D));
  for (int y = 0; y < H; ++y)
    for (int x = 0; x < W; ++x) {
      double mx = bin_logits.at(0, y, x);
      for (int d = 1; d < D; ++d) mx = std::max(mx, double(bin_logits.at(d, y, x)));
      double z = 0;
      for (int d = 0; d < D; ++d) z += std::exp(double(bin_logits.at(d, y, x)) - mx);
      double ent = 0;
      for (int d = 0; d < D; ++d) {
        const double p = std::exp(double(bin_logits.at(d, y, x)) - mx) / z;
        if (p > 0) ent -= p * std::log(p);
      }
      u.at(0, y, x) = clamp_u(float(1.0 - ent / hmax));
    }
  return u;
}

Tensor<float> u_locpot(const std::vector<float>& depth, const CameraIntrinsics& intr,
                       const CameraPose& world_to_cam,
                       const std::vector<CameraPose>& context_world_to_cam, double sigma_ref,
                       double b_min) {
  const int H = intr.height, W = intr.width;
  if (int(depth.size()) != H * W) throw ConfigError("u_locpot: depth size mismatch");
  std::vector<Eigen::Vector3f> centers;
  centers.push_back(world_to_cam.center());
  for (const auto& p : context_world_to_cam) centers.push_back(p.center());
  const Eigen::Matrix3f cam_to_world = world_to_cam.R.transpose();
  const double fbar = 0.5 * (double(intr.fx) + double(intr.fy));

  Tensor<float> u({1, H, W});
  for (int y = 0; y < H; ++y)
    for (int x = 0; x < W; ++x) {
      Eigen::Vector3f dir((float(x) + 0.5f - intr.cx) / intr.fx,
                          (float(y) + 0.5f - intr.cy) / intr.fy, 1.0f);
      const Eigen::Vector3f r = (cam_to_world * dir).normalized();
      double b = 0;
      for (size_t i = 0; i < centers.size(); ++i)
        for (size_t j = i + 1; j < centers.size(); ++j) {
          const Eigen::Vector3f d = centers[j] - centers[i];
          const Eigen::Vector3f perp = d - d.dot(r) * r;
          b = std::max(b, double(perp.norm()));
        }
      const double d = double(depth[size_t(y) * W + x]);
      const double sigma = d * d / (fbar * std::max(b, b_min));
      u.at(0, y, x) = clamp_u(float(std::exp(-sigma / sigma_ref)));
    }
  return u;
}

Tensor<float> u_to_latent(const Tensor<float>& u0, const Tensor<float>& u1, int lw, int lh) {
  if (!u0.same_shape(u1)) throw ConfigError("u_to_latent: pair shape mismatch");
  const int H = u0.shape[1], W = u0.shape[2];
  std::vector<float> a = area_resample(u0.data, W, H, 1, lw, lh);
  std::vector<float> b = area_resample(u1.data, W, H, 1, lw, lh);
  Tensor<float> out({1, lh, lw});
  for (size_t i = 0; i < out.numel(); ++i) out.data[i] = 0.5f * (a[i] + b[i]);
  return out;
}

Tensor<float> sf_apply(const Tensor<float>& cond, const Tensor<float>& u) {
  if (u.shape[0] != 1 || u.shape[1] != cond.shape[1] || u.shape[2] != cond.shape[2])
    throw ConfigError("sf_apply: reliability map shape mismatch");
  Tensor<float> out = cond;
  const size_t plane = size_t(cond.shape[1]) * cond.shape[2];
  for (int c = 0; c < cond.shape[0]; ++c)
    for (size_t i = 0; i < plane; ++i) out.data[size_t(c) * plane + i] *= u.data[i];
  return out;
}

}  // namespace phigen
