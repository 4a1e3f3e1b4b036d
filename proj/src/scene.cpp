#include "phigen/scene.hpp"

#include <cmath>

#include "phigen/error.hpp"

namespace phigen {

Eigen::Matrix3f quat_to_rot(const Eigen::Vector4f& q) {
  float n = q.norm();
  if (!(n > 1e-8f)) throw NumericError("quat_to_rot: quaternion norm too small to normalize");
  const float w = q[0] / n, x = q[1] / n, y = q[2] / n, z = q[3] / n;
  Eigen::Matrix3f R;
  R << 1 - 2 * (y * y + z * z), 2 * (x * y - w * z), 2 * (x * z + w * y),
      2 * (x * y + w * z), 1 - 2 * (x * x + z * z), 2 * (y * z - w * x),
      2 * (x * z - w * y), 2 * (y * z + w * x), 1 - 2 * (x * x + y * y);
  return R;
}

Eigen::Vector4f quat_mul(const Eigen::Vector4f& a, const Eigen::Vector4f& b) {
  return {a[0] * b[0] - a[1] * b[1] - a[2] * b[2] - a[3] * b[3],
          a[0] * b[1] + a[1] * b[0] + a[2] * b[3] - a[3] * b[2],
          a[0] * b[2] - a[1] * b[3] + a[2] * b[0] + a[3] * b[1],
          a[0] * b[3] + a[1] * b[2] - a[2] * b[1] + a[3] * b[0]};
}

Eigen::Vector4f rot_to_quat(const Eigen::Matrix3f& R) {
  Eigen::Vector4f q;
  const float tr = R.trace();
  if (tr > 0) {
    float s = std::sqrt(tr + 1.0f) * 2;
    q << 0.25f * s, (R(2, 1) - R(1, 2)) / s, (R(0, 2) - R(2, 0)) / s, (R(1, 0) - R(0, 1)) / s;
  } else if (R(0, 0) > R(1, 1) && R(0, 0) > R(2, 2)) {
    float s = std::sqrt(1.0f + R(0, 0) - R(1, 1) - R(2, 2)) * 2;
    q << (R(2, 1) - R(1, 2)) / s, 0.25f * s, (R(0, 1) + R(1, 0)) / s, (R(0, 2) + R(2, 0)) / s;
  } else if (R(1, 1) > R(2, 2)) {
    float s = std::sqrt(1.0f + R(1, 1) - R(0, 0) - R(2, 2)) * 2;
    q << (R(0, 2) - R(2, 0)) / s, (R(0, 1) + R(1, 0)) / s, 0.25f * s, (R(1, 2) + R(2, 1)) / s;
  } else {
    float s = std::sqrt(1.0f + R(2, 2) - R(0, 0) - R(1, 1)) * 2;
    q << (R(1, 0) - R(0, 1)) / s, (R(0, 2) + R(2, 0)) / s, (R(1, 2) + R(2, 1)) / s, 0.25f * s;
  }
  if (q[0] < 0) q = -q;
  return q.normalized();
}

Eigen::Matrix3f covariance(const Eigen::Vector3f& scale, const Eigen::Vector4f& rot) {
  Eigen::Matrix3f R = quat_to_rot(rot);
  return R * scale.array().square().matrix().asDiagonal() * R.transpose();
}

GaussianScene advect(const GaussianScene& scene, int dt) {
  GaussianScene out = scene;
  for (auto& g : out.gaussians) g.mu += g.flow * float(dt);
  out.time_index += dt;
  return out;
}

GaussianScene split_dynamic(const GaussianScene& scene, const std::set<int>& dynamic_classes) {
  GaussianScene out = scene;
  out.dynamic_mask.assign(out.gaussians.size(), 0);
  for (size_t i = 0; i < out.gaussians.size(); ++i) {
    const auto& l = out.gaussians[i].sem_logits;
    if (l.size() == 0) continue;
    int best = 0;
    for (int c = 1; c < l.size(); ++c)
      if (l[c] > l[best]) best = c;
    out.dynamic_mask[i] = dynamic_classes.count(best) ? 1 : 0;
  }
  return out;
}

GaussianScene insert_asset(const GaussianScene& scene, const GaussianScene& asset,
                           const CameraPose& pose) {
  if (!scene.gaussians.empty() && !asset.gaussians.empty() &&
      scene.gaussians[0].sem_logits.size() != asset.gaussians[0].sem_logits.size())
    throw ConfigError("insert_asset: semantic channel counts differ");
  GaussianScene out = scene;
  out.dynamic_mask.reserve(scene.size() + asset.size());
  const Eigen::Vector4f qR = rot_to_quat(pose.R);
  for (size_t i = 0; i < asset.gaussians.size(); ++i) {
    Gaussian4D g = asset.gaussians[i];
    g.mu = pose.apply(g.mu);
    g.rot = quat_mul(qR, g.rot);
    g.flow = pose.R * g.flow;
    out.gaussians.push_back(std::move(g));
    out.dynamic_mask.push_back(i < asset.dynamic_mask.size() ? asset.dynamic_mask[i] : 0);
  }
  return out;
}

void validate(const GaussianScene& scene) {
  if (scene.dynamic_mask.size() != scene.gaussians.size())
    throw ConfigError("scene: dynamic_mask length != gaussian count");
  Eigen::Index sem = scene.gaussians.empty() ? 0 : scene.gaussians[0].sem_logits.size();
  for (size_t i = 0; i < scene.gaussians.size(); ++i) {
    const auto& g = scene.gaussians[i];
    auto bad = [&](const char* what) {
      // Malformed scene content is bad input, not a runtime numeric failure.
      throw ConfigError("scene: gaussian " + std::to_string(i) + ": " + what);
    };
    if (!g.mu.allFinite() || !g.scale.allFinite() || !g.rot.allFinite() ||
        !g.color.allFinite() || !g.flow.allFinite() || !g.sem_logits.allFinite() ||
        !std::isfinite(g.opacity))
      bad("non-finite field");
    if (!(g.scale.minCoeff() > 0)) bad("non-positive scale");
    if (g.opacity < 0 || g.opacity > 1) bad("opacity outside [0,1]");
    if (g.rot.norm() <= 1e-8f) bad("degenerate quaternion");
    if (g.sem_logits.size() != sem) bad("inconsistent semantic channel count");
  }
}

void validate(const CameraRig& rig) {
  if (rig.views.empty()) throw ConfigError("rig: no views");
  for (size_t i = 0; i < rig.views.size(); ++i) {
    const auto& v = rig.views[i];
    if (v.intrinsics.width <= 0 || v.intrinsics.height <= 0 || v.intrinsics.fx <= 0 ||
        v.intrinsics.fy <= 0)
      throw ConfigError("rig: view " + std::to_string(i) + ": bad intrinsics");
    if (v.azimuth < -3.14159265f || v.azimuth >= 3.14159265f)
      throw ConfigError("rig: view " + std::to_string(i) + ": azimuth outside [-pi,pi)");
    if (i > 0 && !(v.azimuth > rig.views[i - 1].azimuth))
      throw ConfigError("rig: azimuths not strictly increasing");
  }
}

void validate(const Trajectory& traj) {
  if (traj.time_ids.size() != traj.poses.size())
    throw ConfigError("trajectory: time/pose length mismatch");
  for (size_t i = 1; i < traj.time_ids.size(); ++i)
    if (traj.time_ids[i] <= traj.time_ids[i - 1])
      throw ConfigError("trajectory: time ids not strictly increasing");
}

}  // namespace phigen
