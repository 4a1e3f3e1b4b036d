#pragma once

#include <Eigen/Dense>
#include <cstdint>
#include <set>
#include <vector>

#include "phigen/camera.hpp"

namespace phigen {

// One anisotropic Gaussian primitive with per-frame linear motion.
struct Gaussian4D {
  Eigen::Vector3f mu = Eigen::Vector3f::Zero();       // world position, meters
  Eigen::Vector3f scale = Eigen::Vector3f::Ones();    // per-axis stddev, meters, > 0
  Eigen::Vector4f rot{1, 0, 0, 0};                    // unit quaternion, w x y z
  float opacity = 1.0f;                               // [0, 1]
  Eigen::Vector3f color = Eigen::Vector3f::Zero();    // linear rgb, [0, 1]
  Eigen::VectorXf sem_logits;                         // C semantic class logits
  Eigen::Vector3f flow = Eigen::Vector3f::Zero();     // meters per frame
};

struct GaussianScene {
  std::vector<Gaussian4D> gaussians;
  int time_index = 0;
  std::vector<uint8_t> dynamic_mask;  // same length as gaussians

  size_t size() const { return gaussians.size(); }
};

// Rotation matrix of a quaternion. Normalizes first; throws NumericError when
// the norm is too small to normalize.
Eigen::Matrix3f quat_to_rot(const Eigen::Vector4f& q);

// Hamilton product a*b (both w x y z).
Eigen::Vector4f quat_mul(const Eigen::Vector4f& a, const Eigen::Vector4f& b);

// Unit quaternion of a rotation matrix (Shepperd's method, w >= 0).
Eigen::Vector4f rot_to_quat(const Eigen::Matrix3f& R);

// World-frame covariance R diag(scale^2) R^T. Symmetric PSD by construction.
Eigen::Matrix3f covariance(const Eigen::Vector3f& scale, const Eigen::Vector4f& rot);

// Linear motion model: mu += flow * dt for every Gaussian, time_index += dt.
// Flow is constant per frame-step, so advect(advect(s,a),b) == advect(s,a+b).
GaussianScene advect(const GaussianScene& scene, int dt);

// Recomputes dynamic_mask: true where argmax(sem_logits) is in dynamic_classes.
// Ties resolve to the lowest class index.
GaussianScene split_dynamic(const GaussianScene& scene, const std::set<int>& dynamic_classes);

// Appends a rigidly transformed copy of asset into scene (x -> R x + T applied
// to positions, rotations, and flows). Semantic channel counts must match.
GaussianScene insert_asset(const GaussianScene& scene, const GaussianScene& asset,
                           const CameraPose& pose);

// Structural invariants: finite fields, positive scales, opacity in [0,1],
// consistent sem channel counts, mask length. Throws on violation.
void validate(const GaussianScene& scene);

}  // namespace phigen
