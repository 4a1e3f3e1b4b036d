#pragma once

#include <Eigen/Dense>
#include <vector>

namespace phigen {

struct CameraIntrinsics {
  float fx = 0, fy = 0;
  float cx = 0, cy = 0;
  int width = 0, height = 0;
};

// Rigid transform mapping parent-frame points into this frame: x_local = R * x + T.
struct CameraPose {
  Eigen::Matrix3f R = Eigen::Matrix3f::Identity();
  Eigen::Vector3f T = Eigen::Vector3f::Zero();

  Eigen::Vector3f apply(const Eigen::Vector3f& x) const { return R * x + T; }

  // Camera center expressed in the parent frame.
  Eigen::Vector3f center() const { return -(R.transpose() * T); }

  CameraPose inverse() const {
    CameraPose p;
    p.R = R.transpose();
    p.T = -(R.transpose() * T);
    return p;
  }
};

// outer ∘ inner: first apply inner, then outer.
inline CameraPose compose(const CameraPose& outer, const CameraPose& inner) {
  CameraPose p;
  p.R = outer.R * inner.R;
  p.T = outer.R * inner.T + outer.T;
  return p;
}

struct RigView {
  int view_id = 0;
  float azimuth = 0;  // radians, about the ego up axis; rig order is ascending
  CameraIntrinsics intrinsics;
  CameraPose pose;  // ego frame -> camera frame
};

struct CameraRig {
  std::vector<RigView> views;
};

// Ego poses (world frame -> ego frame) sampled at strictly increasing frame ids.
struct Trajectory {
  std::vector<int> time_ids;
  std::vector<CameraPose> poses;
};

void validate(const CameraRig& rig);
void validate(const Trajectory& traj);

}  // namespace phigen
