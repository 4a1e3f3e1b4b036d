#pragma once

#include "phigen/camera.hpp"
#include "phigen/rng.hpp"
#include "phigen/scene.hpp"

namespace phigen {

// Semantic palette of the synthetic driving world. Sky has no Gaussians; it is
// the class assigned wherever nothing is rendered.
namespace seg {
constexpr int kRoad = 0;
constexpr int kLane = 1;
constexpr int kBuilding = 2;
constexpr int kVehicle = 3;
constexpr int kGround = 4;
constexpr int kSky = 5;
}  // namespace seg

inline Eigen::Vector3f background_color() { return {0.62f, 0.76f, 0.92f}; }

struct SynthParams {
  int width = 96;
  int height = 64;
  int frames = 18;
  int classes = 6;
  int max_vehicles = 3;
  int max_buildings = 10;
  double speed_min = 0.9;
  double speed_max = 1.3;
};

// One generated episode: a world-frame scene at frame 0 (dynamic Gaussians
// carry per-frame flow) plus the ego trajectory that observes it.
struct EpisodeSpec {
  uint64_t seed = 0;
  double speed = 0;  // ego meters per frame
  GaussianScene scene;
  Trajectory trajectory;
};

// Three-view rig (left/front/right, azimuths -0.6/0/+0.6 rad) sharing one
// pinhole model; fx = fy = 70 * width / 96, principal point at the center.
CameraRig make_rig(int width, int height);

// Straight constant-speed ego motion down the right lane: world position
// (speed * t, -1.75, 1.5), axes aligned with the world frame (x forward,
// y left, z up). Poses map world -> ego.
Trajectory make_trajectory(double speed, int frames);

// Road/lane/ground/building/vehicle world. Deterministic in rng; vehicles are
// the only dynamic content (constant flow along x, dynamic flag set).
GaussianScene make_scene(Rng rng, const SynthParams& p);

EpisodeSpec make_episode(uint64_t dataset_seed, int index, const SynthParams& p);

// Unstructured random scene inside the camera frustum, for renderer oracle
// tests: n Gaussians, anisotropic scales, random one-hot-ish semantics.
GaussianScene random_test_scene(Rng rng, int n, int classes);

}  // namespace phigen
