#include "phigen/synth.hpp"

#include <cmath>

namespace phigen {
namespace {

Eigen::VectorXf one_hot_logits(int cls, int classes) {
  Eigen::VectorXf l = Eigen::VectorXf::Zero(classes);
  l[cls] = 10.0f;  // softmax gives ~0.9997 mass on cls
  return l;
}

Gaussian4D make_g(const Eigen::Vector3f& mu, const Eigen::Vector3f& scale,
                  const Eigen::Vector3f& color, int cls, int classes, float opacity = 1.0f) {
  Gaussian4D g;
  g.mu = mu;
  g.scale = scale;
  g.color = color;
  g.opacity = opacity;
  g.sem_logits = one_hot_logits(cls, classes);
  return g;
}

Eigen::Vector4f yaw_quat(float yaw) {
  return {std::cos(yaw / 2), 0, 0, std::sin(yaw / 2)};
}

float jitter(Rng& rng, float amp) { return float(rng.uniform(-amp, amp)); }

}  // namespace

CameraRig make_rig(int width, int height) {
  CameraRig rig;
  const float f = 70.0f * float(width) / 96.0f;
  int id = 0;
  for (float az : {-0.6f, 0.0f, 0.6f}) {
    RigView v;
    v.view_id = id++;
    v.azimuth = az;
    v.intrinsics = {f, f, width / 2.0f, height / 2.0f, width, height};
    const float ca = std::cos(az), sa = std::sin(az);
    // Rows are the camera axes (right, down, forward) in ego coordinates.
    v.pose.R.row(0) << sa, -ca, 0;
    v.pose.R.row(1) << 0, 0, -1;
    v.pose.R.row(2) << ca, sa, 0;
    v.pose.T.setZero();
    rig.views.push_back(v);
  }
  return rig;
}

Trajectory make_trajectory(double speed, int frames) {
  Trajectory traj;
  for (int t = 0; t < frames; ++t) {
    traj.time_ids.push_back(t);
    CameraPose p;  // world -> ego, axes aligned
    p.T = -Eigen::Vector3f(float(speed * t), -1.75f, 1.5f);
    traj.poses.push_back(p);
  }
  return traj;
}

GaussianScene make_scene(Rng rng, const SynthParams& p) {
  GaussianScene scene;
  const int C = p.classes;
  const float x_min = -8.0f, x_max = 90.0f;

  // Road surface: y in [-3.5, 3.5], 1 m grid of flat pancakes.
  for (float x = x_min; x <= x_max; x += 1.0f)
    for (float y = -3.5f; y <= 3.5f; y += 1.0f) {
      const float shade = 0.25f + jitter(rng, 0.03f);
      scene.gaussians.push_back(make_g({x + jitter(rng, 0.15f), y + jitter(rng, 0.15f), 0.0f},
                                       {0.55f, 0.55f, 0.02f}, {shade, shade, shade + 0.01f},
                                       seg::kRoad, C));
    }

  // Center dashes every 4 m and continuous side lines at y = +-3.4.
  for (float x = x_min; x <= x_max; x += 4.0f)
    scene.gaussians.push_back(make_g({x, 0.0f, 0.015f}, {0.6f, 0.08f, 0.01f},
                                     {0.9f, 0.9f, 0.88f}, seg::kLane, C, 0.95f));
  for (float x = x_min; x <= x_max; x += 1.0f)
    for (float side : {-3.4f, 3.4f})
      scene.gaussians.push_back(make_g({x, side, 0.015f}, {0.5f, 0.06f, 0.01f},
                                       {0.85f, 0.85f, 0.84f}, seg::kLane, C, 0.95f));

  // Ground planes beside the road out to |y| = 30.
  for (float x = x_min; x <= x_max; x += 2.0f)
    for (float ay = 4.5f; ay <= 30.0f; ay += 2.0f)
      for (float sign : {-1.0f, 1.0f}) {
        const Eigen::Vector3f base(0.30f, 0.42f, 0.22f);
        Eigen::Vector3f col = base + Eigen::Vector3f(jitter(rng, 0.05f), jitter(rng, 0.05f),
                                                     jitter(rng, 0.03f));
        scene.gaussians.push_back(make_g(
            {x + jitter(rng, 0.4f), sign * ay + jitter(rng, 0.4f), 0.0f},
            {1.1f, 1.1f, 0.05f}, col, seg::kGround, C));
      }

  // Buildings: Gaussian shells on box walls, some yawed off-axis. Heights are
  // capped so distant facades stay below the front view's upper rows and the
  // horizon remains sky.
  const int n_buildings = p.max_buildings;
  for (int b = 0; b < n_buildings; ++b) {
    Rng brng = rng.split(100 + uint64_t(b));
    const float w = float(brng.uniform(4.0, 8.0));
    const float d = float(brng.uniform(4.0, 8.0));
    const float h = float(brng.uniform(3.5, 6.5));
    const float side = (b % 2 == 0) ? 1.0f : -1.0f;
    const float cy = side * float(brng.uniform(8.0 + d / 2, 18.0));
    const float cx = x_min + 10.0f + float(b / 2) * 18.0f + float(brng.uniform(-3.0, 3.0));
    const float yaw = (b % 3 == 0) ? float(brng.uniform(-0.5, 0.5)) : 0.0f;
    const Eigen::Vector3f col(0.55f + float(brng.uniform(0.0, 0.25)),
                              0.35f + float(brng.uniform(0.0, 0.25)),
                              0.25f + float(brng.uniform(0.0, 0.20)));
    const Eigen::Matrix3f Ryaw = quat_to_rot(yaw_quat(yaw));
    auto add_wall_point = [&](float lx, float ly, float lz) {
      Eigen::Vector3f local(lx, ly, 0);
      Eigen::Vector3f world = Ryaw * local + Eigen::Vector3f(cx, cy, 0);
      world.z() = lz;
      Gaussian4D g = make_g(world, {1.0f, 1.0f, 1.0f},
                            col + Eigen::Vector3f::Constant(jitter(brng, 0.03f)),
                            seg::kBuilding, C, 0.98f);
      g.rot = yaw_quat(yaw);
      scene.gaussians.push_back(g);
    };
    for (float z = 1.0f; z <= h; z += 2.0f) {
      for (float lx = -w / 2; lx <= w / 2; lx += 2.0f) {
        add_wall_point(lx, -d / 2, z);
        add_wall_point(lx, d / 2, z);
      }
      for (float ly = -d / 2 + 2.0f; ly <= d / 2 - 2.0f; ly += 2.0f) {
        add_wall_point(-w / 2, ly, z);
        add_wall_point(w / 2, ly, z);
      }
    }
  }

  // Vehicles: 4.2 x 1.8 x 1.5 Gaussian boxes in both lanes. The same-lane ones
  // start far enough ahead that the ego never reaches them within an episode.
  const Eigen::Vector3f vehicle_colors[3] = {
      {0.75f, 0.12f, 0.12f}, {0.12f, 0.25f, 0.75f}, {0.80f, 0.70f, 0.10f}};
  const int n_vehicles = p.max_vehicles;
  for (int v = 0; v < n_vehicles; ++v) {
    Rng vrng = rng.split(200 + uint64_t(v));
    const bool same_lane = (v % 2 == 0);
    const float lane_y = same_lane ? -1.75f : 1.75f;
    const float speed = float(vrng.uniform(0.3, 0.8)) * (same_lane ? 1.0f : -1.0f);
    const float cx = same_lane ? float(vrng.uniform(35.0, 55.0)) : float(vrng.uniform(25.0, 60.0));
    const Eigen::Vector3f col = vehicle_colors[v % 3];
    for (int ix = 0; ix < 3; ++ix)
      for (int iy = 0; iy < 2; ++iy)
        for (int iz = 0; iz < 2; ++iz) {
          Gaussian4D g = make_g({cx + (float(ix) - 1.0f) * 1.4f, lane_y + (float(iy) - 0.5f) * 0.9f,
                                 0.575f + float(iz) * 0.75f},
                                {0.7f, 0.45f, 0.38f}, col, seg::kVehicle, C, 0.95f);
          g.flow = {speed, 0.0f, 0.0f};
          scene.gaussians.push_back(g);
        }
  }

  scene.dynamic_mask.assign(scene.size(), 0);
  for (size_t i = 0; i < scene.size(); ++i) {
    int best = 0;
    scene.gaussians[i].sem_logits.maxCoeff(&best);
    scene.dynamic_mask[i] = best == seg::kVehicle ? 1 : 0;
  }
  scene.time_index = 0;
  return scene;
}

EpisodeSpec make_episode(uint64_t dataset_seed, int index, const SynthParams& p) {
  EpisodeSpec ep;
  Rng root = Rng(dataset_seed).split(rngstream::kDataset).split(uint64_t(index));
  ep.seed = root.next_u64();
  Rng scene_rng = root.split(1);
  ep.speed = root.split(2).uniform(p.speed_min, p.speed_max);
  ep.scene = make_scene(scene_rng, p);
  ep.trajectory = make_trajectory(ep.speed, p.frames);
  return ep;
}

GaussianScene random_test_scene(Rng rng, int n, int classes) {
  GaussianScene scene;
  for (int i = 0; i < n; ++i) {
    Gaussian4D g;
    // In front of a camera at the origin looking down +z.
    g.mu = {float(rng.uniform(-4.0, 4.0)), float(rng.uniform(-3.0, 3.0)),
            float(rng.uniform(1.0, 12.0))};
    g.scale = {float(rng.uniform(0.05, 0.8)), float(rng.uniform(0.05, 0.8)),
               float(rng.uniform(0.05, 0.8))};
    Eigen::Vector4f q{float(rng.normal()), float(rng.normal()), float(rng.normal()),
                      float(rng.normal())};
    if (q.norm() < 1e-3f) q = {1, 0, 0, 0};
    g.rot = q.normalized();
    g.opacity = float(rng.uniform(0.05, 1.0));
    g.color = {float(rng.uniform(0.0, 1.0)), float(rng.uniform(0.0, 1.0)),
               float(rng.uniform(0.0, 1.0))};
    g.sem_logits = Eigen::VectorXf::Zero(classes);
    for (int c = 0; c < classes; ++c) g.sem_logits[c] = float(rng.uniform(-2.0, 2.0));
    g.flow = {float(rng.uniform(-0.5, 0.5)), float(rng.uniform(-0.5, 0.5)),
              float(rng.uniform(-0.5, 0.5))};
    scene.gaussians.push_back(g);
  }
  scene.dynamic_mask.assign(scene.size(), 0);
  return scene;
}

}  // namespace phigen
