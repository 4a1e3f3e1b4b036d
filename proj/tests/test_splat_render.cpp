#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <cmath>
#include <cstring>

#include "doctest.h"
#include "phigen/raster.hpp"
#include "phigen/rng.hpp"
#include "phigen/synth.hpp"

using namespace phigen;

namespace {

CameraIntrinsics square_intr() { return {60, 60, 32, 32, 64, 64}; }

GaussianScene one_gaussian(Eigen::Vector3f mu, Eigen::Vector3f scale, float opacity,
                           Eigen::Vector3f color, int classes = 4) {
  GaussianScene s;
  Gaussian4D g;
  g.mu = mu;
  g.scale = scale;
  g.opacity = opacity;
  g.color = color;
  g.sem_logits = Eigen::VectorXf::Zero(classes);
  s.gaussians = {g};
  s.dynamic_mask = {0};
  return s;
}

double max_abs_diff(const std::vector<float>& a, const std::vector<float>& b) {
  REQUIRE(a.size() == b.size());
  double m = 0;
  for (size_t i = 0; i < a.size(); ++i) m = std::max(m, double(std::abs(a[i] - b[i])));
  return m;
}

}  // namespace

TEST_CASE("tiled renderer matches brute-force reference on random scenes") {
  const CameraIntrinsics intr = square_intr();
  const CameraPose pose;  // camera at origin looking down +z
  RenderConfig cfg;
  cfg.background = {0.2f, 0.3f, 0.4f};
  for (uint64_t seed = 0; seed < 10; ++seed) {
    GaussianScene scene = random_test_scene(Rng(seed), 200, 4);
    RenderOutput tiled = render(scene, intr, pose, cfg);
    RenderOutput ref = render_reference(scene, intr, pose, cfg);
    CHECK(max_abs_diff(tiled.rgb, ref.rgb) < 1e-4);
    CHECK(max_abs_diff(tiled.alpha, ref.alpha) < 1e-4);
    CHECK(max_abs_diff(tiled.depth, ref.depth) < 1e-3);
    CHECK(max_abs_diff(tiled.sem, ref.sem) < 1e-4);
    CHECK(tiled.skipped == ref.skipped);
  }
}

TEST_CASE("single gaussian analytic footprint") {
  const CameraIntrinsics intr = square_intr();
  const CameraPose pose;
  const float s = 0.5f, z = 5.0f, op = 0.7f;
  RenderConfig cfg;
  cfg.background = {0.1f, 0.1f, 0.1f};
  GaussianScene scene = one_gaussian({0, 0, z}, {s, s, s}, op, {1, 0, 0});
  RenderOutput out = render(scene, intr, pose, cfg);

  // Screen covariance of an on-axis isotropic gaussian is (f s / z)^2 + dilation.
  const double var = double(intr.fx) * intr.fx * s * s / (z * z) + cfg.dilation;
  // Pixel centers are offset half a pixel from the projected mean (32, 32).
  for (int px : {32, 34, 37}) {
    const double dx = px + 0.5 - 32.0, dy = 0.5;
    const double mahal = (dx * dx + dy * dy) / var;
    const double w = op * std::exp(-0.5 * mahal);
    const size_t idx = size_t(32) * 64 + px;
    CHECK(out.alpha[idx] == doctest::Approx(w).epsilon(1e-4));
    CHECK(out.rgb[idx * 3] == doctest::Approx(w * 1.0 + (1 - w) * 0.1).epsilon(1e-4));
    CHECK(out.depth[idx] == doctest::Approx(z).epsilon(1e-5));
  }
}

TEST_CASE("per-sample opacity is clamped") {
  const CameraIntrinsics intr = square_intr();
  GaussianScene scene = one_gaussian({0, 0, 10}, {3, 3, 3}, 1.0f, {1, 1, 1});
  RenderOutput out = render(scene, intr, CameraPose{});
  float peak = 0;
  for (float a : out.alpha) peak = std::max(peak, a);
  CHECK(peak == doctest::Approx(0.999).epsilon(1e-5));
}

TEST_CASE("front-to-back depth ordering and occlusion") {
  const CameraIntrinsics intr = square_intr();
  GaussianScene scene = one_gaussian({0, 0, 5}, {1.5f, 1.5f, 0.3f}, 1.0f, {1, 0, 0});
  GaussianScene back = one_gaussian({0, 0, 15}, {4, 4, 0.3f}, 1.0f, {0, 1, 0});
  scene.gaussians.push_back(back.gaussians[0]);
  scene.dynamic_mask.push_back(0);
  RenderOutput out = render(scene, intr, CameraPose{});
  const size_t center = size_t(32) * 64 + 32;
  CHECK(out.rgb[center * 3 + 0] > 0.99f);
  CHECK(out.rgb[center * 3 + 1] < 0.01f);
  CHECK(out.depth[center] == doctest::Approx(5.0).epsilon(0.01));
}

TEST_CASE("occluded content beyond the transmittance cutoff changes nothing") {
  const CameraIntrinsics intr = square_intr();
  // Two near-opaque walls drive transmittance to 1e-6 < 1e-4.
  GaussianScene walls = one_gaussian({0, 0, 10}, {3, 3, 0.2f}, 1.0f, {0.8f, 0.2f, 0.2f});
  Gaussian4D second = walls.gaussians[0];
  second.mu.z() = 12;
  walls.gaussians.push_back(second);
  walls.dynamic_mask.push_back(0);

  GaussianScene with_far = walls;
  Gaussian4D far_g = walls.gaussians[0];
  far_g.mu.z() = 30;
  far_g.color = {0, 0, 1};
  with_far.gaussians.push_back(far_g);
  with_far.dynamic_mask.push_back(0);

  RenderOutput a = render(walls, intr, CameraPose{});
  RenderOutput b = render(with_far, intr, CameraPose{});
  // At the center both walls contribute their full 0.999, so transmittance is
  // 1e-6 there; off-center the footprint decays and the far gaussian may
  // legitimately show through. The center pixel must be bit-identical.
  const size_t center = size_t(32) * 64 + 32;
  CHECK(a.rgb[center * 3 + 0] == b.rgb[center * 3 + 0]);
  CHECK(a.rgb[center * 3 + 1] == b.rgb[center * 3 + 1]);
  CHECK(a.rgb[center * 3 + 2] == b.rgb[center * 3 + 2]);
  CHECK(a.depth[center] == b.depth[center]);
}

TEST_CASE("contributions are exactly zero beyond three sigma") {
  const CameraIntrinsics intr = square_intr();
  RenderConfig cfg;
  cfg.background = {0.25f, 0.5f, 0.75f};
  GaussianScene scene = one_gaussian({0, 0, 5}, {0.1f, 0.1f, 0.1f}, 1.0f, {1, 1, 1});
  RenderOutput out = render(scene, intr, CameraPose{}, cfg);
  // var = (60*0.1/5)^2 + 0.3 = 1.74 px^2; 3 sigma is under 4 px. A pixel 20 px
  // away must be exactly background.
  const size_t idx = size_t(32) * 64 + 52;
  CHECK(out.rgb[idx * 3 + 0] == 0.25f);
  CHECK(out.rgb[idx * 3 + 1] == 0.5f);
  CHECK(out.rgb[idx * 3 + 2] == 0.75f);
  CHECK(out.alpha[idx] == 0.0f);
  CHECK(out.depth[idx] == cfg.far_sentinel);
}

TEST_CASE("projection rejects near-plane and off-image gaussians") {
  const CameraIntrinsics intr = square_intr();
  Gaussian4D g;
  g.sem_logits = Eigen::VectorXf::Zero(2);
  g.scale = {0.1f, 0.1f, 0.1f};

  g.mu = {0, 0, -1};
  CHECK(!project_gaussian(g, intr, CameraPose{}).has_value());
  g.mu = {0, 0, 0.04f};  // in front but inside the near plane
  CHECK(!project_gaussian(g, intr, CameraPose{}).has_value());
  g.mu = {100, 0, 5};  // far off the right edge
  CHECK(!project_gaussian(g, intr, CameraPose{}).has_value());
  g.mu = {0, 0, 5};
  REQUIRE(project_gaussian(g, intr, CameraPose{}).has_value());
  auto p = project_gaussian(g, intr, CameraPose{});
  CHECK(p->mean2d.x() == doctest::Approx(32).epsilon(1e-5));
  CHECK(p->depth == doctest::Approx(5).epsilon(1e-6));
}

TEST_CASE("degenerate screen covariance is skipped and tallied") {
  const CameraIntrinsics intr = square_intr();
  // A kilometer-long thin rod seen side-on: major screen variance ~1.4e8 px^2
  // against a dilation-floored minor axis of 0.3 px^2 -> condition ~5e8. The
  // proximity cull is disabled so the conditioning path itself is exercised.
  GaussianScene scene = one_gaussian({0, 0, 5}, {1000, 0.001f, 0.001f}, 1.0f, {1, 0, 0});
  RenderConfig cfg;
  cfg.min_z_over_scale = 0;
  RenderOutput out = render(scene, intr, CameraPose{}, cfg);
  CHECK(out.skipped == 1);
  for (float v : out.rgb) CHECK(std::isfinite(v));
  const size_t center = size_t(32) * 64 + 32;
  CHECK(out.alpha[center] == 0.0f);
}

TEST_CASE("renderer output is invariant to worker count") {
  const CameraIntrinsics intr = square_intr();
  GaussianScene scene = random_test_scene(Rng(5), 150, 4);
  RenderConfig one;
  one.threads = 1;
  RenderConfig four;
  four.threads = 4;
  RenderOutput a = render(scene, intr, CameraPose{}, one);
  RenderOutput b = render(scene, intr, CameraPose{}, four);
  CHECK(std::memcmp(a.rgb.data(), b.rgb.data(), a.rgb.size() * 4) == 0);
  CHECK(std::memcmp(a.depth.data(), b.depth.data(), a.depth.size() * 4) == 0);
  CHECK(std::memcmp(a.alpha.data(), b.alpha.data(), a.alpha.size() * 4) == 0);
  CHECK(std::memcmp(a.sem.data(), b.sem.data(), a.sem.size() * 4) == 0);
}

TEST_CASE("empty scene renders pure background") {
  const CameraIntrinsics intr = square_intr();
  RenderConfig cfg;
  cfg.background = {0.62f, 0.76f, 0.92f};
  GaussianScene scene;
  RenderOutput out = render(scene, intr, CameraPose{}, cfg);
  for (size_t i = 0; i < out.alpha.size(); ++i) {
    CHECK(out.alpha[i] == 0.0f);
    CHECK(out.depth[i] == cfg.far_sentinel);
    CHECK(out.rgb[i * 3 + 0] == 0.62f);
  }
}

TEST_CASE("semantics composite as normalized distributions") {
  const CameraIntrinsics intr = square_intr();
  GaussianScene scene = one_gaussian({0, 0, 5}, {1, 1, 1}, 0.5f, {1, 1, 1});
  scene.gaussians[0].sem_logits << 2, 0, -1, 0.5f;
  RenderOutput out = render(scene, intr, CameraPose{});

  // Per-gaussian logits are softmaxed before compositing, so any covered pixel
  // carries exactly that distribution after normalization.
  Eigen::Vector4f l;
  l << 2, 0, -1, 0.5f;
  Eigen::Vector4f p = (l.array() - l.maxCoeff()).exp();
  p /= p.sum();
  const size_t center = size_t(32) * 64 + 32;
  REQUIRE(out.alpha[center] > 0.1f);
  double sum = 0;
  for (int c = 0; c < 4; ++c) {
    CHECK(out.sem[center * 4 + c] == doctest::Approx(p[c]).epsilon(1e-4));
    sum += out.sem[center * 4 + c];
  }
  CHECK(sum == doctest::Approx(1.0).epsilon(1e-4));
}

TEST_CASE("trajectory rendering advects dynamic content") {
  SynthParams params;
  const CameraRig rig = make_rig(96, 64);
  GaussianScene scene = one_gaussian({10, -1.75f, 1.5f}, {0.5f, 0.5f, 0.5f}, 0.9f, {1, 0, 0}, 6);
  scene.gaussians[0].flow = {0.4f, 0, 0};
  scene.dynamic_mask = {1};
  Trajectory traj = make_trajectory(1.0, 3);

  RenderConfig cfg;
  cfg.background = background_color();
  auto outs = render_trajectory(scene, rig, traj, cfg);
  REQUIRE(outs.size() == 9);  // time-major, view-minor

  // Frame 2, front view must equal a manual advect + compose render, bitwise.
  GaussianScene moved = advect(scene, 2);
  CameraPose world_to_cam = compose(rig.views[1].pose, traj.poses[2]);
  RenderOutput manual = render(moved, rig.views[1].intrinsics, world_to_cam, cfg);
  const RenderOutput& got = outs[2 * 3 + 1];
  CHECK(std::memcmp(got.rgb.data(), manual.rgb.data(), manual.rgb.size() * 4) == 0);

  // Without advection the scene is frozen: frame 0 equals frame 2 rendered
  // from frame 2's pose with the unmoved scene.
  auto frozen = render_trajectory(scene, rig, traj, cfg, false);
  RenderOutput manual_frozen = render(scene, rig.views[1].intrinsics, world_to_cam, cfg);
  CHECK(std::memcmp(frozen[2 * 3 + 1].rgb.data(), manual_frozen.rgb.data(),
                    manual_frozen.rgb.size() * 4) == 0);
}

TEST_CASE("synthetic episode renders with full coverage below the horizon") {
  SynthParams p;
  EpisodeSpec ep = make_episode(3, 0, p);
  const CameraRig rig = make_rig(p.width, p.height);
  RenderConfig cfg;
  cfg.background = background_color();
  CameraPose world_to_cam = compose(rig.views[1].pose, ep.trajectory.poses[0]);
  RenderOutput out = render(ep.scene, rig.views[1].intrinsics, world_to_cam, cfg);

  // Bottom rows look at the road: covered, depth within the supervised range.
  int covered = 0;
  for (int y = p.height - 8; y < p.height; ++y)
    for (int x = 0; x < p.width; ++x) {
      const size_t i = size_t(y) * p.width + x;
      if (out.alpha[i] > 0.5f && out.depth[i] < 60.0f) ++covered;
    }
  CHECK(covered > 8 * p.width * 9 / 10);

  // Top rows look at the sky: background there.
  int sky = 0;
  for (int x = 0; x < p.width; ++x)
    if (out.alpha[size_t(0) * p.width + x] < 0.1f) ++sky;
  CHECK(sky > p.width * 8 / 10);
}
