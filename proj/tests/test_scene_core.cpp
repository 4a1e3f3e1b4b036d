#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <cmath>
#include <set>

#include "doctest.h"
#include "phigen/error.hpp"
#include "phigen/rng.hpp"
#include "phigen/scene.hpp"
#include "phigen/synth.hpp"

using namespace phigen;

namespace {
Gaussian4D basic_gaussian(int classes = 3) {
  Gaussian4D g;
  g.sem_logits = Eigen::VectorXf::Zero(classes);
  return g;
}
}  // namespace

TEST_CASE("quat_to_rot known rotations") {
  // Identity.
  CHECK((quat_to_rot({1, 0, 0, 0}) - Eigen::Matrix3f::Identity()).norm() == doctest::Approx(0));
  // 90 degrees about z maps x to y.
  const float s = std::sqrt(0.5f);
  Eigen::Matrix3f R = quat_to_rot({s, 0, 0, s});
  Eigen::Vector3f y = R * Eigen::Vector3f(1, 0, 0);
  CHECK(y.x() == doctest::Approx(0).epsilon(1e-6));
  CHECK(y.y() == doctest::Approx(1).epsilon(1e-6));
  // Unnormalized input is normalized first.
  Eigen::Matrix3f R2 = quat_to_rot({2 * s, 0, 0, 2 * s});
  CHECK((R - R2).norm() == doctest::Approx(0).epsilon(1e-6));
}

TEST_CASE("quat_to_rot rejects near-zero quaternions") {
  CHECK_THROWS_AS(quat_to_rot({0, 0, 0, 0}), NumericError);
}

TEST_CASE("rotation matrices are orthonormal with determinant 1") {
  Rng rng(11);
  for (int i = 0; i < 50; ++i) {
    Eigen::Vector4f q{float(rng.normal()), float(rng.normal()), float(rng.normal()),
                      float(rng.normal())};
    if (q.norm() < 1e-3f) continue;
    Eigen::Matrix3f R = quat_to_rot(q);
    CHECK((R * R.transpose() - Eigen::Matrix3f::Identity()).norm() < 1e-5f);
    CHECK(R.determinant() == doctest::Approx(1).epsilon(1e-5));
  }
}

TEST_CASE("quat_mul matches rotation composition") {
  Rng rng(12);
  for (int i = 0; i < 50; ++i) {
    Eigen::Vector4f a{float(rng.normal()), float(rng.normal()), float(rng.normal()),
                      float(rng.normal())};
    Eigen::Vector4f b{float(rng.normal()), float(rng.normal()), float(rng.normal()),
                      float(rng.normal())};
    if (a.norm() < 1e-3f || b.norm() < 1e-3f) continue;
    a.normalize();
    b.normalize();
    Eigen::Matrix3f lhs = quat_to_rot(quat_mul(a, b));
    Eigen::Matrix3f rhs = quat_to_rot(a) * quat_to_rot(b);
    CHECK((lhs - rhs).norm() < 1e-5f);
  }
}

TEST_CASE("rot_to_quat round trip, w nonnegative") {
  Rng rng(13);
  for (int i = 0; i < 100; ++i) {
    Eigen::Vector4f q{float(rng.normal()), float(rng.normal()), float(rng.normal()),
                      float(rng.normal())};
    if (q.norm() < 1e-3f) continue;
    q.normalize();
    Eigen::Matrix3f R = quat_to_rot(q);
    Eigen::Vector4f p = rot_to_quat(R);
    CHECK(p[0] >= 0);
    CHECK(p.norm() == doctest::Approx(1).epsilon(1e-5));
    CHECK((quat_to_rot(p) - R).norm() < 1e-5f);
  }
}

TEST_CASE("covariance eigenvalues are squared scales") {
  Rng rng(14);
  Eigen::Vector3f scale(0.5f, 1.5f, 3.0f);
  Eigen::Vector4f q{float(rng.normal()), float(rng.normal()), float(rng.normal()),
                    float(rng.normal())};
  q.normalize();
  Eigen::Matrix3f S = covariance(scale, q);
  CHECK((S - S.transpose()).norm() < 1e-6f);
  Eigen::SelfAdjointEigenSolver<Eigen::Matrix3f> es(S);
  Eigen::Vector3f ev = es.eigenvalues();
  CHECK(ev[0] == doctest::Approx(0.25).epsilon(1e-4));
  CHECK(ev[1] == doctest::Approx(2.25).epsilon(1e-4));
  CHECK(ev[2] == doctest::Approx(9.0).epsilon(1e-4));
}

TEST_CASE("advect moves by flow and composes additively") {
  GaussianScene s;
  Gaussian4D g = basic_gaussian();
  g.mu = {1, 2, 3};
  g.flow = {0.5f, -0.25f, 0};
  s.gaussians = {g};
  s.dynamic_mask = {1};

  GaussianScene s3 = advect(s, 3);
  CHECK(s3.time_index == 3);
  CHECK(s3.gaussians[0].mu.x() == doctest::Approx(2.5));
  CHECK(s3.gaussians[0].mu.y() == doctest::Approx(1.25));

  GaussianScene split = advect(advect(s, 2), 1);
  CHECK((split.gaussians[0].mu - s3.gaussians[0].mu).norm() == doctest::Approx(0));
  CHECK(split.time_index == 3);

  GaussianScene back = advect(s3, -3);
  CHECK((back.gaussians[0].mu - s.gaussians[0].mu).norm() == doctest::Approx(0));
  CHECK(back.time_index == 0);
}

TEST_CASE("split_dynamic uses argmax with ties to the lowest class") {
  GaussianScene s;
  Gaussian4D a = basic_gaussian(3);
  a.sem_logits << 1, 5, 0;  // class 1
  Gaussian4D b = basic_gaussian(3);
  b.sem_logits << 2, 2, 1;  // tie between 0 and 1 -> class 0
  Gaussian4D c = basic_gaussian(3);
  c.sem_logits << 0, 0, 7;  // class 2
  s.gaussians = {a, b, c};
  s.dynamic_mask = {0, 0, 0};

  GaussianScene out = split_dynamic(s, std::set<int>{1, 2});
  CHECK(out.dynamic_mask[0] == 1);  // argmax 1 is dynamic
  CHECK(out.dynamic_mask[1] == 0);  // tie resolves to 0, not dynamic
  CHECK(out.dynamic_mask[2] == 1);
}

TEST_CASE("insert_asset transforms positions, orientations, and flow") {
  GaussianScene base;
  Gaussian4D host = basic_gaussian();
  base.gaussians = {host};
  base.dynamic_mask = {0};

  GaussianScene asset;
  Gaussian4D g = basic_gaussian();
  g.mu = {1, 0, 0};
  g.flow = {1, 0, 0};
  g.rot = {1, 0, 0, 0};
  asset.gaussians = {g};
  asset.dynamic_mask = {1};

  CameraPose pose;  // rotate 90 degrees about z, then translate
  const float s = std::sqrt(0.5f);
  pose.R = quat_to_rot({s, 0, 0, s});
  pose.T = {10, 0, 0};

  GaussianScene out = insert_asset(base, asset, pose);
  REQUIRE(out.size() == 2);
  const Gaussian4D& t = out.gaussians[1];
  CHECK(t.mu.x() == doctest::Approx(10).epsilon(1e-5));
  CHECK(t.mu.y() == doctest::Approx(1).epsilon(1e-5));
  CHECK(t.flow.x() == doctest::Approx(0).epsilon(1e-5));
  CHECK(t.flow.y() == doctest::Approx(1).epsilon(1e-5));
  // Orientation is composed: world covariance matches R S R^T.
  Eigen::Matrix3f want = pose.R * covariance(g.scale, g.rot) * pose.R.transpose();
  Eigen::Matrix3f got = covariance(t.scale, t.rot);
  CHECK((want - got).norm() < 1e-5f);
  CHECK(out.dynamic_mask[1] == 1);
}

TEST_CASE("insert_asset rejects mismatched semantic channels") {
  GaussianScene base;
  base.gaussians = {basic_gaussian(3)};
  base.dynamic_mask = {0};
  GaussianScene asset;
  asset.gaussians = {basic_gaussian(4)};
  asset.dynamic_mask = {0};
  CHECK_THROWS_AS(insert_asset(base, asset, CameraPose{}), ConfigError);
}

TEST_CASE("scene validation rejects structural violations") {
  GaussianScene ok;
  ok.gaussians = {basic_gaussian()};
  ok.dynamic_mask = {0};
  CHECK_NOTHROW(validate(ok));

  GaussianScene bad_mask = ok;
  bad_mask.dynamic_mask.clear();
  CHECK_THROWS_AS(validate(bad_mask), ConfigError);

  GaussianScene bad_scale = ok;
  bad_scale.gaussians[0].scale.x() = 0;
  CHECK_THROWS_AS(validate(bad_scale), ConfigError);

  GaussianScene bad_opacity = ok;
  bad_opacity.gaussians[0].opacity = 1.5f;
  CHECK_THROWS_AS(validate(bad_opacity), ConfigError);

  GaussianScene bad_finite = ok;
  bad_finite.gaussians[0].mu.x() = std::numeric_limits<float>::quiet_NaN();
  CHECK_THROWS_AS(validate(bad_finite), ConfigError);

  GaussianScene bad_channels = ok;
  bad_channels.gaussians.push_back(basic_gaussian(5));
  bad_channels.dynamic_mask.push_back(0);
  CHECK_THROWS_AS(validate(bad_channels), ConfigError);
}

TEST_CASE("rig and trajectory validation") {
  CameraRig rig = make_rig(96, 64);
  CHECK_NOTHROW(validate(rig));
  std::swap(rig.views[0], rig.views[1]);  // azimuths no longer ascending
  CHECK_THROWS_AS(validate(rig), ConfigError);

  Trajectory traj = make_trajectory(1.0, 5);
  CHECK_NOTHROW(validate(traj));
  traj.time_ids[3] = traj.time_ids[2];
  CHECK_THROWS_AS(validate(traj), ConfigError);
}

TEST_CASE("pose compose and inverse") {
  Rng rng(15);
  CameraPose a, b;
  a.R = quat_to_rot(Eigen::Vector4f{float(rng.normal()), float(rng.normal()),
                                    float(rng.normal()), float(rng.normal())}
                        .normalized());
  a.T = {1, -2, 3};
  b.R = quat_to_rot(Eigen::Vector4f{float(rng.normal()), float(rng.normal()),
                                    float(rng.normal()), float(rng.normal())}
                        .normalized());
  b.T = {0.5f, 4, -1};
  Eigen::Vector3f x{0.3f, -0.7f, 2.0f};
  CHECK((compose(a, b).apply(x) - a.apply(b.apply(x))).norm() < 1e-5f);
  CHECK((a.inverse().apply(a.apply(x)) - x).norm() < 1e-5f);
  // center() is the point that maps to the origin.
  CHECK(a.apply(a.center()).norm() < 1e-5f);
}

TEST_CASE("rng streams are deterministic and split-independent") {
  Rng a(42), b(42);
  for (int i = 0; i < 100; ++i) CHECK(a.next_u64() == b.next_u64());

  // A child stream does not depend on the parent's draw position.
  Rng p1(7), p2(7);
  (void)p1.uniform();
  (void)p1.uniform();
  Rng c1 = p1.split(3), c2 = p2.split(3);
  for (int i = 0; i < 10; ++i) CHECK(c1.next_u64() == c2.next_u64());

  // Different tags give different streams.
  Rng d1 = p2.split(4);
  bool any_diff = false;
  Rng c3 = p2.split(3);
  for (int i = 0; i < 10; ++i) any_diff |= (c3.next_u64() != d1.next_u64());
  CHECK(any_diff);
}

TEST_CASE("rng uniform statistics") {
  Rng rng(123);
  double sum = 0;
  const int n = 1000000;
  for (int i = 0; i < n; ++i) {
    double u = rng.uniform();
    CHECK(u >= 0.0);
    CHECK(u < 1.0);
    sum += u;
  }
  CHECK(std::abs(sum / n - 0.5) < 0.01);
}

TEST_CASE("rng normal moments") {
  Rng rng(321);
  double sum = 0, sum2 = 0;
  const int n = 200000;
  for (int i = 0; i < n; ++i) {
    double v = rng.normal();
    sum += v;
    sum2 += v * v;
  }
  CHECK(std::abs(sum / n) < 0.01);
  CHECK(std::abs(sum2 / n - 1.0) < 0.02);
}

TEST_CASE("synthetic episode structure") {
  SynthParams p;
  EpisodeSpec ep = make_episode(99, 0, p);
  CHECK_NOTHROW(validate(ep.scene));
  CHECK_NOTHROW(validate(ep.trajectory));
  CHECK(int(ep.trajectory.time_ids.size()) == p.frames);
  CHECK(ep.speed >= p.speed_min);
  CHECK(ep.speed <= p.speed_max);
  CHECK(ep.scene.size() > 1000);

  // Dynamic content is exactly the vehicle class and carries nonzero flow.
  int dynamic = 0;
  for (size_t i = 0; i < ep.scene.size(); ++i) {
    int best = 0;
    ep.scene.gaussians[i].sem_logits.maxCoeff(&best);
    const bool is_vehicle = best == seg::kVehicle;
    CHECK(bool(ep.scene.dynamic_mask[i]) == is_vehicle);
    if (ep.scene.dynamic_mask[i]) {
      ++dynamic;
      CHECK(std::abs(ep.scene.gaussians[i].flow.x()) > 0.1f);
    } else {
      CHECK(ep.scene.gaussians[i].flow.norm() == 0.0f);
    }
  }
  CHECK(dynamic > 0);

  // Same seed reproduces the episode; different index varies it.
  EpisodeSpec ep2 = make_episode(99, 0, p);
  CHECK(ep2.scene.size() == ep.scene.size());
  CHECK((ep2.scene.gaussians[0].mu - ep.scene.gaussians[0].mu).norm() == 0.0f);
  CHECK(ep2.speed == ep.speed);
  EpisodeSpec other = make_episode(99, 1, p);
  CHECK(other.speed != ep.speed);
}
