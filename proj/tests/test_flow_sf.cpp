#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <unistd.h>

#include <cmath>
#include <filesystem>

#include "doctest.h"
#include "phigen/flow.hpp"
#include "phigen/gradcheck.hpp"
#include "phigen/stereo_forcing.hpp"

using namespace phigen;

namespace {

constexpr double kTol = 1e-4;

std::string temp_dir() {
  static int counter = 0;
  auto dir = std::filesystem::temp_directory_path() /
             ("phigen_fs_" + std::to_string(::getpid()) + "_" + std::to_string(counter++));
  std::filesystem::create_directories(dir);
  return dir.string();
}

template <class S>
void fill_uniform(Tensor<S>& t, Rng& rng, double lo = -1.0, double hi = 1.0) {
  for (auto& v : t.data) v = S(rng.uniform(lo, hi));
}

void check_entry(const GradCheckEntry& e) {
  INFO(e.name, " max_rel_err=", e.max_rel_err);
  CHECK(e.max_rel_err < kTol);
}

}  // namespace

// --- time embedding and residual blocks --------------------------------------

TEST_CASE("time features interleave sines and cosines") {
  const Tensor<float> e0 = time_features(0.0f, 8);
  CHECK(e0.shape == std::vector<int>{1, 8});
  for (int i = 0; i < 4; ++i) {
    CHECK(e0.data[size_t(2 * i)] == 0.0f);
    CHECK(e0.data[size_t(2 * i + 1)] == 1.0f);
  }
  const float t = 0.003f;
  const Tensor<float> e = time_features(t, 8);
  CHECK(e.data[0] == doctest::Approx(std::sin(1000.0f * t)));
  CHECK(e.data[1] == doctest::Approx(std::cos(1000.0f * t)));
  const float f1 = std::exp(-std::log(10000.0f) / 4.0f);
  CHECK(e.data[2] == doctest::Approx(std::sin(1000.0f * t * f1)));
}

TEST_CASE("residual block reduces to identity plus time bias when zeroed") {
  DnBlock<float> blk;
  blk.init(4, 4, 8, Rng(7));
  std::fill(blk.conv.w.data.begin(), blk.conv.w.data.end(), 0.0f);
  std::fill(blk.conv.b.data.begin(), blk.conv.b.data.end(), 0.0f);
  std::fill(blk.temb.w.data.begin(), blk.temb.w.data.end(), 0.0f);
  for (int c = 0; c < 4; ++c) blk.temb.b.data[size_t(c)] = 0.25f * float(c);
  Rng rng(8);
  Tensor<float> x({4, 4, 4});
  fill_uniform(x, rng);
  Tensor<float> t64({1, 8});
  fill_uniform(t64, rng);
  const Tensor<float> y = blk.forward(x, t64, nullptr);
  for (int c = 0; c < 4; ++c)
    for (int i = 0; i < 16; ++i)
      CHECK(y.data[size_t(c) * 16 + size_t(i)] == x.data[size_t(c) * 16 + size_t(i)] + 0.25f * float(c));
}

TEST_CASE("width-changing block drops the residual path") {
  DnBlock<float> blk;
  blk.init(6, 4, 8, Rng(9));
  std::fill(blk.conv.w.data.begin(), blk.conv.w.data.end(), 0.0f);
  std::fill(blk.conv.b.data.begin(), blk.conv.b.data.end(), 0.0f);
  std::fill(blk.temb.w.data.begin(), blk.temb.w.data.end(), 0.0f);
  std::fill(blk.temb.b.data.begin(), blk.temb.b.data.end(), 0.5f);
  Rng rng(10);
  Tensor<float> x({4, 4, 4});
  fill_uniform(x, rng);
  Tensor<float> t64({1, 8});
  fill_uniform(t64, rng);
  const Tensor<float> y = blk.forward(x, t64, nullptr);
  CHECK(y.shape == std::vector<int>{6, 4, 4});
  for (float v : y.data) CHECK(v == 0.5f);
}

// --- denoiser network ---------------------------------------------------------

TEST_CASE("fresh denoiser predicts exactly zero velocity") {
  DenoiserNet<float> net;
  net.init(4, 8, 16, Rng(11));
  Rng rng(12);
  Tensor<float> z({4, 4, 6}), cond({4, 4, 6});
  fill_uniform(z, rng);
  fill_uniform(cond, rng);
  const Tensor<float> v = net.forward(z, cond, 0.4f);
  CHECK(v.shape == z.shape);
  for (float x : v.data) CHECK(x == 0.0f);
}

TEST_CASE("denoiser rejects mismatched or odd-sized inputs") {
  DenoiserNet<float> net;
  net.init(4, 8, 16, Rng(13));
  Tensor<float> z({4, 4, 6}), bad({4, 4, 4}), odd({4, 3, 6});
  CHECK_THROWS_AS(net.forward(z, bad, 0.5f), ConfigError);
  CHECK_THROWS_AS(net.forward(odd, odd, 0.5f), ConfigError);
}

TEST_CASE("denoiser gradients match finite differences") {
  DenoiserNet<double> net;
  net.init(4, 8, 16, Rng(15));
  Rng rng(16);
  // The output convolution starts at zero, which would zero every upstream
  // gradient; perturb it so the whole graph carries signal.
  fill_uniform(net.out_conv.w, rng, -0.3, 0.3);
  fill_uniform(net.out_conv.b, rng, -0.1, 0.1);
  Tensor<double> z({4, 4, 6}), cond({4, 4, 6});
  fill_uniform(z, rng);
  fill_uniform(cond, rng);
  const double t = 0.37;

  auto loss = [&]() {
    const Tensor<double> v = net.forward(z, cond, t);
    double acc = 0;
    for (size_t i = 0; i < v.numel(); ++i) acc += v.data[i] * std::sin(0.3 * double(i) + 0.1);
    return acc;
  };

  std::vector<NamedParam<double>> params;
  net.collect(params);
  zero_grads(params);
  DenoiserCache<double> cc;
  const Tensor<double> v = net.forward(z, cond, t, &cc);
  Tensor<double> gv = zeros_like(v);
  for (size_t i = 0; i < gv.numel(); ++i) gv.data[i] = std::sin(0.3 * double(i) + 0.1);
  const Tensor<double> gzin = net.backward(cc, gv);
  z.set_requires_grad(true);
  cond.set_requires_grad(true);
  const size_t half = z.numel();
  std::copy(gzin.data.begin(), gzin.data.begin() + ptrdiff_t(half), z.grad.begin());
  std::copy(gzin.data.begin() + ptrdiff_t(half), gzin.data.end(), cond.grad.begin());

  check_entry(grad_check_tensor(loss, z, "flow.z", 1e-5, 12, 1));
  check_entry(grad_check_tensor(loss, cond, "flow.cond", 1e-5, 12, 2));
  check_entry(grad_check_tensor(loss, net.in_conv.w, "flow.in.w", 1e-5, 12, 3));
  check_entry(grad_check_tensor(loss, net.down.conv.w, "flow.down.conv.w", 1e-5, 12, 4));
  check_entry(grad_check_tensor(loss, net.down.gn.gamma, "flow.down.gn.gamma", 1e-5, 12, 5));
  check_entry(grad_check_tensor(loss, net.down.temb.w, "flow.down.temb.w", 1e-5, 12, 6));
  check_entry(grad_check_tensor(loss, net.mid.temb.w, "flow.mid.temb.w", 1e-5, 12, 7));
  check_entry(grad_check_tensor(loss, net.mid.gn.beta, "flow.mid.gn.beta", 1e-5, 12, 8));
  check_entry(grad_check_tensor(loss, net.fuse_conv.w, "flow.fuse.w", 1e-5, 12, 9));
  check_entry(grad_check_tensor(loss, net.out_conv.w, "flow.out.w", 1e-5, 12, 10));
  check_entry(grad_check_tensor(loss, net.out_conv.b, "flow.out.b", 1e-5, 12, 11));
  check_entry(grad_check_tensor(loss, net.t1.w, "flow.t1.w", 1e-5, 12, 12));
  check_entry(grad_check_tensor(loss, net.t2.w, "flow.t2.w", 1e-5, 12, 13));
  check_entry(grad_check_tensor(loss, net.t2.b, "flow.t2.b", 1e-5, 12, 14));
}

TEST_CASE("null-condition gradient accumulates over its broadcast footprint") {
  DenoiserNet<double> net;
  net.init(4, 8, 16, Rng(17));
  Rng rng(18);
  fill_uniform(net.out_conv.w, rng, -0.3, 0.3);
  fill_uniform(net.out_conv.b, rng, -0.1, 0.1);
  Tensor<double> z({4, 4, 6});
  fill_uniform(z, rng);
  const double t = 0.61;

  auto loss = [&]() {
    const Tensor<double> v = net.forward(z, net.null_condition(4, 6), t);
    double acc = 0;
    for (size_t i = 0; i < v.numel(); ++i) acc += v.data[i] * std::cos(0.21 * double(i));
    return acc;
  };

  std::vector<NamedParam<double>> params;
  net.collect(params);
  zero_grads(params);
  DenoiserCache<double> cc;
  const Tensor<double> v = net.forward(z, net.null_condition(4, 6), t, &cc);
  Tensor<double> gv = zeros_like(v);
  for (size_t i = 0; i < gv.numel(); ++i) gv.data[i] = std::cos(0.21 * double(i));
  const Tensor<double> gzin = net.backward(cc, gv);
  // A dropped condition is the null embedding broadcast over the plane, so its
  // gradient is the per-channel sum of the condition-half input gradient.
  const size_t plane = 4 * 6;
  for (int ch = 0; ch < 4; ++ch) {
    double acc = 0;
    for (size_t i = 0; i < plane; ++i) acc += gzin.data[(size_t(4 + ch)) * plane + i];
    net.null_embed.grad[size_t(ch)] = acc;
  }
  check_entry(grad_check_tensor(loss, net.null_embed, "flow.null", 1e-5, 4, 19));
}

// --- bridge, guidance, sampling ----------------------------------------------

TEST_CASE("bridge endpoints hit data and noise exactly") {
  Rng rng(21);
  Tensor<float> z0({3, 2, 2}), eps({3, 2, 2});
  fill_uniform(z0, rng);
  fill_uniform(eps, rng);
  CHECK(bridge_point(z0, eps, 0.0f).data == z0.data);
  CHECK(bridge_point(z0, eps, 1.0f).data == eps.data);
  const Tensor<float> mid = bridge_point(z0, eps, 0.25f);
  for (size_t i = 0; i < mid.numel(); ++i)
    CHECK(mid.data[i] == doctest::Approx(0.75f * z0.data[i] + 0.25f * eps.data[i]));
  const Tensor<float> vt = velocity_target(z0, eps);
  for (size_t i = 0; i < vt.numel(); ++i) CHECK(vt.data[i] == z0.data[i] - eps.data[i]);
}

TEST_CASE("guidance extremes evaluate exactly one branch") {
  DenoiserNet<float> net;
  net.init(4, 8, 16, Rng(23));
  Rng rng(24);
  fill_uniform(net.out_conv.w, rng, -0.3, 0.3);
  fill_uniform(net.out_conv.b, rng, -0.1, 0.1);
  Tensor<float> z({4, 4, 6}), cond({4, 4, 6});
  fill_uniform(z, rng);
  fill_uniform(cond, rng);
  const float t = 0.45f;

  const Tensor<float> vu = net.forward(z, net.null_condition(4, 6), t);
  const Tensor<float> vc = net.forward(z, cond, t);
  CHECK(vu.data != vc.data);
  CHECK(guided_velocity(net, z, cond, t, 0.0f).data == vu.data);
  CHECK(guided_velocity(net, z, cond, t, 1.0f).data == vc.data);

  const Tensor<float> g2 = guided_velocity(net, z, cond, t, 2.0f);
  for (size_t i = 0; i < g2.numel(); ++i)
    CHECK(g2.data[i] == vu.data[i] + 2.0f * (vc.data[i] - vu.data[i]));
}

TEST_CASE("Euler sampling with a zero field returns the noise unchanged") {
  DenoiserNet<float> net;
  net.init(4, 8, 16, Rng(25));
  Rng rng(26);
  Tensor<float> cond({4, 4, 6}), noise({4, 4, 6});
  fill_uniform(cond, rng);
  fill_uniform(noise, rng);
  for (int n : {1, 7, 20}) {
    CHECK(euler_sample(net, cond, 1.5f, n, noise).data == noise.data);
    CHECK(euler_sample(net, cond, 0.0f, n, noise).data == noise.data);
  }
  CHECK_THROWS_AS(euler_sample(net, cond, 1.5f, 0, noise), ConfigError);
}

TEST_CASE("Euler sampling integrates a known constant field") {
  // With weights zero except the output bias, the field is constant v = b, so
  // N Euler steps of size 1/N move the state by exactly b regardless of N.
  DenoiserNet<float> net;
  net.init(4, 8, 16, Rng(27));
  for (int c = 0; c < 4; ++c) net.out_conv.b.data[size_t(c)] = 0.5f * float(c + 1);
  Rng rng(28);
  Tensor<float> cond({4, 4, 6}), noise({4, 4, 6});
  fill_uniform(cond, rng);
  fill_uniform(noise, rng);
  for (int n : {1, 4, 20}) {
    const Tensor<float> out = net.forward(noise, cond, 0.5f);  // sanity: constant
    CHECK(out.data[0] == 0.5f);
    const Tensor<float> zs = euler_sample(net, cond, 1.0f, n, noise);
    const size_t plane = 4 * 6;
    for (int c = 0; c < 4; ++c)
      for (size_t i = 0; i < plane; ++i)
        CHECK(zs.data[size_t(c) * plane + i] ==
              doctest::Approx(noise.data[size_t(c) * plane + i] + 0.5f * float(c + 1)).epsilon(1e-5));
  }
}

// --- latent statistics --------------------------------------------------------

TEST_CASE("latent statistics are population moments with a deviation floor") {
  Tensor<float> a({2, 1, 2}), b({2, 1, 2});
  a.data = {1, 3, 2, 2};  // ch0: {1,3}; ch1 constant 2
  b.data = {5, 7, 2, 2};  // ch0: {5,7}
  const LatentStats st = latent_stats({a, b});
  CHECK(st.mean.size() == 2);
  CHECK(st.mean[0] == 4.0f);
  CHECK(st.mean[1] == 2.0f);
  CHECK(st.stdev[0] == doctest::Approx(std::sqrt(5.0)));
  CHECK(st.stdev[1] == 1e-6f);

  CHECK_THROWS_AS(latent_stats({}), ConfigError);
  Tensor<float> c({3, 1, 2});
  CHECK_THROWS_AS(latent_stats({a, c}), ConfigError);
}

TEST_CASE("normalization round-trips through its inverse") {
  Rng rng(31);
  std::vector<Tensor<float>> zs;
  for (int i = 0; i < 3; ++i) {
    Tensor<float> z({4, 3, 5});
    fill_uniform(z, rng, -2.0, 5.0);
    zs.push_back(z);
  }
  const LatentStats st = latent_stats(zs);
  const Tensor<float> n = st.normalize(zs[0]);
  CHECK(n.data != zs[0].data);
  const Tensor<float> back = st.denormalize(n);
  for (size_t i = 0; i < back.numel(); ++i)
    CHECK(back.data[i] == doctest::Approx(zs[0].data[i]).epsilon(1e-5));
}

// --- reliability maps ---------------------------------------------------------

TEST_CASE("random reliability stays inside the clamp band") {
  Rng rng(41);
  const Tensor<float> u = u_random(6, 8, rng);
  CHECK(u.shape == std::vector<int>{1, 6, 8});
  float lo = 1.0f, hi = 0.0f;
  for (float v : u.data) {
    CHECK(v >= 1e-4f);
    CHECK(v <= 1.0f - 1e-4f);
    lo = std::min(lo, v);
    hi = std::max(hi, v);
  }
  CHECK(hi > lo);  // actually random
  Rng rng2(41);
  const Tensor<float> u2 = u_random(6, 8, rng2);
  CHECK(u2.data == u.data);
}

TEST_CASE("entropy reliability spans flat to peaked distributions") {
  Tensor<float> flat({8, 2, 2});
  std::fill(flat.data.begin(), flat.data.end(), 0.7f);
  const Tensor<float> uf = u_entropy(flat);
  CHECK(uf.shape == std::vector<int>{1, 2, 2});
  for (float v : uf.data) CHECK(v == 1e-4f);

  Tensor<float> sharp({8, 2, 2});
  for (int y = 0; y < 2; ++y)
    for (int x = 0; x < 2; ++x) sharp.at(0, y, x) = 50.0f;
  const Tensor<float> us = u_entropy(sharp);
  for (float v : us.data) CHECK(v == 1.0f - 1e-4f);

  // Confidence grows with peakedness.
  float prev = 0.0f;
  for (float a : {0.5f, 1.0f, 2.0f, 3.0f}) {
    Tensor<float> t({8, 1, 1});
    t.data[0] = a;
    const float u = u_entropy(t).data[0];
    CHECK(u > prev);
    prev = u;
  }

  Tensor<float> one({1, 2, 2});
  CHECK_THROWS_AS(u_entropy(one), ConfigError);
}

TEST_CASE("localization reliability follows the stereo baseline") {
  CameraIntrinsics intr;
  intr.width = 4;
  intr.height = 4;
  intr.fx = intr.fy = 100.0f;
  intr.cx = intr.cy = 2.0f;
  const CameraPose target;  // identity: center at origin

  SUBCASE("no context applies the baseline floor everywhere") {
    std::vector<float> depth(16, 2.0f);
    const Tensor<float> u = u_locpot(depth, intr, target, {}, 4.0, 0.01);
    const float want = clamp_u(float(std::exp(-(2.0 * 2.0 / (100.0 * 0.01)) / 4.0)));
    for (float v : u.data) CHECK(v == doctest::Approx(want));
    CHECK(want == doctest::Approx(std::exp(-1.0)));
  }

  SUBCASE("lateral context helps, along-ray context does not") {
    std::vector<float> depth(16, 10.0f);
    CameraPose lateral, parallel;
    lateral.T = Eigen::Vector3f(-1, 0, 0);   // center (1,0,0)
    parallel.T = Eigen::Vector3f(0, 0, -1);  // center (0,0,1)
    const Tensor<float> ul = u_locpot(depth, intr, target, {lateral}, 4.0, 0.01);
    const Tensor<float> up = u_locpot(depth, intr, target, {parallel}, 4.0, 0.01);
    // Near-axial pixel: the lateral baseline is ~1 m, the along-ray one is
    // under the floor.
    CHECK(ul.at(0, 1, 1) == doctest::Approx(std::exp(-0.25)).epsilon(1e-3));
    CHECK(up.at(0, 1, 1) == 1e-4f);
    for (int i = 0; i < 16; ++i) CHECK(ul.data[size_t(i)] > up.data[size_t(i)]);
  }

  SUBCASE("the best pair wins, including context-context pairs") {
    std::vector<float> depth(16, 10.0f);
    CameraPose right, left;
    right.T = Eigen::Vector3f(-1, 0, 0);
    left.T = Eigen::Vector3f(1, 0, 0);
    const Tensor<float> u1 = u_locpot(depth, intr, target, {right}, 4.0, 0.01);
    const Tensor<float> u2 = u_locpot(depth, intr, target, {right, left}, 4.0, 0.01);
    CHECK(u2.at(0, 1, 1) > u1.at(0, 1, 1));
    CHECK(u2.at(0, 1, 1) == doctest::Approx(std::exp(-0.125)).epsilon(1e-3));
  }

  SUBCASE("depth size must match the intrinsics") {
    std::vector<float> depth(15, 10.0f);
    CHECK_THROWS_AS(u_locpot(depth, intr, target, {}, 4.0, 0.01), ConfigError);
  }
}

TEST_CASE("reliability downsampling averages areas then time") {
  Tensor<float> u0({1, 4, 4}), u1({1, 4, 4});
  for (int y = 0; y < 4; ++y)
    for (int x = 0; x < 4; ++x) {
      u0.at(0, y, x) = (y < 2) == (x < 2) ? 0.8f : 0.4f;
      u1.at(0, y, x) = 0.2f;
    }
  const Tensor<float> u = u_to_latent(u0, u1, 2, 2);
  CHECK(u.shape == std::vector<int>{1, 2, 2});
  CHECK(u.at(0, 0, 0) == doctest::Approx(0.5f * (0.8f + 0.2f)));
  CHECK(u.at(0, 0, 1) == doctest::Approx(0.5f * (0.4f + 0.2f)));
  CHECK(u.at(0, 1, 0) == doctest::Approx(0.5f * (0.4f + 0.2f)));
  CHECK(u.at(0, 1, 1) == doctest::Approx(0.5f * (0.8f + 0.2f)));
}

TEST_CASE("reliability scaling leaves unit maps alone and halves half maps") {
  Rng rng(51);
  Tensor<float> cond({3, 4, 6});
  fill_uniform(cond, rng);
  Tensor<float> ones({1, 4, 6}), halves({1, 4, 6}), bad({1, 4, 4});
  std::fill(ones.data.begin(), ones.data.end(), 1.0f);
  std::fill(halves.data.begin(), halves.data.end(), 0.5f);
  CHECK(sf_apply(cond, ones).data == cond.data);
  const Tensor<float> h = sf_apply(cond, halves);
  for (size_t i = 0; i < h.numel(); ++i) CHECK(h.data[i] == 0.5f * cond.data[i]);
  CHECK_THROWS_AS(sf_apply(cond, bad), ConfigError);
}

TEST_CASE("forcing mode names parse and configuration flows through") {
  CHECK(sf_mode_from("off") == SfMode::off);
  CHECK(sf_mode_from("random") == SfMode::random);
  CHECK(sf_mode_from("entropy") == SfMode::entropy);
  CHECK(sf_mode_from("locpot") == SfMode::locpot);
  CHECK_THROWS_AS(sf_mode_from("bogus"), ConfigError);

  RunConfig cfg;
  SfParams p = sf_params_from(cfg);
  CHECK(p.mode == SfMode::locpot);
  CHECK(p.omega == 1.5);
  CHECK(p.sigma_ref == 4.0);
  CHECK(p.b_min == 0.01);
  cfg.set("sf.mode=entropy");
  cfg.set("sf.omega=2.25");
  p = sf_params_from(cfg);
  CHECK(p.mode == SfMode::entropy);
  CHECK(p.omega == 2.25);
}

// --- checkpointing and training ----------------------------------------------

TEST_CASE("velocity-field checkpoints restore bitwise and demand statistics") {
  DenoiserNet<float> a, b;
  a.init(4, 8, 16, Rng(61));
  b.init(4, 8, 16, Rng(62));
  Rng rng(63);
  fill_uniform(a.out_conv.w, rng, -0.3, 0.3);
  LatentStats st;
  st.mean = {0.1f, -0.2f, 0.3f, 0.0f};
  st.stdev = {1.0f, 2.0f, 0.5f, 1.5f};

  const std::string path = temp_dir() + "/flow.ckpt";
  write_checkpoint(path, flow_checkpoint(a, st));
  LatentStats rst;
  flow_restore(b, rst, read_checkpoint(path));
  CHECK(rst.mean == st.mean);
  CHECK(rst.stdev == st.stdev);
  std::vector<NamedParam<float>> pa, pb;
  a.collect(pa);
  b.collect(pb);
  for (size_t i = 0; i < pa.size(); ++i) {
    CHECK(pa[i].name == pb[i].name);
    CHECK(pa[i].t->data == pb[i].t->data);
  }

  CheckpointMap m = flow_checkpoint(a, st);
  m.erase("flow.stats.mean");
  DenoiserNet<float> c;
  c.init(4, 8, 16, Rng(64));
  LatentStats cst;
  CHECK_THROWS_AS(flow_restore(c, cst, m), IoError);
}

TEST_CASE("velocity-field training is deterministic end to end") {
  RunConfig cfg;
  cfg.set("dataset.count", 2LL);
  cfg.set("dataset.eval_count", 1LL);
  cfg.set("flow.base_channels", 16LL);
  cfg.set("flow.steps1", 2LL);
  cfg.set("flow.steps2", 2LL);
  const std::string dir = temp_dir();
  write_dataset(dir, cfg, 99);
  const Dataset ds = load_dataset(dir, 6);

  VaeNet<float> vae;
  vae.init(8, 24, Rng(71));
  AdapterNet<float> adapter;
  adapter.init(16, 24, 6, 32, Rng(72));

  FlowTrainResult a = train_flow(ds, cfg, vae, adapter, 9);
  CHECK(a.losses.size() == 4);
  for (double l : a.losses) CHECK(std::isfinite(l));
  CHECK(a.stats.mean.size() == 8);
  for (float s : a.stats.stdev) CHECK(s > 0.0f);

  FlowTrainResult b = train_flow(ds, cfg, vae, adapter, 9);
  CHECK(b.losses == a.losses);
  std::vector<NamedParam<float>> pa, pb;
  a.net.collect(pa);
  b.net.collect(pb);
  for (size_t i = 0; i < pa.size(); ++i) CHECK(pa[i].t->data == pb[i].t->data);
}
