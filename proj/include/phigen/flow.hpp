#pragma once

#include <cmath>
#include <string>
#include <vector>

#include "phigen/adapter.hpp"
#include "phigen/dataset.hpp"
#include "phigen/vae.hpp"

namespace phigen {

// Per-channel moments of the latent distribution; velocities are learned in
// this normalized space so every channel contributes at the same scale.
struct LatentStats {
  std::vector<float> mean, stdev;

  template <class S>
  Tensor<S> normalize(const Tensor<S>& z) const {
    Tensor<S> out = z;
    const size_t plane = size_t(z.shape[1]) * z.shape[2];
    for (int c = 0; c < z.shape[0]; ++c)
      for (size_t i = 0; i < plane; ++i)
        out.data[size_t(c) * plane + i] =
            (z.data[size_t(c) * plane + i] - S(mean[size_t(c)])) / S(stdev[size_t(c)]);
    return out;
  }
  template <class S>
  Tensor<S> denormalize(const Tensor<S>& z) const {
    Tensor<S> out = z;
    const size_t plane = size_t(z.shape[1]) * z.shape[2];
    for (int c = 0; c < z.shape[0]; ++c)
      for (size_t i = 0; i < plane; ++i)
        out.data[size_t(c) * plane + i] =
            z.data[size_t(c) * plane + i] * S(stdev[size_t(c)]) + S(mean[size_t(c)]);
    return out;
  }
};

// Moments over a set of same-channel tensors; the deviation is floored so a
// constant channel cannot produce a divide-by-zero.
LatentStats latent_stats(const std::vector<Tensor<float>>& zs);

// Sinusoidal position features of a scalar time in [0,1].
template <class S>
Tensor<S> time_features(S t, int dim) {
  Tensor<S> e({1, dim});
  const int half = dim / 2;
  for (int i = 0; i < half; ++i) {
    const S freq = S(std::exp(-std::log(10000.0) * double(i) / double(half)));
    e.data[size_t(2 * i)] = std::sin(S(1000) * t * freq);
    e.data[size_t(2 * i + 1)] = std::cos(S(1000) * t * freq);
  }
  return e;
}

template <class S>
struct DnBlockCache {
  Tensor<S> x, gn, s, biased;
};

// Pre-activation residual block: GroupNorm -> silu -> conv, plus a per-block
// linear projection of the time embedding added as a channel bias. Residual
// when input and output widths match.
template <class S>
struct DnBlock {
  GroupNorm<S> gn;
  Conv2d<S> conv;
  Linear<S> temb;
  int cin = 0, cout = 0;

  void init(int cout_, int cin_, int tdim, Rng rng) {
    cin = cin_;
    cout = cout_;
    gn.init(cin);
    conv.init(cout, cin, 3, rng.split(1));
    temb.init(cout, tdim, rng.split(2));
  }
  void collect(std::vector<NamedParam<S>>& out, const std::string& prefix) {
    gn.collect(out, prefix + ".gn");
    conv.collect(out, prefix + ".conv");
    temb.collect(out, prefix + ".temb");
  }

  Tensor<S> forward(const Tensor<S>& x, const Tensor<S>& t64, DnBlockCache<S>* cache) const {
    DnBlockCache<S> local;
    DnBlockCache<S>& cc = cache ? *cache : local;
    cc.x = x;
    cc.gn = gn.forward(x);
    cc.s = silu(cc.gn);
    cc.biased = conv.forward(cc.s);
    const Tensor<S> tb = temb.forward(t64);  // [1, cout]
    const size_t plane = size_t(cc.biased.shape[1]) * cc.biased.shape[2];
    for (int c = 0; c < cout; ++c)
      for (size_t i = 0; i < plane; ++i) cc.biased.data[size_t(c) * plane + i] += tb.data[size_t(c)];
    if (cin != cout) return cc.biased;
    Tensor<S> out = x;
    for (size_t i = 0; i < out.numel(); ++i) out.data[i] += cc.biased.data[i];
    return out;
  }

  // Accumulates the time-embedding gradient into gt64; returns grad wrt x.
  Tensor<S> backward(DnBlockCache<S>& cc, const Tensor<S>& gy, const Tensor<S>& t64,
                     Tensor<S>& gt64) {
    Tensor<S> gtb({1, cout});
    const size_t plane = size_t(cc.biased.shape[1]) * cc.biased.shape[2];
    for (int c = 0; c < cout; ++c) {
      S acc = 0;
      for (size_t i = 0; i < plane; ++i) acc += gy.data[size_t(c) * plane + i];
      gtb.data[size_t(c)] = acc;
    }
    const Tensor<S> gt = temb.backward(t64, gtb);
    for (size_t i = 0; i < gt64.numel(); ++i) gt64.data[i] += gt.data[i];
    Tensor<S> gs = conv.backward(cc.s, gy);
    Tensor<S> ggn = silu_backward(cc.gn, gs);
    Tensor<S> gx = gn.backward(cc.x, ggn);
    if (cin == cout)
      for (size_t i = 0; i < gx.numel(); ++i) gx.data[i] += gy.data[i];
    return gx;
  }
};

template <class S>
struct DenoiserCache {
  Tensor<S> zin, e, l1p, l1, t64;
  Tensor<S> x0, d, p, m, u, cat, fuse_pre, fuse;
  DnBlockCache<S> down_c, mid_c;
};

// Velocity field over one range-view latent slice, conditioned on a matching
// context latent (channel-concatenated) and a scalar time. One pooling level:
// in -> block -> pool -> wider block -> upsample -> skip-concat -> fuse -> out.
// The output convolution starts at zero so the initial field is identically 0.
template <class S>
struct DenoiserNet {
  Conv2d<S> in_conv, fuse_conv, out_conv;
  DnBlock<S> down, mid;
  Linear<S> t1, t2;
  Tensor<S> null_embed;  // learned stand-in for a dropped condition, [latent_c]
  int latent_c = 8, base_c = 32, tdim = 32;

  void init(int latent_channels, int base_channels, int time_embed_dim, Rng rng) {
    latent_c = latent_channels;
    base_c = base_channels;
    tdim = time_embed_dim;
    in_conv.init(base_c, 2 * latent_c, 3, rng.split(1));
    down.init(base_c, base_c, 64, rng.split(2));
    mid.init(2 * base_c, base_c, 64, rng.split(3));
    fuse_conv.init(base_c, 3 * base_c, 3, rng.split(4));
    out_conv.init(latent_c, base_c, 3, rng.split(5));
    std::fill(out_conv.w.data.begin(), out_conv.w.data.end(), S(0));
    std::fill(out_conv.b.data.begin(), out_conv.b.data.end(), S(0));
    t1.init(64, tdim, rng.split(6));
    t2.init(64, 64, rng.split(7));
    null_embed.set_requires_grad(true);
    null_embed.resize({latent_c});
    Rng nr = rng.split(8);
    for (auto& v : null_embed.data) v = S(0.02 * nr.normal());
  }

  void collect(std::vector<NamedParam<S>>& out, const std::string& prefix = "flow") {
    in_conv.collect(out, prefix + ".in");
    down.collect(out, prefix + ".down");
    mid.collect(out, prefix + ".mid");
    fuse_conv.collect(out, prefix + ".fuse");
    out_conv.collect(out, prefix + ".out");
    t1.collect(out, prefix + ".t1");
    t2.collect(out, prefix + ".t2");
    out.push_back({prefix + ".null", &null_embed});
  }

  // Condition tensor broadcast from the learned null embedding.
  Tensor<S> null_condition(int h, int w) const {
    Tensor<S> c({latent_c, h, w});
    for (int ch = 0; ch < latent_c; ++ch)
      std::fill(c.data.begin() + size_t(ch) * h * w, c.data.begin() + size_t(ch + 1) * h * w,
                null_embed.data[size_t(ch)]);
    return c;
  }

  static Tensor<S> cat_channels(const Tensor<S>& a, const Tensor<S>& b) {
    Tensor<S> out({a.shape[0] + b.shape[0], a.shape[1], a.shape[2]});
    std::copy(a.data.begin(), a.data.end(), out.data.begin());
    std::copy(b.data.begin(), b.data.end(), out.data.begin() + a.numel());
    return out;
  }

  Tensor<S> forward(const Tensor<S>& z, const Tensor<S>& cond, S t,
                    DenoiserCache<S>* cache = nullptr) const {
    if (!z.same_shape(cond)) throw ConfigError("denoiser: latent/condition shape mismatch");
    if (z.shape[1] % 2 != 0 || z.shape[2] % 2 != 0)
      throw ConfigError("denoiser: latent extents must be even");
    DenoiserCache<S> local;
    DenoiserCache<S>& cc = cache ? *cache : local;
    cc.e = time_features(t, tdim);
    cc.l1p = t1.forward(cc.e);
    cc.l1 = silu(cc.l1p);
    cc.t64 = t2.forward(cc.l1);
    cc.zin = cat_channels(z, cond);
    cc.x0 = in_conv.forward(cc.zin);
    cc.d = down.forward(cc.x0, cc.t64, cache ? &cc.down_c : nullptr);
    cc.p = avg_pool2(cc.d);
    cc.m = mid.forward(cc.p, cc.t64, cache ? &cc.mid_c : nullptr);
    cc.u = nearest_upsample(cc.m, 2);
    cc.cat = cat_channels(cc.u, cc.d);
    cc.fuse_pre = fuse_conv.forward(cc.cat);
    cc.fuse = silu(cc.fuse_pre);
    return out_conv.forward(cc.fuse);
  }

  // Returns grad wrt the concatenated input [2*latent_c, h, w]; the first
  // half is the latent slice, the second half the condition.
  Tensor<S> backward(DenoiserCache<S>& cc, const Tensor<S>& gv) {
    Tensor<S> gt64 = zeros_like(cc.t64);
    Tensor<S> gfuse = out_conv.backward(cc.fuse, gv);
    Tensor<S> gfp = silu_backward(cc.fuse_pre, gfuse);
    Tensor<S> gcat = fuse_conv.backward(cc.cat, gfp);
    Tensor<S> gu({2 * base_c, cc.u.shape[1], cc.u.shape[2]});
    std::copy(gcat.data.begin(), gcat.data.begin() + gu.numel(), gu.data.begin());
    Tensor<S> gm = nearest_upsample_backward(cc.m, gu, 2);
    Tensor<S> gp = mid.backward(cc.mid_c, gm, cc.t64, gt64);
    Tensor<S> gd = avg_pool2_backward(cc.d, gp);
    const S* skip = gcat.data.data() + gu.numel();
    for (size_t i = 0; i < gd.numel(); ++i) gd.data[i] += skip[i];
    Tensor<S> gx0 = down.backward(cc.down_c, gd, cc.t64, gt64);
    Tensor<S> gzin = in_conv.backward(cc.zin, gx0);
    Tensor<S> gl1 = t2.backward(cc.l1, gt64);
    Tensor<S> gl1p = silu_backward(cc.l1p, gl1);
    t1.backward(cc.e, gl1p);
    return gzin;
  }
};

// Linear bridge between data (t=0) and noise (t=1) and its constant velocity
// target pointing from noise to data.
template <class S>
Tensor<S> bridge_point(const Tensor<S>& z0, const Tensor<S>& eps, S t) {
  Tensor<S> out = z0;
  for (size_t i = 0; i < out.numel(); ++i)
    out.data[i] = (S(1) - t) * z0.data[i] + t * eps.data[i];
  return out;
}
template <class S>
Tensor<S> velocity_target(const Tensor<S>& z0, const Tensor<S>& eps) {
  Tensor<S> out = z0;
  for (size_t i = 0; i < out.numel(); ++i) out.data[i] = z0.data[i] - eps.data[i];
  return out;
}

// Classifier-free guided field. omega 0 evaluates only the unconditional
// branch and omega 1 only the conditional one, so those settings are exactly
// the single-branch fields.
template <class S>
Tensor<S> guided_velocity(const DenoiserNet<S>& net, const Tensor<S>& z, const Tensor<S>& cond,
                          S t, S omega) {
  if (omega == S(0)) return net.forward(z, net.null_condition(z.shape[1], z.shape[2]), t);
  if (omega == S(1)) return net.forward(z, cond, t);
  const Tensor<S> vu = net.forward(z, net.null_condition(z.shape[1], z.shape[2]), t);
  const Tensor<S> vc = net.forward(z, cond, t);
  Tensor<S> out = vu;
  for (size_t i = 0; i < out.numel(); ++i)
    out.data[i] = vu.data[i] + omega * (vc.data[i] - vu.data[i]);
  return out;
}

// Deterministic Euler integration from the supplied noise at t=1 down to t=0.
Tensor<float> euler_sample(const DenoiserNet<float>& net, const Tensor<float>& cond, float omega,
                           int nsteps, const Tensor<float>& noise);

struct FlowTrainResult {
  DenoiserNet<float> net;
  LatentStats stats;
  std::vector<double> losses;
};

// Two-phase velocity-field training on range-view latent slices. Context for
// each training window comes from re-rendering the scene reconstructed out of
// the two preceding frames; targets are ground-truth latents. The second
// phase continues at the native dataset resolution with the statistics frozen
// from the first.
FlowTrainResult train_flow(const Dataset& ds, const RunConfig& cfg, const VaeNet<float>& vae,
                           const AdapterNet<float>& adapter, uint64_t seed);

CheckpointMap flow_checkpoint(DenoiserNet<float>& net, const LatentStats& stats);
void flow_restore(DenoiserNet<float>& net, LatentStats& stats, const CheckpointMap& m);

}  // namespace phigen
