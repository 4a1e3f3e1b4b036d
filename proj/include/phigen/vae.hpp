#pragma once

#include <string>
#include <vector>

#include "phigen/checkpoint.hpp"
#include "phigen/dataset.hpp"
#include "phigen/layers.hpp"
#include "phigen/optim.hpp"

namespace phigen {

// Latent grid over (time, view, channel, height, width), row-major in that
// order. Spatial extents are 1/4 of the image; the time axis pairs frames
// (t_latent = ceil(t_frames / 2)).
template <class S>
struct LatentT {
  int t = 0, views = 0, c = 0, h = 0, w = 0;
  std::vector<S> data;

  void resize(int t_, int views_, int c_, int h_, int w_) {
    t = t_;
    views = views_;
    c = c_;
    h = h_;
    w = w_;
    data.assign(numel(), S(0));
  }
  size_t numel() const { return size_t(t) * views * c * h * w; }
  size_t slice_numel() const { return size_t(c) * h * w; }
  size_t slice_offset(int ti, int v) const { return (size_t(ti) * views + v) * slice_numel(); }

  Tensor<S> slice(int ti, int v) const {
    Tensor<S> out({c, h, w});
    const S* src = data.data() + slice_offset(ti, v);
    std::copy(src, src + slice_numel(), out.data.begin());
    return out;
  }
  void set_slice(int ti, int v, const Tensor<S>& x) {
    S* dst = data.data() + slice_offset(ti, v);
    std::copy(x.data.begin(), x.data.end(), dst);
  }
  bool same_extents(const LatentT& o) const {
    return t == o.t && views == o.views && c == o.c && h == o.h && w == o.w;
  }
};

using LatentTensor = LatentT<float>;

// Multi-scale decoder activations for every decoded frame, indexed
// [view][frame]: f4 at 1/4 resolution (2*base channels), f2 at 1/2 (base),
// f1 at full resolution (base).
template <class S>
struct DecoderFeaturesT {
  std::vector<std::vector<Tensor<S>>> f4, f2, f1;
};

using DecoderFeatures = DecoderFeaturesT<float>;

// Pre-activation residual unit: y = x + conv(silu(groupnorm(x))). The conv is
// zero-initialized so a fresh block is the identity, which keeps early
// optimization stable at high learning rates. Channel count is preserved.
template <class S>
struct VaeResBlock {
  GroupNorm<S> gn;
  Conv2d<S> conv;

  struct Cache {
    Tensor<S> x, n, s;
  };

  static int groups_for(int channels) {
    for (int g : {4, 2})
      if (channels % g == 0) return g;
    return 1;
  }

  void init(int channels, Rng rng) {
    gn.init(channels, groups_for(channels));
    conv.init(channels, channels, 3, rng);
    std::fill(conv.w.data.begin(), conv.w.data.end(), S(0));
  }

  Tensor<S> forward(const Tensor<S>& x, Cache* cache = nullptr) const {
    Cache local;
    Cache& c = cache ? *cache : local;
    c.x = x;
    c.n = gn.forward(x);
    c.s = silu(c.n);
    Tensor<S> y = conv.forward(c.s);
    for (size_t i = 0; i < y.data.size(); ++i) y.data[i] += x.data[i];
    return y;
  }

  Tensor<S> backward(const Cache& c, const Tensor<S>& gy) {
    Tensor<S> g = conv.backward(c.s, gy);
    g = silu_backward(c.n, g);
    g = gn.backward(c.x, g);
    for (size_t i = 0; i < g.data.size(); ++i) g.data[i] += gy.data[i];
    return g;
  }

  void collect(std::vector<NamedParam<S>>& out, const std::string& prefix) {
    gn.collect(out, prefix + ".gn");
    conv.collect(out, prefix + ".conv");
  }
};

namespace vae_detail {

// Per-frame activation caches kept for the hand-written backward pass.
template <class S>
struct EncCache {
  Tensor<S> x, c1, s1, p1, r1, c2, s2, p2, pre;
  typename VaeResBlock<S>::Cache b1, b2;
};

template <class S>
struct MixCache {
  Tensor<S> cat;
};

template <class S>
struct DecCache {
  Tensor<S> hpre, hb, f4, u2, cd2, cb2, f2, u1, cd1, cb1, f1, ch, cht, y;
  typename VaeResBlock<S>::Cache b0, b1, b2;
};

}  // namespace vae_detail

// Deterministic convolutional video autoencoder. Frames are consumed in
// temporal pairs: both frames pass through a shared spatial encoder, their
// pre-latents concatenate on channels, and one mixing conv produces the
// latent step — so the time axis compresses by 2. A single frame is encoded
// as the pair (x, x) and decoded by keeping the second (latest) frame of the
// pair, which makes "duplicated frame" and "single frame" paths agree
// bit-for-bit. All views and times share weights.
template <class S>
struct VaeNet {
  Conv2d<S> e1, e2, tmix, dec_in, d2, d1, head, sc;
  VaeResBlock<S> eb1, eb2, db0, db1, db2;
  int latent_c = 8, base_c = 24;

  void init(int latent_channels, int base_channels, Rng rng) {
    latent_c = latent_channels;
    base_c = base_channels;
    e1.init(base_c, 3, 3, rng.split(1));
    e2.init(2 * base_c, base_c, 3, rng.split(2));
    tmix.init(latent_c, 4 * base_c, 3, rng.split(3));
    dec_in.init(4 * base_c, latent_c, 3, rng.split(4));
    d2.init(base_c, 2 * base_c, 3, rng.split(5));
    d1.init(base_c, base_c, 3, rng.split(6));
    head.init(3, base_c, 3, rng.split(7));
    eb1.init(base_c, rng.split(8));
    eb2.init(2 * base_c, rng.split(9));
    db0.init(2 * base_c, rng.split(10));
    db1.init(base_c, rng.split(11));
    db2.init(base_c, rng.split(12));
    // Linear latent-to-pixel shortcut (one 1x1 conv covering both frames of
    // the pair); zero-initialized so it only contributes once trained.
    sc.init(6, latent_c, 1, rng.split(13));
    std::fill(sc.w.data.begin(), sc.w.data.end(), S(0));
  }

  void collect(std::vector<NamedParam<S>>& out, const std::string& prefix = "vae") {
    e1.collect(out, prefix + ".e1");
    eb1.collect(out, prefix + ".eb1");
    e2.collect(out, prefix + ".e2");
    eb2.collect(out, prefix + ".eb2");
    tmix.collect(out, prefix + ".tmix");
    dec_in.collect(out, prefix + ".dec_in");
    db0.collect(out, prefix + ".db0");
    d2.collect(out, prefix + ".d2");
    db1.collect(out, prefix + ".db1");
    d1.collect(out, prefix + ".d1");
    db2.collect(out, prefix + ".db2");
    head.collect(out, prefix + ".head");
    sc.collect(out, prefix + ".sc");
  }

  void set_requires_grad(bool on) {
    std::vector<NamedParam<S>> ps;
    collect(ps);
    for (auto& p : ps) p.t->set_requires_grad(on);
  }

  // --- spatial encoder (per frame) ---
  Tensor<S> enc_spatial(const Tensor<S>& x, vae_detail::EncCache<S>* cache = nullptr) const {
    vae_detail::EncCache<S> local;
    vae_detail::EncCache<S>& c = cache ? *cache : local;
    c.x = x;
    c.c1 = e1.forward(x);
    c.s1 = silu(c.c1);
    c.p1 = avg_pool2(c.s1);
    c.r1 = eb1.forward(c.p1, &c.b1);
    c.c2 = e2.forward(c.r1);
    c.s2 = silu(c.c2);
    c.p2 = avg_pool2(c.s2);
    c.pre = eb2.forward(c.p2, &c.b2);
    return c.pre;
  }

  // Returns the gradient w.r.t. the input frame (parameters accumulate).
  Tensor<S> enc_spatial_backward(const vae_detail::EncCache<S>& c, const Tensor<S>& gpre) {
    Tensor<S> g = eb2.backward(c.b2, gpre);
    g = avg_pool2_backward(c.s2, g);
    g = silu_backward(c.c2, g);
    g = e2.backward(c.r1, g);
    g = eb1.backward(c.b1, g);
    g = avg_pool2_backward(c.s1, g);
    g = silu_backward(c.c1, g);
    return e1.backward(c.x, g);
  }

  // --- latent step from a frame pair ---
  Tensor<S> mix_pair(const Tensor<S>& pre0, const Tensor<S>& pre1,
                     vae_detail::MixCache<S>* cache = nullptr) const {
    vae_detail::MixCache<S> local;
    vae_detail::MixCache<S>& c = cache ? *cache : local;
    c.cat.resize({4 * base_c, pre0.shape[1], pre0.shape[2]});
    std::copy(pre0.data.begin(), pre0.data.end(), c.cat.data.begin());
    std::copy(pre1.data.begin(), pre1.data.end(), c.cat.data.begin() + pre0.numel());
    return tmix.forward(c.cat);
  }

  // Splits the concatenated gradient back into the two pre-latent frames.
  std::pair<Tensor<S>, Tensor<S>> mix_pair_backward(const vae_detail::MixCache<S>& c,
                                                    const Tensor<S>& gz) {
    Tensor<S> g = tmix.backward(c.cat, gz);
    Tensor<S> gpre0({2 * base_c, c.cat.shape[1], c.cat.shape[2]});
    Tensor<S> gpre1 = gpre0;
    const size_t half = gpre0.numel();
    std::copy(g.data.begin(), g.data.begin() + half, gpre0.data.begin());
    std::copy(g.data.begin() + half, g.data.end(), gpre1.data.begin());
    return {gpre0, gpre1};
  }

  // --- decoder for one latent step: two frames plus their feature ladders ---
  void decode_step(const Tensor<S>& z, Tensor<S> frames[2],
                   vae_detail::DecCache<S>* caches = nullptr, Tensor<S>* dz_cache = nullptr,
                   DecoderFeaturesT<S>* features = nullptr, int view = 0) const {
    Tensor<S> dz = dec_in.forward(z);
    if (dz_cache) *dz_cache = dz;
    const Tensor<S> scv = sc.forward(nearest_upsample(z, 4));
    const size_t plane3 = size_t(3) * scv.shape[1] * scv.shape[2];
    const int hh = dz.shape[1], ww = dz.shape[2];
    for (int i = 0; i < 2; ++i) {
      vae_detail::DecCache<S> local;
      vae_detail::DecCache<S>& c = caches ? caches[i] : local;
      c.hpre.resize({2 * base_c, hh, ww});
      const size_t half = c.hpre.numel();
      std::copy(dz.data.begin() + i * half, dz.data.begin() + (i + 1) * half,
                c.hpre.data.begin());
      c.hb = db0.forward(c.hpre, &c.b0);
      c.f4 = silu(c.hb);
      c.u2 = nearest_upsample(c.f4, 2);
      c.cd2 = d2.forward(c.u2);
      c.cb2 = db1.forward(c.cd2, &c.b1);
      c.f2 = silu(c.cb2);
      c.u1 = nearest_upsample(c.f2, 2);
      c.cd1 = d1.forward(c.u1);
      c.cb1 = db2.forward(c.cd1, &c.b2);
      c.f1 = silu(c.cb1);
      c.ch = head.forward(c.f1);
      c.cht = c.ch;
      for (size_t k = 0; k < plane3; ++k) c.cht.data[k] += scv.data[i * plane3 + k];
      c.y = sigmoid(c.cht);
      frames[i] = c.y;
      if (features) {
        features->f4[view].push_back(c.f4);
        features->f2[view].push_back(c.f2);
        features->f1[view].push_back(c.f1);
      }
    }
  }

  // gy per frame -> gradient w.r.t. the latent step (parameters accumulate).
  Tensor<S> decode_step_backward(const Tensor<S>& z, const Tensor<S>& dz,
                                 vae_detail::DecCache<S> caches[2], const Tensor<S> gy[2]) {
    Tensor<S> gdz = zeros_like(dz);
    const size_t half = caches[0].hpre.numel();
    for (int i = 0; i < 2; ++i) {
      vae_detail::DecCache<S>& c = caches[i];
      Tensor<S> g = sigmoid_backward(c.ch, gy[i]);
      g = head.backward(c.f1, g);
      g = silu_backward(c.cb1, g);
      g = db2.backward(c.b2, g);
      g = d1.backward(c.u1, g);
      g = nearest_upsample_backward(c.f2, g, 2);
      g = silu_backward(c.cb2, g);
      g = db1.backward(c.b1, g);
      g = d2.backward(c.u2, g);
      g = nearest_upsample_backward(c.f4, g, 2);
      g = silu_backward(c.hb, g);
      g = db0.backward(c.b0, g);
      std::copy(g.data.begin(), g.data.end(), gdz.data.begin() + i * half);
    }
    return dec_in.backward(z, gdz);
  }

  // frames[view][time], values in [0,1]. Odd trailing frame pairs with itself.
  LatentT<S> encode(const std::vector<std::vector<Tensor<S>>>& frames) const {
    if (frames.empty() || frames[0].empty()) throw ConfigError("vae encode: no frames");
    const int V = int(frames.size()), T = int(frames[0].size());
    const int H = frames[0][0].shape[1], W = frames[0][0].shape[2];
    for (const auto& view : frames)
      for (const auto& f : view)
        if (int(view.size()) != T || f.shape[0] != 3 || f.shape[1] != H || f.shape[2] != W)
          throw ConfigError("vae encode: inconsistent frame shapes across views");
    if (H % 4 || W % 4) throw ConfigError("vae encode: image size must be divisible by 4");
    const int tl = (T + 1) / 2;
    LatentT<S> z;
    z.resize(tl, V, latent_c, H / 4, W / 4);
    for (int v = 0; v < V; ++v)
      for (int k = 0; k < tl; ++k) {
        const Tensor<S>& x0 = frames[v][2 * k];
        const Tensor<S>& x1 = frames[v][std::min(2 * k + 1, T - 1)];
        Tensor<S> pre0 = enc_spatial(x0);
        Tensor<S> pre1 = (&x1 == &x0) ? pre0 : enc_spatial(x1);
        z.set_slice(k, v, mix_pair(pre0, pre1));
      }
    return z;
  }

  // Decodes every latent step to its two frames; features come back in the
  // same [view][frame] indexing as the frames.
  std::vector<std::vector<Tensor<S>>> decode(const LatentT<S>& z,
                                             DecoderFeaturesT<S>* features = nullptr) const {
    std::vector<std::vector<Tensor<S>>> frames(z.views);
    if (features) {
      features->f4.assign(z.views, {});
      features->f2.assign(z.views, {});
      features->f1.assign(z.views, {});
    }
    for (int v = 0; v < z.views; ++v)
      for (int k = 0; k < z.t; ++k) {
        Tensor<S> pair[2];
        decode_step(z.slice(k, v), pair, nullptr, nullptr, features, v);
        frames[v].push_back(pair[0]);
        frames[v].push_back(pair[1]);
      }
    return frames;
  }
};

struct VaeTrainResult {
  VaeNet<float> net;
  std::vector<double> losses;  // per-step batch loss
};

// Stage-0 training: reconstruction MSE over frame pairs sampled from the
// training split at the configured width/height. Throws NumericError on
// divergence. Deterministic for a fixed (dataset, config, seed).
VaeTrainResult train_vae(const Dataset& ds, const RunConfig& cfg, uint64_t seed);

CheckpointMap vae_checkpoint(VaeNet<float>& net);
void vae_restore(VaeNet<float>& net, const CheckpointMap& m);

}  // namespace phigen
