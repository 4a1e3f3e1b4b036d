#pragma once

#include <algorithm>
#include <cmath>
#include <numeric>
#include <string>
#include <vector>

#include "phigen/dataset.hpp"
#include "phigen/scene.hpp"
#include "phigen/vae.hpp"

namespace phigen {

// Column layout of the azimuth-ordered range view: block j holds the view at
// rig index order[j]; every view contributes an equal-width block.
struct RangeLayout {
  int views = 0, view_w = 0, h = 0;
  std::vector<int> order;  // block j -> index into rig.views
  int width() const { return views * view_w; }
};

// Ascending-azimuth ordering (ties by view_id) for a given grid size.
RangeLayout range_layout(const CameraRig& rig, int h, int view_w);

// Horizontal concatenation of per-view maps (indexed like rig.views) into the
// azimuth-ordered grid. The result is independent of rig.views storage order.
template <class S>
Tensor<S> to_range_view(const std::vector<Tensor<S>>& per_view, const CameraRig& rig,
                        RangeLayout* layout_out = nullptr) {
  if (per_view.size() != rig.views.size())
    throw ConfigError("to_range_view: feature count != view count");
  const int C = per_view[0].shape[0], H = per_view[0].shape[1], W = per_view[0].shape[2];
  for (const auto& f : per_view)
    if (f.shape[0] != C || f.shape[1] != H || f.shape[2] != W)
      throw ConfigError("to_range_view: shape mismatch across views");
  RangeLayout lay = range_layout(rig, H, W);
  Tensor<S> grid({C, H, lay.width()});
  for (int j = 0; j < lay.views; ++j) {
    const Tensor<S>& f = per_view[size_t(lay.order[j])];
    for (int c = 0; c < C; ++c)
      for (int y = 0; y < H; ++y)
        std::copy(&f.at(c, y, 0), &f.at(c, y, 0) + W, &grid.at(c, y, j * W));
  }
  if (layout_out) *layout_out = lay;
  return grid;
}

// Splits an azimuth-ordered grid back into per-view tensors indexed like
// rig.views. Inverse of to_range_view.
template <class S>
std::vector<Tensor<S>> from_range_view(const Tensor<S>& grid, const CameraRig& rig) {
  const int C = grid.shape[0], H = grid.shape[1];
  const int V = int(rig.views.size());
  const int W = grid.shape[2] / V;
  const RangeLayout lay = range_layout(rig, H, W);
  std::vector<Tensor<S>> out;
  out.resize(size_t(V));
  for (int j = 0; j < V; ++j) {
    Tensor<S> f({C, H, W});
    for (int c = 0; c < C; ++c)
      for (int y = 0; y < H; ++y)
        std::copy(&grid.at(c, y, j * W), &grid.at(c, y, j * W) + W, &f.at(c, y, 0));
    out[size_t(lay.order[j])] = std::move(f);
  }
  return out;
}

// Three geometry channels per range-view pixel: x within its view in [-1,1],
// y in [-1,1], and the view azimuth in radians. Gives the convolutional heads
// the per-pixel ray identity that unprojection later relies on.
template <class S>
Tensor<S> coord_channels(const CameraRig& rig, int h, int view_w) {
  RangeLayout lay = range_layout(rig, h, view_w);
  Tensor<S> out({3, h, lay.width()});
  for (int j = 0; j < lay.views; ++j) {
    const S az = S(rig.views[size_t(lay.order[j])].azimuth);
    for (int y = 0; y < h; ++y)
      for (int x = 0; x < view_w; ++x) {
        const int col = j * view_w + x;
        out.at(0, y, col) = S(2) * (S(x) + S(0.5)) / S(view_w) - S(1);
        out.at(1, y, col) = S(2) * (S(y) + S(0.5)) / S(h) - S(1);
        out.at(2, y, col) = az;
      }
  }
  return out;
}

// --- head channel map -------------------------------------------------------
// [0..2] color, [3] ray distance, [4] alpha, [5..7] scale, [8..11] rotation,
// [12..14] flow, [15..15+C) semantic logits, [15+C..15+C+D) depth-bin logits.
struct HeadLayout {
  int classes = 6, depth_bins = 32;
  int color() const { return 0; }
  int dist() const { return 3; }
  int alpha() const { return 4; }
  int scale() const { return 5; }
  int rot() const { return 8; }
  int flow() const { return 12; }
  int sem() const { return 15; }
  int bins() const { return 15 + classes; }
  int total() const { return 15 + classes + depth_bins; }
};

// Inverse-depth-uniform binning over [near, far].
inline int depth_bin(double d, double near, double far, int bins) {
  const double u = (1.0 / d - 1.0 / far) / (1.0 / near - 1.0 / far);
  return std::clamp(int(u * bins), 0, bins - 1);
}
inline double depth_bin_center(int k, double near, double far, int bins) {
  const double u = (double(k) + 0.5) / double(bins);
  return 1.0 / (1.0 / far + u * (1.0 / near - 1.0 / far));
}

template <class S>
struct AdapterCache {
  Tensor<S> r4, a_pre, a, ua, r2, b_pre, b, ub, r1, c_pre, c, h_pre, hh, raw;
};

// Stage-1 head: pyramid-fuses the decoder feature ladder over the range view
// and predicts per-pixel Gaussian parameters.
template <class S>
struct AdapterNet {
  Conv2d<S> fa, fb, fc, h1, h2;
  int channels = 24, base_c = 24;
  HeadLayout head;

  void init(int channels_, int vae_base_c, int classes, int depth_bins, Rng rng) {
    channels = channels_;
    base_c = vae_base_c;
    head.classes = classes;
    head.depth_bins = depth_bins;
    fa.init(channels, 2 * base_c + 3, 3, rng.split(1));
    fb.init(channels, channels + base_c + 3, 3, rng.split(2));
    fc.init(channels, channels + base_c + 3, 3, rng.split(3));
    h1.init(channels, channels, 3, rng.split(4));
    h2.init(head.total(), channels, 1, rng.split(5));
    // Start with broad coverage (alpha ~ 0.88) and small footprints (~0.13 m).
    h2.b.data[size_t(head.alpha())] = S(2);
    for (int k = 0; k < 3; ++k) h2.b.data[size_t(head.scale() + k)] = S(-2);
  }

  void collect(std::vector<NamedParam<S>>& out, const std::string& prefix = "adapter") {
    fa.collect(out, prefix + ".fa");
    fb.collect(out, prefix + ".fb");
    fc.collect(out, prefix + ".fc");
    h1.collect(out, prefix + ".h1");
    h2.collect(out, prefix + ".h2");
  }

  static Tensor<S> cat_channels(const Tensor<S>& x, const Tensor<S>& y) {
    Tensor<S> out({x.shape[0] + y.shape[0], x.shape[1], x.shape[2]});
    std::copy(x.data.begin(), x.data.end(), out.data.begin());
    std::copy(y.data.begin(), y.data.end(), out.data.begin() + x.numel());
    return out;
  }
  static Tensor<S> cat3(const Tensor<S>& x, const Tensor<S>& y, const Tensor<S>& z) {
    return cat_channels(cat_channels(x, y), z);
  }

  // f4/f2/f1: one frame's decoder features per view, indexed like rig.views.
  Tensor<S> forward(const std::vector<Tensor<S>>& f4, const std::vector<Tensor<S>>& f2,
                    const std::vector<Tensor<S>>& f1, const CameraRig& rig,
                    AdapterCache<S>* cache = nullptr) const {
    AdapterCache<S> local;
    AdapterCache<S>& cc = cache ? *cache : local;
    const Tensor<S> rv4 = to_range_view(f4, rig);
    const Tensor<S> rv2 = to_range_view(f2, rig);
    const Tensor<S> rv1 = to_range_view(f1, rig);
    cc.r4 = cat_channels(rv4, coord_channels<S>(rig, rv4.shape[1], f4[0].shape[2]));
    cc.a_pre = fa.forward(cc.r4);
    cc.a = silu(cc.a_pre);
    cc.ua = nearest_upsample(cc.a, 2);
    cc.r2 = cat3(cc.ua, rv2, coord_channels<S>(rig, rv2.shape[1], f2[0].shape[2]));
    cc.b_pre = fb.forward(cc.r2);
    cc.b = silu(cc.b_pre);
    cc.ub = nearest_upsample(cc.b, 2);
    cc.r1 = cat3(cc.ub, rv1, coord_channels<S>(rig, rv1.shape[1], f1[0].shape[2]));
    cc.c_pre = fc.forward(cc.r1);
    cc.c = silu(cc.c_pre);
    cc.h_pre = h1.forward(cc.c);
    cc.hh = silu(cc.h_pre);
    cc.raw = h2.forward(cc.hh);
    return cc.raw;
  }

  void backward(AdapterCache<S>& cc, const Tensor<S>& graw) {
    Tensor<S> g = h2.backward(cc.hh, graw);
    g = silu_backward(cc.h_pre, g);
    g = h1.backward(cc.c, g);
    g = silu_backward(cc.c_pre, g);
    g = fc.backward(cc.r1, g);
    // Keep only the fused-path channels; feature/coord channels dead-end here
    // (the autoencoder is frozen).
    Tensor<S> gub({channels, cc.ub.shape[1], cc.ub.shape[2]});
    std::copy(g.data.begin(), g.data.begin() + gub.numel(), gub.data.begin());
    g = nearest_upsample_backward(cc.b, gub, 2);
    g = silu_backward(cc.b_pre, g);
    g = fb.backward(cc.r2, g);
    Tensor<S> gua({channels, cc.ua.shape[1], cc.ua.shape[2]});
    std::copy(g.data.begin(), g.data.begin() + gua.numel(), gua.data.begin());
    g = nearest_upsample_backward(cc.a, gua, 2);
    g = silu_backward(cc.a_pre, g);
    fa.backward(cc.r4, g);
  }
};

// --- per-pixel parameter decoding -------------------------------------------

struct AdapterParams {
  double near = 1.0, far = 60.0, flow_max = 2.0;
  int topk = 8;
};

template <class S>
struct PixelDecode {
  S color[3], dist, alpha, scale_mean, scale[3];
  // Saved pre-activations for the backward pass.
  S raw_color[3], raw_dist, raw_alpha, raw_scale[3];
};

template <class S>
PixelDecode<S> decode_pixel(const Tensor<S>& raw, const HeadLayout& hl, int y, int col,
                            const AdapterParams& ap) {
  PixelDecode<S> p;
  for (int k = 0; k < 3; ++k) {
    p.raw_color[k] = raw.at(hl.color() + k, y, col);
    p.color[k] = sigmoid_scalar(p.raw_color[k]);
  }
  p.raw_dist = raw.at(hl.dist(), y, col);
  p.dist = S(ap.near) + sigmoid_scalar(p.raw_dist) * S(ap.far - ap.near);
  p.raw_alpha = raw.at(hl.alpha(), y, col);
  p.alpha = sigmoid_scalar(p.raw_alpha);
  S sum = 0;
  for (int k = 0; k < 3; ++k) {
    p.raw_scale[k] = raw.at(hl.scale() + k, y, col);
    p.scale[k] = std::clamp(softplus_scalar(p.raw_scale[k]), S(1e-3), S(2));
    sum += p.scale[k];
  }
  p.scale_mean = sum / S(3);
  return p;
}

// One Gaussian per range-view pixel, unprojected along that pixel's camera
// ray into the world frame of the given ego pose.
template <class S>
GaussianScene predict_gaussians(const Tensor<S>& raw, const HeadLayout& hl,
                                const CameraRig& rig, const CameraPose& ego_pose,
                                int time_index, const AdapterParams& ap) {
  const int H = raw.shape[1], Wtot = raw.shape[2];
  const RangeLayout lay = range_layout(rig, H, Wtot / int(rig.views.size()));
  GaussianScene scene;
  scene.time_index = time_index;
  scene.gaussians.reserve(size_t(H) * Wtot);
  for (int y = 0; y < H; ++y)
    for (int col = 0; col < Wtot; ++col) {
      const RigView& view = rig.views[size_t(lay.order[col / lay.view_w])];
      const int px = col % lay.view_w;
      // Intrinsics may describe a higher-resolution image than the grid.
      const S sx = S(view.intrinsics.width) / S(lay.view_w);
      const S sy = S(view.intrinsics.height) / S(H);
      PixelDecode<S> p = decode_pixel(raw, hl, y, col, ap);
      Eigen::Vector3f dir(((S(px) + S(0.5)) * sx - S(view.intrinsics.cx)) / S(view.intrinsics.fx),
                          ((S(y) + S(0.5)) * sy - S(view.intrinsics.cy)) / S(view.intrinsics.fy),
                          1.0f);
      dir.normalize();
      const CameraPose world_to_cam = compose(view.pose, ego_pose);
      const CameraPose cam_to_world = world_to_cam.inverse();
      Gaussian4D g;
      g.mu = cam_to_world.apply(float(p.dist) * dir);
      g.scale = Eigen::Vector3f(float(p.scale[0]), float(p.scale[1]), float(p.scale[2]));
      Eigen::Vector4f q(float(raw.at(hl.rot(), y, col)) + 1.0f,
                        float(raw.at(hl.rot() + 1, y, col)),
                        float(raw.at(hl.rot() + 2, y, col)),
                        float(raw.at(hl.rot() + 3, y, col)));
      const float qn = q.norm();
      if (qn <= 1e-8f) throw NumericError("predict_gaussians: degenerate rotation");
      g.rot = q / qn;
      g.opacity = float(p.alpha);
      g.color = Eigen::Vector3f(float(p.color[0]), float(p.color[1]), float(p.color[2]));
      g.flow = Eigen::Vector3f(std::tanh(float(raw.at(hl.flow(), y, col))),
                               std::tanh(float(raw.at(hl.flow() + 1, y, col))),
                               std::tanh(float(raw.at(hl.flow() + 2, y, col)))) *
               float(ap.flow_max);
      // Flow is predicted in the camera frame; rotate into world axes.
      g.flow = cam_to_world.R * g.flow;
      g.sem_logits.resize(hl.classes);
      int best = 0;
      for (int k = 0; k < hl.classes; ++k) {
        g.sem_logits[k] = float(raw.at(hl.sem() + k, y, col));
        if (g.sem_logits[k] > g.sem_logits[best]) best = k;
      }
      scene.dynamic_mask.push_back(best == seg::kVehicle ? 1 : 0);
      scene.gaussians.push_back(std::move(g));
    }
  return scene;
}

// Per-view depth-bin logits [D, H, W] extracted from the head output.
template <class S>
Tensor<S> depth_logit_slice(const Tensor<S>& raw, const HeadLayout& hl, const CameraRig& rig,
                            int rig_index) {
  const int H = raw.shape[1], Wtot = raw.shape[2];
  const int W = Wtot / int(rig.views.size());
  const RangeLayout lay = range_layout(rig, H, W);
  int block = 0;
  for (int j = 0; j < lay.views; ++j)
    if (lay.order[j] == rig_index) block = j;
  Tensor<S> out({hl.depth_bins, H, W});
  for (int d = 0; d < hl.depth_bins; ++d)
    for (int y = 0; y < H; ++y)
      for (int x = 0; x < W; ++x) out.at(d, y, x) = raw.at(hl.bins() + d, y, block * W + x);
  return out;
}

// --- differentiable training loss -------------------------------------------

template <class S>
struct GtFrame {
  Tensor<S> rgb;                     // [3,H,W]
  std::vector<float> depth;          // meters
  std::vector<uint8_t> sem;          // class ids
  std::vector<uint8_t> valid_depth;  // depth supervision mask
  std::vector<uint8_t> covered;      // semantic supervision mask (alpha > 0.5)
};

struct RenderWeights {
  double w_rgb = 1.0, w_d = 0.5, w_s = 0.2, w_db = 0.2;
  Eigen::Vector3f background{0.62f, 0.76f, 0.92f};
};

template <class S>
struct SoftLossTerms {
  S total = 0, rgb = 0, depth = 0, sem = 0, bins = 0;
  Tensor<S> graw;
};

// Soft per-pixel compositing loss. Candidates for a pixel are the Gaussians
// predicted at that pixel and its in-view ring-1 neighbours (nearest first,
// capped at top-K), weighted by opacity times an isotropic screen-footprint
// kernel and composited front to back in predicted-distance order. Gradients
// flow to color, distance, alpha, and scale (via the footprint), plus the
// semantic and depth-bin logits; rotation and flow take none by design.
template <class S>
SoftLossTerms<S> render_loss(const Tensor<S>& raw, const HeadLayout& hl, const CameraRig& rig,
                             const std::vector<GtFrame<S>>& gt_by_block,
                             const RenderWeights& wts, const AdapterParams& ap);

extern template SoftLossTerms<float> render_loss<float>(const Tensor<float>&, const HeadLayout&,
                                                        const CameraRig&,
                                                        const std::vector<GtFrame<float>>&,
                                                        const RenderWeights&,
                                                        const AdapterParams&);
extern template SoftLossTerms<double> render_loss<double>(const Tensor<double>&,
                                                          const HeadLayout&, const CameraRig&,
                                                          const std::vector<GtFrame<double>>&,
                                                          const RenderWeights&,
                                                          const AdapterParams&);

// Ground truth for one (episode, time) in range-view block order.
template <class S>
std::vector<GtFrame<S>> gt_frames(const Dataset& ds, int episode, int t,
                                  const AdapterParams& ap) {
  const int V = int(ds.rig.views.size());
  const RangeLayout lay =
      range_layout(ds.rig, ds.rig.views[0].intrinsics.height, ds.rig.views[0].intrinsics.width);
  std::vector<GtFrame<S>> out(size_t(V), GtFrame<S>{});
  for (int j = 0; j < V; ++j) {
    FrameGt f = load_frame(ds, episode, t, lay.order[j]);
    GtFrame<S>& g = out[size_t(j)];
    Tensor<float> rgb = rgb_tensor(f.rgb);
    g.rgb.resize(rgb.shape);
    for (size_t i = 0; i < rgb.numel(); ++i) g.rgb.data[i] = S(rgb.data[i]);
    g.depth = f.depth;
    g.sem = f.sem;
    g.valid_depth = valid_depth_mask(f, ap.near, ap.far);
    g.covered.resize(f.alpha.size());
    for (size_t i = 0; i < f.alpha.size(); ++i) g.covered[i] = f.alpha[i] > 127 ? 1 : 0;
  }
  return out;
}

struct AdapterTrainResult {
  AdapterNet<float> net;
  std::vector<double> losses;
};

// Stage-1 training against a frozen autoencoder. Samples (episode, time)
// pairs from the training split, runs encode/decode once per pair (cached),
// and optimizes only adapter parameters.
AdapterTrainResult train_adapter(const Dataset& ds, const RunConfig& cfg,
                                 const VaeNet<float>& vae, uint64_t seed);

CheckpointMap adapter_checkpoint(AdapterNet<float>& net);
void adapter_restore(AdapterNet<float>& net, const CheckpointMap& m);
AdapterParams adapter_params_from(const RunConfig& cfg);
RenderWeights render_weights_from(const RunConfig& cfg);

// Lifts observed frames (full resolution, [view][time] indexed like rig.views)
// into a Gaussian scene anchored at the given ego pose: encode, decode, fuse
// the latest frame's feature ladder, unproject the head output.
GaussianScene reconstruct_scene(const VaeNet<float>& vae, const AdapterNet<float>& net,
                                const std::vector<std::vector<Tensor<float>>>& obs_frames,
                                const CameraRig& rig, const CameraPose& ego_pose,
                                int time_index, const AdapterParams& ap);

}  // namespace phigen
