#include "phigen/adapter.hpp"

#include <cmath>

namespace phigen {

RangeLayout range_layout(const CameraRig& rig, int h, int view_w) {
  RangeLayout lay;
  lay.views = int(rig.views.size());
  lay.view_w = view_w;
  lay.h = h;
  lay.order.resize(size_t(lay.views));
  std::iota(lay.order.begin(), lay.order.end(), 0);
  std::sort(lay.order.begin(), lay.order.end(), [&](int a, int b) {
    const RigView &va = rig.views[size_t(a)], &vb = rig.views[size_t(b)];
    if (va.azimuth != vb.azimuth) return va.azimuth < vb.azimuth;
    return va.view_id < vb.view_id;
  });
  return lay;
}

namespace {

constexpr int kNbrOffsets[9][2] = {{0, 0},  {-1, 0}, {0, -1}, {0, 1},  {1, 0},
                                   {-1, -1}, {-1, 1}, {1, -1}, {1, 1}};

template <class S>
struct Candidate {
  int cy = 0, ccol = 0;
  S r2 = 0;  // squared pixel offset from the target pixel
  PixelDecode<S> p;
  S sigma2 = 0, nker = 0, weight = 0;
};

// Candidates for one pixel: itself plus in-view ring-1 neighbours in a fixed
// order, sorted front-to-back by predicted distance.
template <class S>
void gather_candidates(const Tensor<S>& raw, const HeadLayout& hl, const AdapterParams& ap,
                       int y, int x, int block, int h, int w, S f_grid,
                       std::vector<Candidate<S>>& out) {
  out.clear();
  for (const auto& off : kNbrOffsets) {
    if (int(out.size()) >= ap.topk) break;
    const int ny = y + off[0], nx = x + off[1];
    if (ny < 0 || ny >= h || nx < 0 || nx >= w) continue;
    Candidate<S> c;
    c.cy = ny;
    c.ccol = block * w + nx;
    c.r2 = S(off[0] * off[0] + off[1] * off[1]);
    c.p = decode_pixel(raw, hl, ny, c.ccol, ap);
    c.sigma2 = (f_grid * c.p.scale_mean / c.p.dist) * (f_grid * c.p.scale_mean / c.p.dist) +
               S(0.3);
    c.nker = std::exp(S(-0.5) * c.r2 / c.sigma2);
    c.weight = c.p.alpha * c.nker;
    out.push_back(c);
  }
  std::stable_sort(out.begin(), out.end(),
                   [](const Candidate<S>& a, const Candidate<S>& b) { return a.p.dist < b.p.dist; });
}

}  // namespace

template <class S>
SoftLossTerms<S> render_loss(const Tensor<S>& raw, const HeadLayout& hl, const CameraRig& rig,
                             const std::vector<GtFrame<S>>& gt_by_block,
                             const RenderWeights& wts, const AdapterParams& ap) {
  const int H = raw.shape[1], Wtot = raw.shape[2];
  const int V = int(rig.views.size());
  const int W = Wtot / V;
  if (int(gt_by_block.size()) != V) throw ConfigError("render_loss: gt count != view count");
  const RangeLayout lay = range_layout(rig, H, W);
  const int Cl = hl.classes;

  // Global supervision counts fix the loss normalization up front.
  size_t n_valid = 0, n_cov = 0;
  for (const auto& g : gt_by_block) {
    for (uint8_t v : g.valid_depth) n_valid += v ? 1 : 0;
    for (uint8_t v : g.covered) n_cov += v ? 1 : 0;
    for (float d : g.depth)
      if (!std::isfinite(d)) throw NumericError("render_loss: non-finite gt depth");
  }
  const S inv_rgb = S(1) / S(size_t(H) * Wtot * 3);
  const S inv_valid = S(1) / S(std::max<size_t>(n_valid, 1));
  const S inv_cov = S(1) / S(std::max<size_t>(n_cov, 1));

  SoftLossTerms<S> res;
  res.graw = zeros_like(raw);
  std::vector<Candidate<S>> cand;
  std::vector<S> trans;
  std::vector<S> sem(size_t(Cl), S(0)), gsem(size_t(Cl), S(0));

  for (int j = 0; j < V; ++j) {
    const RigView& view = rig.views[size_t(lay.order[j])];
    const S f_grid = S(0.5) * (S(view.intrinsics.fx) + S(view.intrinsics.fy)) * S(W) /
                     S(view.intrinsics.width);
    const GtFrame<S>& gt = gt_by_block[size_t(j)];
    for (int y = 0; y < H; ++y)
      for (int x = 0; x < W; ++x) {
        const int col = j * W + x;
        const size_t pix = size_t(y) * W + x;
        gather_candidates(raw, hl, ap, y, x, j, H, W, f_grid, cand);

        // Front-to-back composite of color, distance, and semantic logits.
        trans.assign(cand.size(), S(1));
        S rgb[3] = {0, 0, 0}, dep = 0;
        std::fill(sem.begin(), sem.end(), S(0));
        S T = 1;
        for (size_t q = 0; q < cand.size(); ++q) {
          trans[q] = T;
          const Candidate<S>& c = cand[q];
          const S tw = T * c.weight;
          for (int k = 0; k < 3; ++k) rgb[k] += tw * c.p.color[k];
          dep += tw * c.p.dist;
          for (int k = 0; k < Cl; ++k) sem[size_t(k)] += tw * raw.at(hl.sem() + k, c.cy, c.ccol);
          T *= (S(1) - c.weight);
        }
        for (int k = 0; k < 3; ++k) rgb[k] += T * S(wts.background[k]);
        dep += T * S(ap.far);

        const uint8_t vmask = gt.valid_depth[pix], cmask = gt.covered[pix];
        // Per-channel upstream gradient of the composited outputs.
        S grgb[3], gdep = 0;
        for (int k = 0; k < 3; ++k) {
          const S diff = rgb[k] - gt.rgb.at(k, y, x);
          res.rgb += std::abs(diff) * inv_rgb;
          grgb[k] = S(wts.w_rgb) * inv_rgb * (diff > 0 ? S(1) : (diff < 0 ? S(-1) : S(0)));
        }
        if (vmask) {
          const S diff = dep - S(gt.depth[pix]);
          res.depth += std::abs(diff) * inv_valid;
          gdep = S(wts.w_d) * inv_valid * (diff > 0 ? S(1) : (diff < 0 ? S(-1) : S(0)));
        }
        std::fill(gsem.begin(), gsem.end(), S(0));
        if (cmask) {
          const int target = int(gt.sem[pix]);
          S mx = sem[0];
          for (int k = 1; k < Cl; ++k) mx = std::max(mx, sem[size_t(k)]);
          S lse = 0;
          for (int k = 0; k < Cl; ++k) lse += std::exp(sem[size_t(k)] - mx);
          res.sem += (std::log(lse) + mx - sem[size_t(target)]) * inv_cov;
          for (int k = 0; k < Cl; ++k)
            gsem[size_t(k)] = S(wts.w_s) * inv_cov * (std::exp(sem[size_t(k)] - mx) / lse);
          gsem[size_t(target)] -= S(wts.w_s) * inv_cov;
        }

        // Depth-bin classification at the pixel itself (no compositing).
        if (vmask) {
          const int target = depth_bin(double(gt.depth[pix]), ap.near, ap.far, hl.depth_bins);
          S mx = raw.at(hl.bins(), y, col);
          for (int k = 1; k < hl.depth_bins; ++k)
            mx = std::max(mx, raw.at(hl.bins() + k, y, col));
          S lse = 0;
          for (int k = 0; k < hl.depth_bins; ++k)
            lse += std::exp(raw.at(hl.bins() + k, y, col) - mx);
          res.bins += (std::log(lse) + mx - raw.at(hl.bins() + target, y, col)) * inv_valid;
          for (int k = 0; k < hl.depth_bins; ++k)
            res.graw.at(hl.bins() + k, y, col) +=
                S(wts.w_db) * inv_valid * (std::exp(raw.at(hl.bins() + k, y, col) - mx) / lse);
          res.graw.at(hl.bins() + target, y, col) -= S(wts.w_db) * inv_valid;
        }

        // Composite backward. F_q . G with the weighted upstream per channel;
        // suffix S_q tracks everything behind q including the background term.
        S suffix = T * (S(wts.background[0]) * grgb[0] + S(wts.background[1]) * grgb[1] +
                        S(wts.background[2]) * grgb[2] + S(ap.far) * gdep);
        for (int qi = int(cand.size()) - 1; qi >= 0; --qi) {
          const Candidate<S>& c = cand[size_t(qi)];
          const S Tq = trans[size_t(qi)];
          S fdotg = 0;
          for (int k = 0; k < 3; ++k) fdotg += c.p.color[k] * grgb[k];
          fdotg += c.p.dist * gdep;
          for (int k = 0; k < Cl; ++k) fdotg += raw.at(hl.sem() + k, c.cy, c.ccol) * gsem[size_t(k)];

          const S gw = Tq * fdotg - suffix / (S(1) - c.weight);
          S gdist = Tq * c.weight * gdep;  // direct distance-channel term
          const S galpha = gw * c.nker;
          S gnker = gw * c.p.alpha;
          // Footprint kernel: N = exp(-r^2 / (2 sigma^2)), sigma^2 = (f s / d)^2 + 0.3.
          const S dN_ds2 = c.nker * S(0.5) * c.r2 / (c.sigma2 * c.sigma2);
          const S fs = f_grid * c.p.scale_mean;
          S gsmean = gnker * dN_ds2 * S(2) * fs * f_grid / (c.p.dist * c.p.dist);
          gdist += gnker * dN_ds2 * S(-2) * fs * fs / (c.p.dist * c.p.dist * c.p.dist);

          // Chain to the stored pre-activations.
          for (int k = 0; k < 3; ++k) {
            const S cc = c.p.color[k];
            res.graw.at(hl.color() + k, c.cy, c.ccol) += Tq * c.weight * grgb[k] * cc * (S(1) - cc);
          }
          const S ds = sigmoid_scalar(c.p.raw_dist);
          res.graw.at(hl.dist(), c.cy, c.ccol) += gdist * S(ap.far - ap.near) * ds * (S(1) - ds);
          res.graw.at(hl.alpha(), c.cy, c.ccol) += galpha * c.p.alpha * (S(1) - c.p.alpha);
          for (int k = 0; k < 3; ++k) {
            const S sp = softplus_scalar(c.p.raw_scale[k]);
            if (sp > S(1e-3) && sp < S(2))
              res.graw.at(hl.scale() + k, c.cy, c.ccol) +=
                  gsmean * (S(1) / S(3)) * sigmoid_scalar(c.p.raw_scale[k]);
          }
          for (int k = 0; k < Cl; ++k)
            res.graw.at(hl.sem() + k, c.cy, c.ccol) += Tq * c.weight * gsem[size_t(k)];

          suffix += Tq * c.weight * fdotg;
        }
      }
  }
  res.total = S(wts.w_rgb) * res.rgb + S(wts.w_d) * res.depth + S(wts.w_s) * res.sem +
              S(wts.w_db) * res.bins;
  return res;
}

template SoftLossTerms<float> render_loss<float>(const Tensor<float>&, const HeadLayout&,
                                                 const CameraRig&,
                                                 const std::vector<GtFrame<float>>&,
                                                 const RenderWeights&, const AdapterParams&);
template SoftLossTerms<double> render_loss<double>(const Tensor<double>&, const HeadLayout&,
                                                   const CameraRig&,
                                                   const std::vector<GtFrame<double>>&,
                                                   const RenderWeights&, const AdapterParams&);

AdapterParams adapter_params_from(const RunConfig& cfg) {
  AdapterParams ap;
  ap.near = cfg.get_double("adapter.near");
  ap.far = cfg.get_double("adapter.far");
  ap.flow_max = cfg.get_double("adapter.flow_max");
  ap.topk = int(cfg.get_int("adapter.topk"));
  return ap;
}

RenderWeights render_weights_from(const RunConfig& cfg) {
  RenderWeights w;
  w.w_rgb = cfg.get_double("adapter.w_rgb");
  w.w_d = cfg.get_double("adapter.w_d");
  w.w_s = cfg.get_double("adapter.w_s");
  w.w_db = cfg.get_double("adapter.w_db");
  w.background = Eigen::Vector3f(float(cfg.get_double("render.bg_r")),
                                 float(cfg.get_double("render.bg_g")),
                                 float(cfg.get_double("render.bg_b")));
  return w;
}

AdapterTrainResult train_adapter(const Dataset& ds, const RunConfig& cfg,
                                 const VaeNet<float>& vae, uint64_t seed) {
  const int steps = int(cfg.get_int("adapter.steps"));
  const int frames = int(cfg.get_int("dataset.frames"));
  const int V = int(ds.rig.views.size());
  const AdapterParams ap = adapter_params_from(cfg);
  const RenderWeights wts = render_weights_from(cfg);
  if (ds.train_count < 1) throw ConfigError("train_adapter: empty training split");

  // Supervision anchors: every fourth frame of each training episode.
  std::vector<int> t_list;
  for (int t = 0; t < frames && int(t_list.size()) < 4; t += 4) t_list.push_back(t);

  struct Sample {
    std::vector<Tensor<float>> f4, f2, f1;  // per view, latest frame of the pair
    std::vector<GtFrame<float>> gt;
  };
  std::vector<Sample> samples;
  samples.reserve(size_t(ds.train_count) * t_list.size());
  for (int ep = 0; ep < ds.train_count; ++ep)
    for (int t : t_list) {
      Sample s;
      std::vector<std::vector<Tensor<float>>> frames_v;
      frames_v.resize(size_t(V));
      for (int v = 0; v < V; ++v)
        frames_v[size_t(v)].push_back(rgb_tensor(load_frame(ds, ep, t, v).rgb));
      LatentTensor z = vae.encode(frames_v);
      DecoderFeatures feats;
      vae.decode(z, &feats);
      for (int v = 0; v < V; ++v) {
        s.f4.push_back(feats.f4[size_t(v)][1]);
        s.f2.push_back(feats.f2[size_t(v)][1]);
        s.f1.push_back(feats.f1[size_t(v)][1]);
      }
      s.gt = gt_frames<float>(ds, ep, t, ap);
      samples.push_back(std::move(s));
    }

  AdapterTrainResult res;
  Rng root(seed);
  res.net.init(int(cfg.get_int("adapter.channels")), vae.base_c,
               int(cfg.get_int("dataset.classes")), int(cfg.get_int("adapter.depth_bins")),
               root.split(rngstream::kInit));
  std::vector<NamedParam<float>> params;
  res.net.collect(params);

  AdamWConfig opt;
  opt.weight_decay = cfg.get_double("adapter.weight_decay");
  opt.clip_norm = 1.0;
  const double base_lr = cfg.get_double("adapter.lr");
  const double min_lr = cfg.get_double("adapter.min_lr");
  AdamWState<float> st;
  Rng train = root.split(rngstream::kTrain);

  for (int step = 0; step < steps; ++step) {
    zero_grads(params);
    const Sample& s = samples[train.uniform_int(samples.size())];
    AdapterCache<float> cache;
    res.net.forward(s.f4, s.f2, s.f1, ds.rig, &cache);
    SoftLossTerms<float> loss =
        render_loss<float>(cache.raw, res.net.head, ds.rig, s.gt, wts, ap);
    if (!std::isfinite(double(loss.total)))
      throw NumericError("train_adapter: non-finite loss at step " + std::to_string(step));
    res.net.backward(cache, loss.graw);
    opt.lr = cosine_lr(step, steps, base_lr, min_lr);
    adamw_step(params, st, opt);
    res.losses.push_back(double(loss.total));
  }
  return res;
}

GaussianScene reconstruct_scene(const VaeNet<float>& vae, const AdapterNet<float>& net,
                                const std::vector<std::vector<Tensor<float>>>& obs_frames,
                                const CameraRig& rig, const CameraPose& ego_pose,
                                int time_index, const AdapterParams& ap) {
  LatentTensor z = vae.encode(obs_frames);
  DecoderFeatures feats;
  vae.decode(z, &feats);
  const int last = 2 * z.t - 1;  // decoded index of the newest frame
  const int V = int(rig.views.size());
  std::vector<Tensor<float>> f4, f2, f1;
  for (int v = 0; v < V; ++v) {
    f4.push_back(feats.f4[size_t(v)][size_t(last)]);
    f2.push_back(feats.f2[size_t(v)][size_t(last)]);
    f1.push_back(feats.f1[size_t(v)][size_t(last)]);
  }
  Tensor<float> raw = net.forward(f4, f2, f1, rig);
  return predict_gaussians(raw, net.head, rig, ego_pose, time_index, ap);
}

CheckpointMap adapter_checkpoint(AdapterNet<float>& net) {
  std::vector<NamedParam<float>> params;
  net.collect(params);
  return snapshot(params);
}

void adapter_restore(AdapterNet<float>& net, const CheckpointMap& m) {
  std::vector<NamedParam<float>> params;
  net.collect(params);
  restore(params, m);
}

}  // namespace phigen
