#include "phigen/pipeline.hpp"

#include <cmath>

namespace phigen {

namespace {

RenderConfig render_config_from(const RunConfig& cfg) {
  RenderConfig r;
  r.background = Eigen::Vector3f(float(cfg.get_double("render.bg_r")),
                                 float(cfg.get_double("render.bg_g")),
                                 float(cfg.get_double("render.bg_b")));
  r.threads = int(cfg.get_int("render.threads"));
  return r;
}

}  // namespace

Models load_models(const RunConfig& cfg, const std::string& vae_ckpt,
                   const std::string& adapter_ckpt, const std::string& flow_ckpt) {
  Models m;
  m.vae.init(int(cfg.get_int("vae.latent_channels")), int(cfg.get_int("vae.base_channels")),
             Rng(0));
  vae_restore(m.vae, read_checkpoint(vae_ckpt));
  m.adapter.init(int(cfg.get_int("adapter.channels")), m.vae.base_c,
                 int(cfg.get_int("dataset.classes")), int(cfg.get_int("adapter.depth_bins")),
                 Rng(0));
  adapter_restore(m.adapter, read_checkpoint(adapter_ckpt));
  m.flow.init(m.vae.latent_c, int(cfg.get_int("flow.base_channels")),
              int(cfg.get_int("flow.time_embed_dim")), Rng(0));
  flow_restore(m.flow, m.stats, read_checkpoint(flow_ckpt));
  return m;
}

GaussianScene reconstruct_history(const Models& m, const Dataset& ds, int episode, int t_latest,
                                  const RunConfig& cfg) {
  const int t_obs = int(cfg.get_int("dataset.t_obs"));
  if (t_latest + 1 < t_obs) throw ConfigError("reconstruct_history: not enough frames observed");
  const int V = int(ds.rig.views.size());
  std::vector<std::vector<Tensor<float>>> obs;
  obs.resize(size_t(V));
  for (int v = 0; v < V; ++v)
    for (int k = 0; k < t_obs; ++k)
      obs[size_t(v)].push_back(rgb_tensor(load_frame(ds, episode, t_latest - t_obs + 1 + k, v).rgb));
  const AdapterParams ap = adapter_params_from(cfg);
  const Trajectory& traj = ds.episodes[size_t(episode)].trajectory;
  return reconstruct_scene(m.vae, m.adapter, obs, ds.rig, traj.poses[size_t(t_latest)], t_latest,
                           ap);
}

FutureResult generate_future(const Models& m, const Dataset& ds, int episode,
                             const GaussianScene& history, int w, const SfParams& sf,
                             const RunConfig& cfg, Rng& rng,
                             const std::vector<int>& context_times) {
  const int t_future = int(cfg.get_int("dataset.t_future"));
  const int V = int(ds.rig.views.size());
  const Trajectory& traj = ds.episodes[size_t(episode)].trajectory;
  const AdapterParams ap = adapter_params_from(cfg);
  const RenderConfig rcfg = render_config_from(cfg);

  // Independent draw streams keep the integration noise identical across
  // forcing modes for a given chunk seed.
  Rng noise_rng = rng.split(1);
  Rng u_rng = rng.split(2);

  FutureResult res;
  res.ren_frames.resize(size_t(V));
  res.frames.resize(size_t(V));

  // 1. Advect the history to each future time and render the conditions.
  std::vector<std::vector<std::vector<float>>> ren_depth;  // [v][k]
  ren_depth.resize(size_t(V));
  for (auto& d : ren_depth) d.resize(size_t(t_future));
  std::vector<std::vector<Tensor<float>>> ren;
  ren.resize(size_t(V));
  for (int k = 0; k < t_future; ++k) {
    const int t = w + k;
    res.frame_ids.push_back(t);
    const GaussianScene adv = advect(history, t - history.time_index);
    for (int v = 0; v < V; ++v) {
      const RigView& view = ds.rig.views[size_t(v)];
      RenderOutput out =
          render(adv, view.intrinsics, compose(view.pose, traj.poses[size_t(t)]), rcfg);
      ren_depth[size_t(v)][size_t(k)] = std::move(out.depth);
      ren[size_t(v)].push_back(rgb_tensor(to_imagef(out)));
    }
  }
  res.ren_frames = ren;

  // 2. Reliability maps at image resolution, one per (frame, view).
  std::vector<std::vector<Tensor<float>>> umaps;
  umaps.resize(size_t(t_future));
  if (sf.mode != SfMode::off) {
    DecoderFeatures cond_feats;
    LatentTensor zc_feats;
    if (sf.mode == SfMode::entropy) {
      zc_feats = m.vae.encode(ren);
      m.vae.decode(zc_feats, &cond_feats);
    }
    for (int k = 0; k < t_future; ++k) {
      umaps[size_t(k)].resize(size_t(V));
      if (sf.mode == SfMode::entropy) {
        std::vector<Tensor<float>> f4, f2, f1;
        for (int v = 0; v < V; ++v) {
          f4.push_back(cond_feats.f4[size_t(v)][size_t(k)]);
          f2.push_back(cond_feats.f2[size_t(v)][size_t(k)]);
          f1.push_back(cond_feats.f1[size_t(v)][size_t(k)]);
        }
        const Tensor<float> raw = m.adapter.forward(f4, f2, f1, ds.rig);
        for (int v = 0; v < V; ++v)
          umaps[size_t(k)][size_t(v)] =
              u_entropy(depth_logit_slice(raw, m.adapter.head, ds.rig, v));
      } else {
        for (int v = 0; v < V; ++v) {
          const RigView& view = ds.rig.views[size_t(v)];
          if (sf.mode == SfMode::random) {
            Rng r = u_rng.split(uint64_t(k) * uint64_t(V) + uint64_t(v) + 1);
            umaps[size_t(k)][size_t(v)] =
                u_random(view.intrinsics.height, view.intrinsics.width, r);
          } else {
            std::vector<CameraPose> ctx;
            for (int ct : context_times)
              ctx.push_back(compose(view.pose, traj.poses[size_t(ct)]));
            umaps[size_t(k)][size_t(v)] = u_locpot(
                ren_depth[size_t(v)][size_t(k)], view.intrinsics,
                compose(view.pose, traj.poses[size_t(w + k)]), ctx, sf.sigma_ref, sf.b_min);
          }
        }
      }
    }
  }

  // 3. Conditioning latents, reliability-scaled, then guided integration.
  const LatentTensor zc = m.vae.encode(ren);
  LatentTensor zgen;
  zgen.resize(zc.t, zc.views, zc.c, zc.h, zc.w);
  for (int s = 0; s < zc.t; ++s) {
    std::vector<Tensor<float>> per_view;
    for (int v = 0; v < V; ++v) per_view.push_back(m.stats.normalize(zc.slice(s, v)));
    Tensor<float> cond = to_range_view(per_view, ds.rig);
    if (sf.mode != SfMode::off) {
      std::vector<Tensor<float>> u_per_view;
      for (int v = 0; v < V; ++v)
        u_per_view.push_back(
            u_to_latent(umaps[size_t(2 * s)][size_t(v)], umaps[size_t(2 * s + 1)][size_t(v)],
                        zc.w, zc.h));
      cond = sf_apply(cond, to_range_view(u_per_view, ds.rig));
    }
    Tensor<float> noise({zc.c, zc.h, zc.w * V});
    Rng nr = noise_rng.split(uint64_t(s) + 1);
    for (auto& x : noise.data) x = float(nr.normal());
    const Tensor<float> z0 = euler_sample(m.flow, cond, float(sf.omega),
                                          int(cfg.get_int("flow.sample_steps")), noise);
    std::vector<Tensor<float>> denorm = from_range_view(z0, ds.rig);
    for (int v = 0; v < V; ++v) zgen.set_slice(s, v, m.stats.denormalize(denorm[size_t(v)]));
  }

  // 4. Decode the generated latents and re-lift every frame into a scene.
  DecoderFeatures feats;
  std::vector<std::vector<Tensor<float>>> decoded = m.vae.decode(zgen, &feats);
  res.frames = decoded;
  for (int k = 0; k < t_future; ++k) {
    std::vector<Tensor<float>> f4, f2, f1;
    for (int v = 0; v < V; ++v) {
      f4.push_back(feats.f4[size_t(v)][size_t(k)]);
      f2.push_back(feats.f2[size_t(v)][size_t(k)]);
      f1.push_back(feats.f1[size_t(v)][size_t(k)]);
    }
    const Tensor<float> raw = m.adapter.forward(f4, f2, f1, ds.rig);
    res.scenes.push_back(
        predict_gaussians(raw, m.adapter.head, ds.rig, traj.poses[size_t(w + k)], w + k, ap));
  }
  return res;
}

RolloutResult rollout(const Models& m, const Dataset& ds, int episode, const SfParams& sf,
                      const RunConfig& cfg, uint64_t seed) {
  const int t_obs = int(cfg.get_int("dataset.t_obs"));
  const int t_future = int(cfg.get_int("dataset.t_future"));
  const int frames = int(cfg.get_int("dataset.frames"));
  const int V = int(ds.rig.views.size());
  const AdapterParams ap = adapter_params_from(cfg);
  const RenderConfig rcfg = render_config_from(cfg);
  const Trajectory& traj = ds.episodes[size_t(episode)].trajectory;

  std::vector<int> context_times;
  for (int t = 0; t < t_obs; ++t) context_times.push_back(t);

  RolloutResult res;
  res.frames.resize(size_t(V));
  Rng root(seed);
  Rng sample = root.split(rngstream::kSample);

  GaussianScene scene = reconstruct_history(m, ds, episode, t_obs - 1, cfg);
  int chunk_index = 0;
  for (int w = t_obs; w + t_future <= frames; w += t_future, ++chunk_index) {
    Rng chunk_rng = sample.split(uint64_t(chunk_index) + 1);
    FutureResult fr =
        generate_future(m, ds, episode, scene, w, sf, cfg, chunk_rng, context_times);

    // Hand-over smoothness: advected render vs decoded frame at the chunk's
    // first time step, pooled over views.
    std::vector<float> a, b;
    for (int v = 0; v < V; ++v) {
      a.insert(a.end(), fr.ren_frames[size_t(v)][0].data.begin(),
               fr.ren_frames[size_t(v)][0].data.end());
      b.insert(b.end(), fr.frames[size_t(v)][0].data.begin(),
               fr.frames[size_t(v)][0].data.end());
    }
    res.boundary_psnr.push_back(psnr(a, b));

    ChunkMetrics cm;
    cm.start = w;
    double rmse_sum = 0;
    int rmse_n = 0;
    for (int k = 0; k < t_future; ++k) {
      const int t = w + k;
      for (int v = 0; v < V; ++v) {
        const RigView& view = ds.rig.views[size_t(v)];
        const FrameGt gt = load_frame(ds, episode, t, v);
        cm.psnr += psnr(fr.frames[size_t(v)][size_t(k)].data, rgb_tensor(gt.rgb).data);
        RenderOutput out = render(fr.scenes[size_t(k)], view.intrinsics,
                                  compose(view.pose, traj.poses[size_t(t)]), rcfg);
        const std::vector<uint8_t> valid = valid_depth_mask(gt, ap.near, ap.far);
        bool any = false;
        for (uint8_t u : valid) any = any || u;
        if (any) {
          rmse_sum += depth_metrics(out.depth, gt.depth, valid).rmse;
          ++rmse_n;
        }
      }
    }
    cm.psnr /= double(t_future * V);
    cm.d_rmse = rmse_n ? rmse_sum / rmse_n : 0.0;
    res.chunks.push_back(cm);

    for (int v = 0; v < V; ++v)
      for (auto& f : fr.frames[size_t(v)]) res.frames[size_t(v)].push_back(std::move(f));
    for (int id : fr.frame_ids) res.frame_ids.push_back(id);
    for (auto& s : fr.scenes) res.scenes.push_back(std::move(s));
    scene = res.scenes.back();
  }
  return res;
}

}  // namespace phigen
