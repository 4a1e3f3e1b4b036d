#include "phigen/flow.hpp"

#include <cmath>

namespace phigen {

LatentStats latent_stats(const std::vector<Tensor<float>>& zs) {
  if (zs.empty()) throw ConfigError("latent_stats: no latents");
  const int C = zs[0].shape[0];
  std::vector<double> sum(size_t(C), 0.0), sum2(size_t(C), 0.0);
  size_t count = 0;
  for (const auto& z : zs) {
    if (z.shape[0] != C) throw ConfigError("latent_stats: channel mismatch");
    const size_t plane = size_t(z.shape[1]) * z.shape[2];
    for (int c = 0; c < C; ++c)
      for (size_t i = 0; i < plane; ++i) {
        const double v = double(z.data[size_t(c) * plane + i]);
        sum[size_t(c)] += v;
        sum2[size_t(c)] += v * v;
      }
    count += plane;
  }
  LatentStats st;
  st.mean.resize(size_t(C));
  st.stdev.resize(size_t(C));
  for (int c = 0; c < C; ++c) {
    const double m = sum[size_t(c)] / double(count);
    const double var = std::max(sum2[size_t(c)] / double(count) - m * m, 0.0);
    st.mean[size_t(c)] = float(m);
    st.stdev[size_t(c)] = std::max(float(std::sqrt(var)), 1e-6f);
  }
  return st;
}

Tensor<float> euler_sample(const DenoiserNet<float>& net, const Tensor<float>& cond, float omega,
                           int nsteps, const Tensor<float>& noise) {
  if (nsteps < 1) throw ConfigError("euler_sample: nsteps must be positive");
  Tensor<float> z = noise;
  const float dt = 1.0f / float(nsteps);
  for (int k = 0; k < nsteps; ++k) {
    const float t = 1.0f - float(k) * dt;
    const Tensor<float> v = guided_velocity(net, z, cond, t, omega);
    for (size_t i = 0; i < z.numel(); ++i) z.data[i] += dt * v.data[i];
  }
  return z;
}

namespace {

struct FlowSample {
  Tensor<float> z0, cond;  // normalized range-view latent slices
};

// Builds (target, context) latent pairs for one phase resolution. The context
// images come from re-rendering the reconstructed scene at the target poses.
std::vector<FlowSample> build_samples(const Dataset& ds, const RunConfig& cfg,
                                      const VaeNet<float>& vae, const AdapterNet<float>& adapter,
                                      int pw, int ph, std::vector<Tensor<float>>* raw_targets) {
  const int frames = int(cfg.get_int("dataset.frames"));
  const int t_obs = int(cfg.get_int("dataset.t_obs"));
  const int t_future = int(cfg.get_int("dataset.t_future"));
  const int V = int(ds.rig.views.size());
  const AdapterParams ap = adapter_params_from(cfg);
  RenderConfig rcfg;
  rcfg.background = Eigen::Vector3f(float(cfg.get_double("render.bg_r")),
                                    float(cfg.get_double("render.bg_g")),
                                    float(cfg.get_double("render.bg_b")));

  std::vector<FlowSample> samples;
  for (int ep = 0; ep < ds.train_count; ++ep) {
    const Trajectory& traj = ds.episodes[size_t(ep)].trajectory;
    for (int w = t_obs; w + t_future <= frames; w += t_future) {
      std::vector<std::vector<Tensor<float>>> obs;
      obs.resize(size_t(V));
      for (int v = 0; v < V; ++v)
        for (int k = 0; k < t_obs; ++k)
          obs[size_t(v)].push_back(rgb_tensor(load_frame(ds, ep, w - t_obs + k, v).rgb));
      GaussianScene scene = reconstruct_scene(vae, adapter, obs, ds.rig,
                                              traj.poses[size_t(w - 1)], w - 1, ap);

      std::vector<std::vector<Tensor<float>>> gt, ren;
      gt.resize(size_t(V));
      ren.resize(size_t(V));
      for (int k = 0; k < t_future; ++k) {
        const int t = w + k;
        const GaussianScene adv = advect(scene, t - scene.time_index);
        for (int v = 0; v < V; ++v) {
          const RigView& view = ds.rig.views[size_t(v)];
          RenderOutput out =
              render(adv, view.intrinsics, compose(view.pose, traj.poses[size_t(t)]), rcfg);
          ren[size_t(v)].push_back(rgb_tensor(to_imagef(out), pw, ph));
          gt[size_t(v)].push_back(rgb_tensor(load_frame(ds, ep, t, v).rgb, pw, ph));
        }
      }
      const LatentTensor z0 = vae.encode(gt);
      const LatentTensor zc = vae.encode(ren);
      for (int k = 0; k < z0.t; ++k) {
        std::vector<Tensor<float>> z0v, zcv;
        for (int v = 0; v < V; ++v) {
          z0v.push_back(z0.slice(k, v));
          zcv.push_back(zc.slice(k, v));
        }
        FlowSample s;
        s.z0 = to_range_view(z0v, ds.rig);
        s.cond = to_range_view(zcv, ds.rig);
        if (raw_targets) raw_targets->push_back(s.z0);
        samples.push_back(std::move(s));
      }
    }
  }
  if (samples.empty()) throw ConfigError("train_flow: no training windows");
  return samples;
}

}  // namespace

FlowTrainResult train_flow(const Dataset& ds, const RunConfig& cfg, const VaeNet<float>& vae,
                           const AdapterNet<float>& adapter, uint64_t seed) {
  FlowTrainResult res;
  Rng root(seed);
  res.net.init(vae.latent_c, int(cfg.get_int("flow.base_channels")),
               int(cfg.get_int("flow.time_embed_dim")), root.split(rngstream::kInit));
  std::vector<NamedParam<float>> params;
  res.net.collect(params);
  Rng train = root.split(rngstream::kTrain);

  AdamWConfig opt;
  opt.weight_decay = cfg.get_double("flow.weight_decay");
  opt.clip_norm = 1.0;
  AdamWState<float> st;
  const double min_lr = cfg.get_double("flow.min_lr");
  const double dropout = cfg.get_double("flow.dropout");

  struct Phase {
    int steps, pw, ph;
    double lr;
  };
  const Phase phases[2] = {
      {int(cfg.get_int("flow.steps1")), int(cfg.get_int("flow.width1")),
       int(cfg.get_int("flow.height1")), cfg.get_double("flow.lr1")},
      {int(cfg.get_int("flow.steps2")), int(cfg.get_int("dataset.width")),
       int(cfg.get_int("dataset.height")), cfg.get_double("flow.lr2")},
  };

  for (int phase = 0; phase < 2; ++phase) {
    const Phase& ph = phases[phase];
    std::vector<Tensor<float>> raw_targets;
    std::vector<FlowSample> samples = build_samples(ds, cfg, vae, adapter, ph.pw, ph.ph,
                                                    phase == 0 ? &raw_targets : nullptr);
    if (phase == 0) res.stats = latent_stats(raw_targets);
    for (auto& s : samples) {
      s.z0 = res.stats.normalize(s.z0);
      s.cond = res.stats.normalize(s.cond);
    }

    for (int step = 0; step < ph.steps; ++step) {
      zero_grads(params);
      const FlowSample& s = samples[train.uniform_int(samples.size())];
      const float t = float(train.uniform());
      const bool drop = train.uniform() < dropout;
      Tensor<float> eps = zeros_like(s.z0);
      for (auto& v : eps.data) v = float(train.normal());

      const Tensor<float> zt = bridge_point(s.z0, eps, t);
      const Tensor<float> target = velocity_target(s.z0, eps);
      const Tensor<float> cond =
          drop ? res.net.null_condition(s.z0.shape[1], s.z0.shape[2]) : s.cond;
      DenoiserCache<float> cache;
      const Tensor<float> v = res.net.forward(zt, cond, t, &cache);
      const float loss = mse_loss(v, target);
      if (!std::isfinite(loss))
        throw NumericError("train_flow: non-finite loss at step " + std::to_string(step));
      const Tensor<float> gv = mse_loss_backward(v, target);
      const Tensor<float> gzin = res.net.backward(cache, gv);
      if (drop) {
        // Condition half of the input gradient flows into the null embedding.
        const size_t plane = size_t(s.z0.shape[1]) * s.z0.shape[2];
        for (int c = 0; c < res.net.latent_c; ++c) {
          float acc = 0;
          const size_t off = size_t(res.net.latent_c + c) * plane;
          for (size_t i = 0; i < plane; ++i) acc += gzin.data[off + i];
          res.net.null_embed.grad[size_t(c)] += acc;
        }
      }
      opt.lr = cosine_lr(step, ph.steps, ph.lr, min_lr);
      adamw_step(params, st, opt);
      res.losses.push_back(double(loss));
    }
  }
  return res;
}

CheckpointMap flow_checkpoint(DenoiserNet<float>& net, const LatentStats& stats) {
  std::vector<NamedParam<float>> params;
  net.collect(params);
  CheckpointMap m = snapshot(params);
  m["flow.stats.mean"] = CheckpointTensor{{int(stats.mean.size())}, stats.mean};
  m["flow.stats.std"] = CheckpointTensor{{int(stats.stdev.size())}, stats.stdev};
  return m;
}

void flow_restore(DenoiserNet<float>& net, LatentStats& stats, const CheckpointMap& m) {
  CheckpointMap rest = m;
  const auto mean = rest.find("flow.stats.mean");
  const auto sd = rest.find("flow.stats.std");
  if (mean == rest.end() || sd == rest.end())
    throw IoError("flow checkpoint: missing latent statistics", -1);
  stats.mean = mean->second.data;
  stats.stdev = sd->second.data;
  rest.erase("flow.stats.mean");
  rest.erase("flow.stats.std");
  std::vector<NamedParam<float>> params;
  net.collect(params);
  restore(params, rest);
}

}  // namespace phigen
