#include "phigen/vae.hpp"

#include <cmath>

namespace phigen {

VaeTrainResult train_vae(const Dataset& ds, const RunConfig& cfg, uint64_t seed) {
  const int W = int(cfg.get_int("vae.width"));
  const int H = int(cfg.get_int("vae.height"));
  const int steps = int(cfg.get_int("vae.steps"));
  const int batch = int(cfg.get_int("vae.batch"));
  const int T = int(cfg.get_int("dataset.frames"));
  const int V = int(ds.rig.views.size());
  if (ds.train_count < 1) throw ConfigError("train_vae: empty training split");

  // Preload every training frame, resampled to the training resolution.
  std::vector<Tensor<float>> cache(size_t(ds.train_count) * V * T);
  for (int ep = 0; ep < ds.train_count; ++ep)
    for (int t = 0; t < T; ++t)
      for (int v = 0; v < V; ++v)
        cache[(size_t(ep) * T + t) * V + v] = rgb_tensor(load_frame(ds, ep, t, v).rgb, W, H);

  VaeTrainResult res;
  Rng root(seed);
  res.net.init(int(cfg.get_int("vae.latent_channels")), int(cfg.get_int("vae.base_channels")),
               root.split(rngstream::kInit));
  std::vector<NamedParam<float>> params;
  res.net.collect(params);

  AdamWConfig opt;
  opt.weight_decay = cfg.get_double("vae.weight_decay");
  opt.clip_norm = 1.0;
  const double base_lr = cfg.get_double("vae.lr");
  const double min_lr = cfg.get_double("vae.min_lr");
  AdamWState<float> st;
  Rng train = root.split(rngstream::kTrain);

  for (int step = 0; step < steps; ++step) {
    zero_grads(params);
    double batch_loss = 0;
    for (int b = 0; b < batch; ++b) {
      const int ep = int(train.uniform_int(uint64_t(ds.train_count)));
      const int v = int(train.uniform_int(uint64_t(V)));
      const int t0 = int(train.uniform_int(uint64_t(T - 1)));
      const Tensor<float>& x0 = cache[(size_t(ep) * T + t0) * V + v];
      const Tensor<float>& x1 = cache[(size_t(ep) * T + t0 + 1) * V + v];

      vae_detail::EncCache<float> ec0, ec1;
      Tensor<float> pre0 = res.net.enc_spatial(x0, &ec0);
      Tensor<float> pre1 = res.net.enc_spatial(x1, &ec1);
      vae_detail::MixCache<float> mc;
      Tensor<float> z = res.net.mix_pair(pre0, pre1, &mc);
      Tensor<float> frames[2], dz;
      vae_detail::DecCache<float> dc[2];
      res.net.decode_step(z, frames, dc, &dz);

      batch_loss += 0.5 * (mse_loss(frames[0], x0) + mse_loss(frames[1], x1));
      const float up = 1.0f / float(2 * batch);
      Tensor<float> gy[2] = {mse_loss_backward(frames[0], x0, up),
                             mse_loss_backward(frames[1], x1, up)};
      Tensor<float> gz = res.net.decode_step_backward(z, dz, dc, gy);
      auto [gpre0, gpre1] = res.net.mix_pair_backward(mc, gz);
      res.net.enc_spatial_backward(ec0, gpre0);
      res.net.enc_spatial_backward(ec1, gpre1);
    }
    batch_loss /= batch;
    if (!std::isfinite(batch_loss))
      throw NumericError("train_vae: non-finite loss at step " + std::to_string(step));
    opt.lr = cosine_lr(step, steps, base_lr, min_lr);
    adamw_step(params, st, opt);
    res.losses.push_back(batch_loss);
  }
  res.net.set_requires_grad(false);
  return res;
}

CheckpointMap vae_checkpoint(VaeNet<float>& net) {
  std::vector<NamedParam<float>> params;
  net.collect(params);
  return snapshot(params);
}

void vae_restore(VaeNet<float>& net, const CheckpointMap& m) {
  std::vector<NamedParam<float>> params;
  net.collect(params);
  restore(params, m);
}

}  // namespace phigen
