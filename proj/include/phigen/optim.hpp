#pragma once

#include <cmath>
#include <string>
#include <unordered_map>
#include <vector>

#include "phigen/layers.hpp"

namespace phigen {

struct AdamWConfig {
  double lr = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
  double weight_decay = 0.0;
  double clip_norm = 1.0;  // global gradient norm clip; <= 0 disables
};

template <class S>
struct AdamWState {
  std::unordered_map<std::string, std::vector<S>> m, v;
  long step = 0;
};

// One AdamW step over all parameters: global-norm clip, bias-corrected
// moments, decoupled weight decay. Returns the pre-clip gradient norm.
// Throws NumericError naming the first parameter with a non-finite gradient.
template <class S>
double adamw_step(std::vector<NamedParam<S>>& params, AdamWState<S>& st,
                  const AdamWConfig& cfg) {
  double norm_sq = 0;
  for (auto& p : params) {
    for (S g : p.t->grad) {
      if (!std::isfinite(double(g)))
        throw NumericError("adamw_step: non-finite gradient in " + p.name);
      norm_sq += double(g) * double(g);
    }
  }
  const double norm = std::sqrt(norm_sq);
  const double scale = (cfg.clip_norm > 0 && norm > cfg.clip_norm) ? cfg.clip_norm / norm : 1.0;

  st.step += 1;
  const double bc1 = 1.0 - std::pow(cfg.beta1, double(st.step));
  const double bc2 = 1.0 - std::pow(cfg.beta2, double(st.step));
  for (auto& p : params) {
    auto& m = st.m[p.name];
    auto& v = st.v[p.name];
    if (m.size() != p.t->numel()) m.assign(p.t->numel(), S(0));
    if (v.size() != p.t->numel()) v.assign(p.t->numel(), S(0));
    for (size_t i = 0; i < p.t->numel(); ++i) {
      const double g = double(p.t->grad[i]) * scale;
      m[i] = S(cfg.beta1 * double(m[i]) + (1 - cfg.beta1) * g);
      v[i] = S(cfg.beta2 * double(v[i]) + (1 - cfg.beta2) * g * g);
      const double mhat = double(m[i]) / bc1;
      const double vhat = double(v[i]) / bc2;
      double upd = cfg.lr * (mhat / (std::sqrt(vhat) + cfg.eps));
      upd += cfg.lr * cfg.weight_decay * double(p.t->data[i]);
      p.t->data[i] -= S(upd);
    }
  }
  return norm;
}

// Cosine annealing from base_lr to min_lr over total_steps. restart_period > 0
// wraps the phase so lr(k * period) == base_lr.
inline double cosine_lr(long step, long total_steps, double base_lr, double min_lr,
                        long restart_period = 0) {
  double phase;
  if (restart_period > 0) {
    phase = double(step % restart_period) / double(restart_period);
  } else {
    phase = total_steps > 0 ? double(step) / double(total_steps) : 1.0;
    if (phase > 1.0) phase = 1.0;
  }
  return min_lr + (base_lr - min_lr) * 0.5 * (1.0 + std::cos(3.14159265358979323846 * phase));
}

template <class S>
void zero_grads(std::vector<NamedParam<S>>& params) {
  for (auto& p : params) p.t->zero_grad();
}

}  // namespace phigen
