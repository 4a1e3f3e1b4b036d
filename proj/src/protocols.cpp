#include "phigen/protocols.hpp"

#include <cmath>
#include <cstdio>

#include "phigen/manifest.hpp"

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

// Ego pose moved sideways (ego-right axis) by d meters.
CameraPose shift_lateral(const CameraPose& pose, double d) {
  const Eigen::Vector3f right = pose.R.transpose() * Eigen::Vector3f(1, 0, 0);
  const Eigen::Vector3f c = pose.center() + float(d) * right;
  CameraPose out = pose;
  out.T = -(pose.R * c);
  return out;
}

std::vector<int> eval_episodes(const Dataset& ds) {
  std::vector<int> eps;
  for (int ep = ds.train_count; ep < ds.train_count + ds.eval_count; ++ep) eps.push_back(ep);
  if (eps.empty()) throw ConfigError("no held-out episodes in dataset");
  return eps;
}

double frame_psnr(const RolloutResult& roll, const Dataset& ds, int episode, int frame_id) {
  std::vector<float> a, b;
  int idx = -1;
  for (size_t i = 0; i < roll.frame_ids.size(); ++i)
    if (roll.frame_ids[i] == frame_id) idx = int(i);
  if (idx < 0) throw ConfigError("rollout does not cover frame " + std::to_string(frame_id));
  for (int v = 0; v < int(ds.rig.views.size()); ++v) {
    const Tensor<float>& f = roll.frames[size_t(v)][size_t(idx)];
    a.insert(a.end(), f.data.begin(), f.data.end());
    const Tensor<float> gt = rgb_tensor(load_frame(ds, episode, frame_id, v).rgb);
    b.insert(b.end(), gt.data.begin(), gt.data.end());
  }
  return psnr(a, b);
}

}  // namespace

NvsShiftResult eval_nvs_shift(const Models& m, const Dataset& ds, const RunConfig& cfg) {
  const int t_latest = int(cfg.get_int("dataset.t_obs")) - 1;
  const RenderConfig rcfg = render_config_from(cfg);
  const double shifts[6] = {1, -1, 2, -2, 4, -4};

  NvsShiftResult res;
  std::map<double, std::pair<double, int>> acc;
  for (int ep : eval_episodes(ds)) {
    const GaussianScene rec = reconstruct_history(m, ds, ep, t_latest, cfg);
    const GaussianScene world =
        advect(ds.episodes[size_t(ep)].scene, t_latest - ds.episodes[size_t(ep)].scene.time_index);
    const Trajectory& traj = ds.episodes[size_t(ep)].trajectory;
    for (double s : shifts) {
      const CameraPose ego = shift_lateral(traj.poses[size_t(t_latest)], s);
      std::vector<float> a, b;
      for (const RigView& view : ds.rig.views) {
        const CameraPose wtc = compose(view.pose, ego);
        RenderOutput r = render(rec, view.intrinsics, wtc, rcfg);
        RenderOutput ref = render_reference(world, view.intrinsics, wtc, rcfg);
        a.insert(a.end(), r.rgb.begin(), r.rgb.end());
        b.insert(b.end(), ref.rgb.begin(), ref.rgb.end());
      }
      NvsShiftRow row;
      row.episode = ep;
      row.shift = s;
      row.psnr = psnr(a, b);
      res.rows.push_back(row);
      auto& slot = acc[std::abs(s)];
      slot.first += row.psnr;
      slot.second += 1;
    }
  }
  for (const auto& [mag, slot] : acc) res.mean_by_magnitude[mag] = slot.first / slot.second;
  return res;
}

CrossTemporalResult eval_cross_temporal(const Models& m, const Dataset& ds, const SfParams& sf,
                                        const RunConfig& cfg, uint64_t seed) {
  const int t_latest = int(cfg.get_int("dataset.t_obs")) - 1;
  CrossTemporalResult res;
  Rng root(seed);
  int idx = 0;
  for (int ep : eval_episodes(ds)) {
    const uint64_t ep_seed = root.split(uint64_t(idx) + 1).next_u64();
    const RolloutResult roll = rollout(m, ds, ep, sf, cfg, ep_seed);
    CrossTemporalRow row;
    row.episode = ep;
    row.psnr_t5 = frame_psnr(roll, ds, ep, t_latest + 5);
    row.psnr_t10 = frame_psnr(roll, ds, ep, t_latest + 10);
    res.rows.push_back(row);
    res.mean_t5 += row.psnr_t5;
    res.mean_t10 += row.psnr_t10;
    ++idx;
  }
  res.mean_t5 /= double(res.rows.size());
  res.mean_t10 /= double(res.rows.size());
  return res;
}

AblateResult ablate_sf(const Models& m, const Dataset& ds, const RunConfig& cfg, int nseeds,
                       uint64_t seed0) {
  if (nseeds < 1) throw ConfigError("ablate_sf: need at least one seed");
  const std::vector<std::string> modes = {"off", "random", "entropy", "locpot"};
  const std::vector<int> eps = eval_episodes(ds);
  SfParams base = sf_params_from(cfg);

  AblateResult res;
  // mode -> per-seed mean depth error, for the paired win rate.
  std::map<std::string, std::vector<double>> seed_rmse;
  for (const std::string& mode : modes) {
    SfParams sf = base;
    sf.mode = sf_mode_from(mode);
    double psnr_sum = 0, rmse_sum = 0;
    int n = 0;
    for (int i = 0; i < nseeds; ++i) {
      const uint64_t seed = seed0 + uint64_t(i);
      const int ep = eps[size_t(i) % eps.size()];
      const RolloutResult roll = rollout(m, ds, ep, sf, cfg, seed);
      double seed_mean = 0;
      for (const ChunkMetrics& cm : roll.chunks) {
        AblateRow row;
        row.mode = mode;
        row.seed = seed;
        row.episode = ep;
        row.chunk_start = cm.start;
        row.psnr = cm.psnr;
        row.d_rmse = cm.d_rmse;
        res.rows.push_back(row);
        psnr_sum += cm.psnr;
        rmse_sum += cm.d_rmse;
        seed_mean += cm.d_rmse;
        ++n;
      }
      seed_rmse[mode].push_back(seed_mean / double(roll.chunks.size()));
    }
    res.mean_psnr[mode] = psnr_sum / n;
    res.mean_d_rmse[mode] = rmse_sum / n;
  }
  int wins = 0;
  for (int i = 0; i < nseeds; ++i)
    if (seed_rmse["locpot"][size_t(i)] < seed_rmse["off"][size_t(i)]) ++wins;
  res.win_rate_locpot_vs_off = double(wins) / double(nseeds);
  return res;
}

std::string ablate_csv(const AblateResult& r) {
  std::string out = "mode,seed,episode,chunk_start,psnr,d_rmse\n";
  char buf[160];
  for (const AblateRow& row : r.rows) {
    std::snprintf(buf, sizeof buf, "%s,%llu,%d,%d,%.17g,%.17g\n", row.mode.c_str(),
                  static_cast<unsigned long long>(row.seed), row.episode, row.chunk_start,
                  row.psnr, row.d_rmse);
    out += buf;
  }
  return out;
}

std::string ablate_json(const AblateResult& r) {
  nlohmann::json rows = nlohmann::json::array();
  for (const AblateRow& row : r.rows)
    rows.push_back({{"mode", row.mode},
                    {"seed", row.seed},
                    {"episode", row.episode},
                    {"chunk_start", row.chunk_start},
                    {"psnr", row.psnr},
                    {"d_rmse", row.d_rmse}});
  nlohmann::json j = {{"rows", rows},
                      {"summary",
                       {{"mean_psnr", r.mean_psnr},
                        {"mean_d_rmse", r.mean_d_rmse},
                        {"win_rate_locpot_vs_off", r.win_rate_locpot_vs_off}}}};
  return canonical_dump(j);
}

}  // namespace phigen
