#pragma once

#include <string>
#include <vector>

#include "phigen/adapter.hpp"
#include "phigen/dataset.hpp"
#include "phigen/flow.hpp"
#include "phigen/metrics.hpp"
#include "phigen/stereo_forcing.hpp"

namespace phigen {

// Trained stack needed to run generation.
struct Models {
  VaeNet<float> vae;
  AdapterNet<float> adapter;
  DenoiserNet<float> flow;
  LatentStats stats;
};

// Initializes each network from the config and restores the checkpoints.
Models load_models(const RunConfig& cfg, const std::string& vae_ckpt,
                   const std::string& adapter_ckpt, const std::string& flow_ckpt);

// Scene lifted from the observed frames ending at t_latest, anchored at the
// ego pose of t_latest.
GaussianScene reconstruct_history(const Models& m, const Dataset& ds, int episode, int t_latest,
                                  const RunConfig& cfg);

// One generated chunk of future frames.
struct FutureResult {
  std::vector<int> frame_ids;                          // w .. w+t_future-1
  std::vector<std::vector<Tensor<float>>> frames;      // [view][k] decoded rgb
  std::vector<std::vector<Tensor<float>>> ren_frames;  // [view][k] rendered context
  std::vector<GaussianScene> scenes;                   // re-lifted per frame
};

// Renders the advected history at the future poses, turns those renders into
// reliability-scaled conditioning latents, integrates the guided velocity
// field from noise, decodes, and re-lifts each decoded frame into a scene.
// context_times are the truly observed frames used for the localization
// baseline.
FutureResult generate_future(const Models& m, const Dataset& ds, int episode,
                             const GaussianScene& history, int w, const SfParams& sf,
                             const RunConfig& cfg, Rng& rng,
                             const std::vector<int>& context_times);

struct ChunkMetrics {
  int start = 0;
  double psnr = 0;    // decoded frames vs ground truth, chunk mean
  double d_rmse = 0;  // rendered scene depth vs ground truth, chunk mean
};

struct RolloutResult {
  std::vector<int> frame_ids;
  std::vector<std::vector<Tensor<float>>> frames;  // [view][future frame]
  std::vector<GaussianScene> scenes;               // per future frame
  std::vector<ChunkMetrics> chunks;
  // Agreement between the advected render and the decoded frame at each
  // chunk's first time step (how smoothly chunks hand over).
  std::vector<double> boundary_psnr;
};

// Autoregressive generation across the whole episode: reconstruct once from
// the observed frames, then chunk by chunk with the last generated scene
// carried forward as the next history.
RolloutResult rollout(const Models& m, const Dataset& ds, int episode, const SfParams& sf,
                      const RunConfig& cfg, uint64_t seed);

}  // namespace phigen
