#pragma once

#include <map>
#include <string>
#include <vector>

#include "phigen/pipeline.hpp"

namespace phigen {

// --- lateral novel-view synthesis -------------------------------------------

struct NvsShiftRow {
  int episode = 0;
  double shift = 0;  // meters, signed, ego-right
  double psnr = 0;   // reconstruction render vs reference render, all views
};

struct NvsShiftResult {
  std::vector<NvsShiftRow> rows;
  std::map<double, double> mean_by_magnitude;  // |shift| -> mean psnr
};

// Reconstructs each held-out episode from its observed frames, moves the ego
// pose sideways by +-1, +-2, +-4 m, and scores the reconstruction against the
// true world scene rendered from the same shifted pose.
NvsShiftResult eval_nvs_shift(const Models& m, const Dataset& ds, const RunConfig& cfg);

// --- fixed-horizon generation quality ---------------------------------------

struct CrossTemporalRow {
  int episode = 0;
  double psnr_t5 = 0;   // five frames past the last observation
  double psnr_t10 = 0;  // ten frames past the last observation
};

struct CrossTemporalResult {
  std::vector<CrossTemporalRow> rows;
  double mean_t5 = 0, mean_t10 = 0;
};

CrossTemporalResult eval_cross_temporal(const Models& m, const Dataset& ds, const SfParams& sf,
                                        const RunConfig& cfg, uint64_t seed);

// --- forcing-mode ablation ---------------------------------------------------

struct AblateRow {
  std::string mode;
  uint64_t seed = 0;
  int episode = 0;
  int chunk_start = 0;
  double psnr = 0;
  double d_rmse = 0;
};

struct AblateResult {
  std::vector<AblateRow> rows;                  // mode-major, seed, chunk order
  std::map<std::string, double> mean_psnr;      // per mode
  std::map<std::string, double> mean_d_rmse;    // per mode
  double win_rate_locpot_vs_off = 0;            // fraction of seeds with lower mean depth error
};

// Rolls out every forcing mode over nseeds paired runs; a given seed shares
// its integration noise across modes so rows differ only by the forcing.
AblateResult ablate_sf(const Models& m, const Dataset& ds, const RunConfig& cfg, int nseeds,
                       uint64_t seed0);

// Fixed column order: mode,seed,episode,chunk_start,psnr,d_rmse.
std::string ablate_csv(const AblateResult& r);
std::string ablate_json(const AblateResult& r);

}  // namespace phigen
