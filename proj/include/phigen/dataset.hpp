#pragma once

#include <string>
#include <vector>

#include "phigen/config.hpp"
#include "phigen/image_io.hpp"
#include "phigen/raster.hpp"
#include "phigen/synth.hpp"
#include "phigen/tensor.hpp"

namespace phigen {

// On-disk dataset layout:
//   <dir>/index.json                         rig, params, episodes, file hashes
//   <dir>/ep000/scene.pgsc                   world scene at frame 0
//   <dir>/ep000/rgb_t00_v0.ppm               rendered ground truth per (t, view)
//   <dir>/ep000/depth_t00_v0.pfm             expected depth (far sentinel where empty)
//   <dir>/ep000/sem_t00_v0.pgm               argmax class, sky where alpha < 0.5
//   <dir>/ep000/alpha_t00_v0.pgm             accumulated opacity, 8-bit
// Episodes [0, train_count) are the training split; the rest are held out.

struct Episode {
  std::string dir;  // relative to the dataset root
  uint64_t seed = 0;
  double speed = 0;
  GaussianScene scene;
  Trajectory trajectory;
};

struct Dataset {
  std::string root;
  SynthParams params;
  CameraRig rig;
  int train_count = 0;
  int eval_count = 0;
  std::vector<Episode> episodes;
};

struct FrameGt {
  ImageF rgb;                  // 3-channel
  std::vector<float> depth;    // meters, far sentinel where empty
  std::vector<uint8_t> sem;    // class ids
  std::vector<uint8_t> alpha;  // quantized accumulated opacity
};

SynthParams synth_params_from(const RunConfig& cfg);

// Generates episodes, renders ground-truth stacks, writes everything plus the
// index. Returns the relative paths written (index.json first).
std::vector<std::string> write_dataset(const std::string& dir, const RunConfig& cfg,
                                       uint64_t seed);

// Validates the index against the files (content hashes) and the configured
// class count; throws IoError/ConfigError naming the offending episode.
Dataset load_dataset(const std::string& dir, int expected_classes);

FrameGt load_frame(const Dataset& ds, int episode, int t, int view);

// Supervision mask: covered (alpha > 0.5) and depth inside (near, far).
std::vector<uint8_t> valid_depth_mask(const FrameGt& gt, double near, double far);

// Planar [C,H,W] tensor from an interleaved image, area-resampled to
// (out_w, out_h) when those are positive.
Tensor<float> rgb_tensor(const ImageF& img, int out_w = 0, int out_h = 0);

// Wraps a render's color buffer as an interleaved image (shared storage copy).
inline ImageF to_imagef(const RenderOutput& out) {
  ImageF img;
  img.width = out.width;
  img.height = out.height;
  img.channels = 3;
  img.data = out.rgb;
  return img;
}

// File naming shared by writer and reader.
std::string frame_name(const char* kind, int t, int view, const char* ext);

}  // namespace phigen
