#pragma once

#include <string>

#include "phigen/scene.hpp"

namespace phigen {

// Binary Gaussian-scene container. Little-endian layout:
//   u32 magic "PGSC", u32 version, u64 gaussian count, u64 sem channel count,
// then per Gaussian 17 f32 in field order (mu 3, scale 3, rot 4, opacity,
// color 3, flow 3), C f32 sem logits, and 1 dynamic-flag byte. Round-trips
// bit-exactly; bad magic/version/truncation raise IoError with a byte offset.
void write_scene(const std::string& path, const GaussianScene& scene);
GaussianScene read_scene(const std::string& path);

}  // namespace phigen
