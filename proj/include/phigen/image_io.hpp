#pragma once

#include <cstdint>
#include <string>
#include <vector>

namespace phigen {

// Interleaved float images in [0,1]; `channels` is 3 for color, 1 for masks.
struct ImageF {
  int width = 0;
  int height = 0;
  int channels = 0;
  std::vector<float> data;  // height*width*channels, row-major, top-down

  float& at(int y, int x, int c) { return data[(static_cast<size_t>(y) * width + x) * channels + c]; }
  float at(int y, int x, int c) const { return data[(static_cast<size_t>(y) * width + x) * channels + c]; }
};

ImageF make_image(int width, int height, int channels, float fill = 0.0f);

// 8-bit quantization used by every byte-image writer: clamp to [0,1], scale by
// 255, round half to even.
uint8_t quantize8(float v);

// Binary PPM (P6), 8-bit RGB, rows top-down.
void write_ppm(const std::string& path, const ImageF& image);
ImageF read_ppm(const std::string& path);

// Binary PGM (P5), single channel; used for class-index maps (value = class id).
void write_pgm(const std::string& path, const std::vector<uint8_t>& values, int width, int height);
std::vector<uint8_t> read_pgm(const std::string& path, int& width, int& height);

// PFM grayscale ("Pf"), float32, rows bottom-up, scale header -1 (little
// endian). Round-trips bit-exactly.
void write_pfm(const std::string& path, const std::vector<float>& values, int width, int height);
std::vector<float> read_pfm(const std::string& path, int& width, int& height);

// Box-filter (area) resampling of an interleaved buffer; handles fractional
// scale ratios exactly, so a constant image stays constant. Double
// accumulation internally.
std::vector<float> area_resample(const std::vector<float>& src, int src_w, int src_h,
                                 int channels, int dst_w, int dst_h);

}  // namespace phigen
