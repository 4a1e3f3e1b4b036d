#pragma once

#include <cstdint>
#include <vector>

namespace phigen {

// Peak signal-to-noise ratio in dB over equal-length buffers, capped at 99
// (identical inputs would otherwise be infinite). Throws on length mismatch
// or empty input. Accumulation is double precision.
double psnr(const std::vector<float>& a, const std::vector<float>& b, double peak = 1.0);

// Mean SSIM with an 11x11 Gaussian window (sigma 1.5), K1=0.01, K2=0.03,
// dynamic range 1.0, computed over window positions fully inside the image.
// channels==3 converts to luma (0.299, 0.587, 0.114) first; channels==1 uses
// the buffer as-is. Images must be at least 11x11.
double ssim(const std::vector<float>& a, const std::vector<float>& b, int height, int width,
            int channels);

struct DepthMetrics {
  double abs_rel = 0;  // mean |pred-gt|/gt
  double rmse = 0;     // meters
  double delta1 = 0;   // fraction with max(pred/gt, gt/pred) < 1.25
  double delta2 = 0;   // ... < 1.25^2
  double delta3 = 0;   // ... < 1.25^3
  int valid_count = 0;
};

// Depth error statistics over pixels where valid is nonzero. Throws when no
// pixel is valid or any valid gt depth is <= 0.
DepthMetrics depth_metrics(const std::vector<float>& pred, const std::vector<float>& gt,
                           const std::vector<uint8_t>& valid);

// Pearson correlation coefficient. Throws on length mismatch, length < 2, or
// zero variance in either input.
double pcc(const std::vector<float>& a, const std::vector<float>& b);

}  // namespace phigen
