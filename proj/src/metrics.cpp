#include "phigen/metrics.hpp"

#include <cmath>
#include <string>

#include "phigen/error.hpp"

namespace phigen {

namespace {
void check_same(size_t a, size_t b, const char* who) {
  if (a != b)
    throw ConfigError(std::string(who) + ": length mismatch (" + std::to_string(a) + " vs " +
                      std::to_string(b) + ")");
  if (a == 0) throw ConfigError(std::string(who) + ": empty input");
}
}  // namespace

double psnr(const std::vector<float>& a, const std::vector<float>& b, double peak) {
  check_same(a.size(), b.size(), "psnr");
  double mse = 0;
  for (size_t i = 0; i < a.size(); ++i) {
    const double d = double(a[i]) - double(b[i]);
    mse += d * d;
  }
  mse /= double(a.size());
  if (mse <= 0) return 99.0;
  const double v = 10.0 * std::log10(peak * peak / mse);
  return v > 99.0 ? 99.0 : v;
}

double ssim(const std::vector<float>& a, const std::vector<float>& b, int height, int width,
            int channels) {
  if (channels != 1 && channels != 3) throw ConfigError("ssim: channels must be 1 or 3");
  check_same(a.size(), b.size(), "ssim");
  if (a.size() != size_t(height) * width * channels)
    throw ConfigError("ssim: buffer does not match height*width*channels");
  constexpr int kWin = 11;
  if (height < kWin || width < kWin) throw ConfigError("ssim: image smaller than 11x11");

  std::vector<double> ya(size_t(height) * width), yb(size_t(height) * width);
  for (size_t i = 0; i < ya.size(); ++i) {
    if (channels == 3) {
      ya[i] = 0.299 * a[i * 3] + 0.587 * a[i * 3 + 1] + 0.114 * a[i * 3 + 2];
      yb[i] = 0.299 * b[i * 3] + 0.587 * b[i * 3 + 1] + 0.114 * b[i * 3 + 2];
    } else {
      ya[i] = a[i];
      yb[i] = b[i];
    }
  }

  double win[kWin][kWin];
  double wsum = 0;
  for (int i = 0; i < kWin; ++i)
    for (int j = 0; j < kWin; ++j) {
      const double di = i - 5, dj = j - 5;
      win[i][j] = std::exp(-(di * di + dj * dj) / (2.0 * 1.5 * 1.5));
      wsum += win[i][j];
    }
  for (auto& row : win)
    for (double& w : row) w /= wsum;

  const double c1 = 0.01 * 0.01, c2 = 0.03 * 0.03;
  double total = 0;
  int count = 0;
  for (int y = 0; y + kWin <= height; ++y)
    for (int x = 0; x + kWin <= width; ++x) {
      double mu_a = 0, mu_b = 0, aa = 0, bb = 0, ab = 0;
      for (int i = 0; i < kWin; ++i)
        for (int j = 0; j < kWin; ++j) {
          const double w = win[i][j];
          const double va = ya[size_t(y + i) * width + (x + j)];
          const double vb = yb[size_t(y + i) * width + (x + j)];
          mu_a += w * va;
          mu_b += w * vb;
          aa += w * va * va;
          bb += w * vb * vb;
          ab += w * va * vb;
        }
      const double var_a = aa - mu_a * mu_a;
      const double var_b = bb - mu_b * mu_b;
      const double cov = ab - mu_a * mu_b;
      total += ((2 * mu_a * mu_b + c1) * (2 * cov + c2)) /
               ((mu_a * mu_a + mu_b * mu_b + c1) * (var_a + var_b + c2));
      ++count;
    }
  return total / count;
}

DepthMetrics depth_metrics(const std::vector<float>& pred, const std::vector<float>& gt,
                           const std::vector<uint8_t>& valid) {
  check_same(pred.size(), gt.size(), "depth_metrics");
  check_same(pred.size(), valid.size(), "depth_metrics");
  DepthMetrics m;
  double abs_rel = 0, sq = 0;
  int d1 = 0, d2 = 0, d3 = 0;
  for (size_t i = 0; i < pred.size(); ++i) {
    if (!valid[i]) continue;
    const double g = gt[i], p = pred[i];
    if (!(g > 0)) throw NumericError("depth_metrics: non-positive gt depth at valid pixel");
    abs_rel += std::abs(p - g) / g;
    sq += (p - g) * (p - g);
    const double ratio = p > 0 ? std::max(p / g, g / p) : 1e30;
    if (ratio < 1.25) ++d1;
    if (ratio < 1.25 * 1.25) ++d2;
    if (ratio < 1.25 * 1.25 * 1.25) ++d3;
    ++m.valid_count;
  }
  if (m.valid_count == 0) throw ConfigError("depth_metrics: no valid pixels");
  m.abs_rel = abs_rel / m.valid_count;
  m.rmse = std::sqrt(sq / m.valid_count);
  m.delta1 = double(d1) / m.valid_count;
  m.delta2 = double(d2) / m.valid_count;
  m.delta3 = double(d3) / m.valid_count;
  return m;
}

double pcc(const std::vector<float>& a, const std::vector<float>& b) {
  check_same(a.size(), b.size(), "pcc");
  if (a.size() < 2) throw ConfigError("pcc: need at least 2 samples");
  const double n = double(a.size());
  double ma = 0, mb = 0;
  for (size_t i = 0; i < a.size(); ++i) {
    ma += a[i];
    mb += b[i];
  }
  ma /= n;
  mb /= n;
  double va = 0, vb = 0, cov = 0;
  for (size_t i = 0; i < a.size(); ++i) {
    const double da = a[i] - ma, db = b[i] - mb;
    va += da * da;
    vb += db * db;
    cov += da * db;
  }
  if (!(va > 0) || !(vb > 0)) throw NumericError("pcc: zero variance input");
  return cov / std::sqrt(va * vb);
}

}  // namespace phigen
