#include "phigen/raster.hpp"

#include <algorithm>
#include <cmath>
#include <thread>

#include "phigen/error.hpp"

namespace phigen {

namespace {

// Projection-independent per-Gaussian state, hot in the pixel loop.
struct Prepared {
  float mx, my;                  // screen mean
  float ca, cb, cc;              // conic = inverse dilated cov2d [[ca,cb],[cb,cc]]
  float rx, ry;                  // 3 sigma axis-aligned half-extent of dilated cov
  float depth;
  float opacity;
  float r, g, b;
  int sem_offset;                // into shared softmax storage, -1 when classless
  int source_index;
};

struct PrepResult {
  std::vector<Prepared> gaussians;  // sorted by (depth, source_index)
  std::vector<float> sem_probs;
  int num_classes = 0;
  int skipped = 0;
};

PrepResult prepare(const GaussianScene& scene, const CameraIntrinsics& intr,
                   const CameraPose& pose, const RenderConfig& cfg) {
  PrepResult out;
  out.num_classes =
      scene.gaussians.empty() ? 0 : int(scene.gaussians[0].sem_logits.size());
  out.gaussians.reserve(scene.gaussians.size());
  for (size_t i = 0; i < scene.gaussians.size(); ++i) {
    const auto& g = scene.gaussians[i];
    auto proj = project_gaussian(g, intr, pose, cfg.near_plane, cfg.dilation, int(i),
                                 cfg.min_z_over_scale);
    if (!proj) continue;
    // Dilated covariance is the one rasterized; its eigenvalues gate degeneracy.
    const float a = proj->cov2d(0, 0) + cfg.dilation;
    const float b = proj->cov2d(0, 1);
    const float c = proj->cov2d(1, 1) + cfg.dilation;
    const float det = a * c - b * b;
    const float half_tr = 0.5f * (a + c);
    const float disc = std::sqrt(std::max(0.0f, half_tr * half_tr - det));
    const float lam_max = half_tr + disc;
    const float lam_min = half_tr - disc;
    if (!(det > 0) || !(lam_min > 0) || lam_max > cfg.max_condition * lam_min) {
      ++out.skipped;
      continue;
    }
    Prepared p;
    p.mx = proj->mean2d.x();
    p.my = proj->mean2d.y();
    p.ca = c / det;
    p.cb = -b / det;
    p.cc = a / det;
    p.rx = 3.0f * std::sqrt(a);
    p.ry = 3.0f * std::sqrt(c);
    p.depth = proj->depth;
    p.opacity = g.opacity;
    p.r = g.color.x();
    p.g = g.color.y();
    p.b = g.color.z();
    p.source_index = int(i);
    if (out.num_classes > 0) {
      p.sem_offset = int(out.sem_probs.size());
      const auto& l = g.sem_logits;
      float mx = l.maxCoeff();
      float sum = 0;
      for (int k = 0; k < l.size(); ++k) {
        float e = std::exp(l[k] - mx);
        out.sem_probs.push_back(e);
        sum += e;
      }
      for (int k = 0; k < l.size(); ++k) out.sem_probs[p.sem_offset + k] /= sum;
    } else {
      p.sem_offset = -1;
    }
    out.gaussians.push_back(p);
  }
  std::sort(out.gaussians.begin(), out.gaussians.end(), [](const Prepared& x, const Prepared& y) {
    if (x.depth != y.depth) return x.depth < y.depth;
    return x.source_index < y.source_index;
  });
  return out;
}

// Composites one pixel over candidate indices drawn in prepared (sorted) order.
// The bbox reject, the Mahalanobis support cutoff, the alpha clamp, and the
// transmittance early-out together define the output exactly; any candidate
// superset that preserves order yields identical results.
template <class Iter>
void composite_pixel(float px, float py, Iter begin, Iter end, const PrepResult& prep,
                     const RenderConfig& cfg, float* rgb, float* depth, float* alpha,
                     float* sem) {
  float T = 1.0f;
  float acc_r = 0, acc_g = 0, acc_b = 0, acc_d = 0, acc_w = 0;
  const int C = prep.num_classes;
  for (Iter it = begin; it != end; ++it) {
    const Prepared& p = prep.gaussians[*it];
    const float dx = px - p.mx;
    const float dy = py - p.my;
    if (dx > p.rx || dx < -p.rx || dy > p.ry || dy < -p.ry) continue;
    const float mahal = p.ca * dx * dx + 2.0f * p.cb * dx * dy + p.cc * dy * dy;
    if (mahal > cfg.support_mahal_sq) continue;
    float a = p.opacity * std::exp(-0.5f * mahal);
    if (a > cfg.alpha_clamp) a = cfg.alpha_clamp;
    const float w = a * T;
    acc_r += w * p.r;
    acc_g += w * p.g;
    acc_b += w * p.b;
    acc_d += w * p.depth;
    acc_w += w;
    if (C > 0) {
      const float* sp = prep.sem_probs.data() + p.sem_offset;
      for (int k = 0; k < C; ++k) sem[k] += w * sp[k];
    }
    T *= 1.0f - a;
    if (T < cfg.min_transmittance) break;
  }
  rgb[0] = acc_r + T * cfg.background.x();
  rgb[1] = acc_g + T * cfg.background.y();
  rgb[2] = acc_b + T * cfg.background.z();
  *alpha = acc_w;
  if (acc_w > 1e-8f) {
    *depth = acc_d / acc_w;
    for (int k = 0; k < C; ++k) sem[k] /= acc_w;
  } else {
    *depth = cfg.far_sentinel;
    for (int k = 0; k < C; ++k) sem[k] = 0.0f;
  }
}

RenderOutput make_output(const CameraIntrinsics& intr, int num_classes) {
  RenderOutput out;
  out.width = intr.width;
  out.height = intr.height;
  out.num_classes = num_classes;
  out.rgb.assign(size_t(intr.width) * intr.height * 3, 0.0f);
  out.depth.assign(size_t(intr.width) * intr.height, 0.0f);
  out.alpha.assign(size_t(intr.width) * intr.height, 0.0f);
  out.sem.assign(size_t(intr.width) * intr.height * num_classes, 0.0f);
  return out;
}

}  // namespace

std::optional<ProjectedGaussian> project_gaussian(const Gaussian4D& g,
                                                  const CameraIntrinsics& intr,
                                                  const CameraPose& world_to_cam,
                                                  float near_plane, float dilation,
                                                  int source_index, float min_z_over_scale) {
  const Eigen::Vector3f p = world_to_cam.apply(g.mu);
  const float z = p.z();
  if (!(z > near_plane)) return std::nullopt;
  // The affine (EWA) linearization of the projection is only trustworthy when
  // the gaussian's extent is small against its distance; closer than that the
  // screen footprint explodes and smears the whole image.
  if (min_z_over_scale > 0 && z < min_z_over_scale * g.scale.maxCoeff()) return std::nullopt;
  const float inv_z = 1.0f / z;
  Eigen::Vector2f mean2d(intr.fx * p.x() * inv_z + intr.cx, intr.fy * p.y() * inv_z + intr.cy);

  Eigen::Matrix<float, 2, 3> J;
  J << intr.fx * inv_z, 0, -intr.fx * p.x() * inv_z * inv_z,
      0, intr.fy * inv_z, -intr.fy * p.y() * inv_z * inv_z;
  const Eigen::Matrix<float, 2, 3> JW = J * world_to_cam.R;
  const Eigen::Matrix2f cov2d = JW * covariance(g.scale, g.rot) * JW.transpose();

  const float rx = 3.0f * std::sqrt(std::max(0.0f, cov2d(0, 0) + dilation));
  const float ry = 3.0f * std::sqrt(std::max(0.0f, cov2d(1, 1) + dilation));
  if (mean2d.x() + rx < 0 || mean2d.x() - rx > float(intr.width) || mean2d.y() + ry < 0 ||
      mean2d.y() - ry > float(intr.height))
    return std::nullopt;

  ProjectedGaussian out;
  out.mean2d = mean2d;
  out.cov2d = cov2d;
  out.depth = z;
  out.source_index = source_index;
  return out;
}

RenderOutput render(const GaussianScene& scene, const CameraIntrinsics& intr,
                    const CameraPose& world_to_cam, const RenderConfig& cfg) {
  const PrepResult prep = prepare(scene, intr, world_to_cam, cfg);
  RenderOutput out = make_output(intr, prep.num_classes);
  out.skipped = prep.skipped;

  const int W = intr.width, H = intr.height, ts = cfg.tile_size;
  const int tx = (W + ts - 1) / ts, ty = (H + ts - 1) / ts;
  std::vector<std::vector<int>> tile_lists(size_t(tx) * ty);
  for (size_t i = 0; i < prep.gaussians.size(); ++i) {
    const Prepared& p = prep.gaussians[i];
    int x0 = std::max(0, int(std::floor((p.mx - p.rx) / ts)));
    int x1 = std::min(tx - 1, int(std::floor((p.mx + p.rx) / ts)));
    int y0 = std::max(0, int(std::floor((p.my - p.ry) / ts)));
    int y1 = std::min(ty - 1, int(std::floor((p.my + p.ry) / ts)));
    for (int tyi = y0; tyi <= y1; ++tyi)
      for (int txi = x0; txi <= x1; ++txi) tile_lists[size_t(tyi) * tx + txi].push_back(int(i));
  }

  const int C = prep.num_classes;
  auto run_tile = [&](int tile) {
    const int txi = tile % tx, tyi = tile / tx;
    const auto& list = tile_lists[size_t(tile)];
    const int x_end = std::min(W, (txi + 1) * ts), y_end = std::min(H, (tyi + 1) * ts);
    for (int y = tyi * ts; y < y_end; ++y)
      for (int x = txi * ts; x < x_end; ++x) {
        const size_t pix = size_t(y) * W + x;
        composite_pixel(float(x) + 0.5f, float(y) + 0.5f, list.begin(), list.end(), prep, cfg,
                        out.rgb.data() + pix * 3, out.depth.data() + pix,
                        out.alpha.data() + pix, C > 0 ? out.sem.data() + pix * C : nullptr);
      }
  };

  const int n_tiles = tx * ty;
  const int n_threads = std::max(1, std::min(cfg.threads, n_tiles));
  if (n_threads == 1) {
    for (int t = 0; t < n_tiles; ++t) run_tile(t);
  } else {
    // Tiles are pixel-disjoint, so the partition is race-free and the output
    // is identical for any worker count.
    std::vector<std::thread> pool;
    for (int w = 0; w < n_threads; ++w)
      pool.emplace_back([&, w] {
        for (int t = w; t < n_tiles; t += n_threads) run_tile(t);
      });
    for (auto& th : pool) th.join();
  }
  return out;
}

RenderOutput render_reference(const GaussianScene& scene, const CameraIntrinsics& intr,
                              const CameraPose& world_to_cam, const RenderConfig& cfg) {
  const PrepResult prep = prepare(scene, intr, world_to_cam, cfg);
  RenderOutput out = make_output(intr, prep.num_classes);
  out.skipped = prep.skipped;
  std::vector<int> all(prep.gaussians.size());
  for (size_t i = 0; i < all.size(); ++i) all[i] = int(i);
  const int C = prep.num_classes;
  for (int y = 0; y < intr.height; ++y)
    for (int x = 0; x < intr.width; ++x) {
      const size_t pix = size_t(y) * intr.width + x;
      composite_pixel(float(x) + 0.5f, float(y) + 0.5f, all.begin(), all.end(), prep, cfg,
                      out.rgb.data() + pix * 3, out.depth.data() + pix,
                      out.alpha.data() + pix, C > 0 ? out.sem.data() + pix * C : nullptr);
    }
  return out;
}

std::vector<RenderOutput> render_trajectory(const GaussianScene& scene, const CameraRig& rig,
                                            const Trajectory& traj, const RenderConfig& cfg,
                                            bool with_advection) {
  validate(rig);
  validate(traj);
  std::vector<RenderOutput> out;
  out.reserve(traj.time_ids.size() * rig.views.size());
  for (size_t k = 0; k < traj.time_ids.size(); ++k) {
    const int dt = traj.time_ids[k] - scene.time_index;
    const GaussianScene* frame_scene = &scene;
    GaussianScene advected;
    if (with_advection && dt != 0) {
      advected = advect(scene, dt);
      frame_scene = &advected;
    }
    for (const auto& view : rig.views) {
      const CameraPose cam = compose(view.pose, traj.poses[k]);
      out.push_back(render(*frame_scene, view.intrinsics, cam, cfg));
    }
  }
  return out;
}

}  // namespace phigen
