#pragma once

#include <Eigen/Dense>
#include <cmath>
#include <cstdint>
#include <string>
#include <vector>

#include "phigen/rng.hpp"
#include "phigen/tensor.hpp"

namespace phigen {

template <class S>
using RowMat = Eigen::Matrix<S, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

template <class S>
struct NamedParam {
  std::string name;
  Tensor<S>* t;
};

namespace detail {

template <class S>
void im2col(const Tensor<S>& x, int kh, int kw, int stride, int pad, RowMat<S>& col) {
  const int C = x.shape[0], H = x.shape[1], W = x.shape[2];
  const int Ho = (H + 2 * pad - kh) / stride + 1;
  const int Wo = (W + 2 * pad - kw) / stride + 1;
  col.setZero(C * kh * kw, Ho * Wo);
  for (int c = 0; c < C; ++c)
    for (int ki = 0; ki < kh; ++ki)
      for (int kj = 0; kj < kw; ++kj) {
        const int row = (c * kh + ki) * kw + kj;
        for (int yo = 0; yo < Ho; ++yo) {
          const int yi = yo * stride + ki - pad;
          if (yi < 0 || yi >= H) continue;
          const S* src = &x.data[(size_t(c) * H + yi) * W];
          S* dst = col.data() + (size_t(row) * Ho + yo) * Wo;
          for (int xo = 0; xo < Wo; ++xo) {
            const int xi = xo * stride + kj - pad;
            if (xi >= 0 && xi < W) dst[xo] = src[xi];
          }
        }
      }
}

template <class S>
void col2im_add(const RowMat<S>& col, int C, int H, int W, int kh, int kw, int stride, int pad,
                Tensor<S>& gx) {
  const int Ho = (H + 2 * pad - kh) / stride + 1;
  const int Wo = (W + 2 * pad - kw) / stride + 1;
  for (int c = 0; c < C; ++c)
    for (int ki = 0; ki < kh; ++ki)
      for (int kj = 0; kj < kw; ++kj) {
        const int row = (c * kh + ki) * kw + kj;
        for (int yo = 0; yo < Ho; ++yo) {
          const int yi = yo * stride + ki - pad;
          if (yi < 0 || yi >= H) continue;
          S* dst = &gx.data[(size_t(c) * H + yi) * W];
          const S* src = col.data() + (size_t(row) * Ho + yo) * Wo;
          for (int xo = 0; xo < Wo; ++xo) {
            const int xi = xo * stride + kj - pad;
            if (xi >= 0 && xi < W) dst[xi] += src[xo];
          }
        }
      }
}

}  // namespace detail

// x [Cin,H,W], w [Cout,Cin,kh,kw], b [Cout] -> [Cout,Ho,Wo].
template <class S>
Tensor<S> conv2d(const Tensor<S>& x, const Tensor<S>& w, const Tensor<S>& b, int stride,
                 int pad) {
  const int Cout = w.shape[0], Cin = w.shape[1], kh = w.shape[2], kw = w.shape[3];
  if (x.shape[0] != Cin) throw ConfigError("conv2d: channel mismatch");
  const int Ho = (x.shape[1] + 2 * pad - kh) / stride + 1;
  const int Wo = (x.shape[2] + 2 * pad - kw) / stride + 1;
  RowMat<S> col;
  detail::im2col(x, kh, kw, stride, pad, col);
  Tensor<S> y({Cout, Ho, Wo});
  Eigen::Map<const RowMat<S>> wm(w.data.data(), Cout, Cin * kh * kw);
  Eigen::Map<RowMat<S>> ym(y.data.data(), Cout, Ho * Wo);
  ym.noalias() = wm * col;
  for (int co = 0; co < Cout; ++co) ym.row(co).array() += b.data[co];
  return y;
}

// Accumulates w.grad / b.grad (when requires_grad) and returns gx.
template <class S>
Tensor<S> conv2d_backward(const Tensor<S>& x, Tensor<S>& w, Tensor<S>& b, const Tensor<S>& gy,
                          int stride, int pad) {
  const int Cout = w.shape[0], Cin = w.shape[1], kh = w.shape[2], kw = w.shape[3];
  const int Ho = gy.shape[1], Wo = gy.shape[2];
  RowMat<S> col;
  detail::im2col(x, kh, kw, stride, pad, col);
  Eigen::Map<const RowMat<S>> gym(gy.data.data(), Cout, Ho * Wo);
  if (w.requires_grad) {
    Eigen::Map<RowMat<S>> gwm(w.grad.data(), Cout, Cin * kh * kw);
    gwm.noalias() += gym * col.transpose();
  }
  if (b.requires_grad)
    for (int co = 0; co < Cout; ++co) b.grad[co] += gym.row(co).sum();
  Eigen::Map<const RowMat<S>> wm(w.data.data(), Cout, Cin * kh * kw);
  RowMat<S> gcol = wm.transpose() * gym;
  Tensor<S> gx({Cin, x.shape[1], x.shape[2]});
  detail::col2im_add(gcol, Cin, x.shape[1], x.shape[2], kh, kw, stride, pad, gx);
  return gx;
}

// x [N,in], w [out,in], b [out] -> [N,out].
template <class S>
Tensor<S> linear(const Tensor<S>& x, const Tensor<S>& w, const Tensor<S>& b) {
  const int N = x.shape[0], in = x.shape[1], out = w.shape[0];
  if (w.shape[1] != in) throw ConfigError("linear: feature mismatch");
  Tensor<S> y({N, out});
  Eigen::Map<const RowMat<S>> xm(x.data.data(), N, in), wm(w.data.data(), out, in);
  Eigen::Map<RowMat<S>> ym(y.data.data(), N, out);
  ym.noalias() = xm * wm.transpose();
  for (int i = 0; i < N; ++i)
    for (int o = 0; o < out; ++o) y.data[size_t(i) * out + o] += b.data[o];
  return y;
}

template <class S>
Tensor<S> linear_backward(const Tensor<S>& x, Tensor<S>& w, Tensor<S>& b, const Tensor<S>& gy) {
  const int N = x.shape[0], in = x.shape[1], out = w.shape[0];
  Eigen::Map<const RowMat<S>> xm(x.data.data(), N, in), gym(gy.data.data(), N, out),
      wm(w.data.data(), out, in);
  if (w.requires_grad) {
    Eigen::Map<RowMat<S>> gwm(w.grad.data(), out, in);
    gwm.noalias() += gym.transpose() * xm;
  }
  if (b.requires_grad)
    for (int i = 0; i < N; ++i)
      for (int o = 0; o < out; ++o) b.grad[o] += gy.data[size_t(i) * out + o];
  Tensor<S> gx({N, in});
  Eigen::Map<RowMat<S>> gxm(gx.data.data(), N, in);
  gxm.noalias() = gym * wm;
  return gx;
}

template <class S>
Tensor<S> silu(const Tensor<S>& x) {
  Tensor<S> y = x;
  for (auto& v : y.data) v = v / (S(1) + std::exp(-v));
  return y;
}

template <class S>
Tensor<S> silu_backward(const Tensor<S>& x, const Tensor<S>& gy) {
  Tensor<S> gx = x;
  for (size_t i = 0; i < x.numel(); ++i) {
    const S s = S(1) / (S(1) + std::exp(-x.data[i]));
    gx.data[i] = gy.data[i] * (s + x.data[i] * s * (S(1) - s));
  }
  return gx;
}

template <class S>
Tensor<S> relu(const Tensor<S>& x) {
  Tensor<S> y = x;
  for (auto& v : y.data)
    if (v < S(0)) v = S(0);
  return y;
}

template <class S>
Tensor<S> relu_backward(const Tensor<S>& x, const Tensor<S>& gy) {
  Tensor<S> gx = gy;
  for (size_t i = 0; i < x.numel(); ++i)
    if (x.data[i] <= S(0)) gx.data[i] = S(0);
  return gx;
}

template <class S>
S sigmoid_scalar(S v) {
  return S(1) / (S(1) + std::exp(-v));
}

template <class S>
Tensor<S> sigmoid(const Tensor<S>& x) {
  Tensor<S> y = x;
  for (auto& v : y.data) v = sigmoid_scalar(v);
  return y;
}

template <class S>
Tensor<S> sigmoid_backward(const Tensor<S>& x, const Tensor<S>& gy) {
  Tensor<S> gx = x;
  for (size_t i = 0; i < x.numel(); ++i) {
    const S s = sigmoid_scalar(x.data[i]);
    gx.data[i] = gy.data[i] * s * (S(1) - s);
  }
  return gx;
}

// Overflow-safe softplus: log1p(exp(-|v|)) + max(v, 0).
template <class S>
S softplus_scalar(S v) {
  return std::log1p(std::exp(-std::abs(v))) + std::max(v, S(0));
}

template <class S>
Tensor<S> softplus(const Tensor<S>& x) {
  Tensor<S> y = x;
  for (auto& v : y.data) v = softplus_scalar(v);
  return y;
}

template <class S>
Tensor<S> softplus_backward(const Tensor<S>& x, const Tensor<S>& gy) {
  Tensor<S> gx = x;
  for (size_t i = 0; i < x.numel(); ++i)
    gx.data[i] = gy.data[i] * sigmoid_scalar(x.data[i]);
  return gx;
}

// x [C,H,W], per-group normalization, affine per channel. C % groups == 0.
template <class S>
Tensor<S> group_norm(const Tensor<S>& x, const Tensor<S>& gamma, const Tensor<S>& beta,
                     int groups = 4, S eps = S(1e-5)) {
  const int C = x.shape[0];
  if (C % groups != 0) throw ConfigError("group_norm: channels not divisible by groups");
  const size_t plane = size_t(x.shape[1]) * x.shape[2];
  const size_t gsz = size_t(C / groups) * plane;
  Tensor<S> y = x;
  for (int g = 0; g < groups; ++g) {
    S* p = y.data.data() + size_t(g) * gsz;
    S mean = 0, var = 0;
    for (size_t i = 0; i < gsz; ++i) mean += p[i];
    mean /= S(gsz);
    for (size_t i = 0; i < gsz; ++i) var += (p[i] - mean) * (p[i] - mean);
    var /= S(gsz);
    const S inv = S(1) / std::sqrt(var + eps);
    for (size_t i = 0; i < gsz; ++i) p[i] = (p[i] - mean) * inv;
  }
  for (int c = 0; c < C; ++c) {
    S* p = y.data.data() + size_t(c) * plane;
    for (size_t i = 0; i < plane; ++i) p[i] = p[i] * gamma.data[c] + beta.data[c];
  }
  return y;
}

template <class S>
Tensor<S> group_norm_backward(const Tensor<S>& x, Tensor<S>& gamma, Tensor<S>& beta,
                              const Tensor<S>& gy, int groups = 4, S eps = S(1e-5)) {
  const int C = x.shape[0];
  const size_t plane = size_t(x.shape[1]) * x.shape[2];
  const size_t cpg = size_t(C / groups);
  const size_t gsz = cpg * plane;
  Tensor<S> gx = zeros_like(x);
  for (int g = 0; g < groups; ++g) {
    const S* xp = x.data.data() + size_t(g) * gsz;
    const S* gp = gy.data.data() + size_t(g) * gsz;
    S* op = gx.data.data() + size_t(g) * gsz;
    S mean = 0, var = 0;
    for (size_t i = 0; i < gsz; ++i) mean += xp[i];
    mean /= S(gsz);
    for (size_t i = 0; i < gsz; ++i) var += (xp[i] - mean) * (xp[i] - mean);
    var /= S(gsz);
    const S inv = S(1) / std::sqrt(var + eps);
    // ghat = gy * gamma(channel); reduce mean(ghat) and mean(ghat * xhat).
    S sum_gh = 0, sum_ghx = 0;
    for (size_t i = 0; i < gsz; ++i) {
      const int c = int(size_t(g) * cpg + i / plane);
      const S xhat = (xp[i] - mean) * inv;
      const S gh = gp[i] * gamma.data[c];
      sum_gh += gh;
      sum_ghx += gh * xhat;
      if (gamma.requires_grad) gamma.grad[c] += gp[i] * xhat;
      if (beta.requires_grad) beta.grad[c] += gp[i];
    }
    const S mgh = sum_gh / S(gsz), mghx = sum_ghx / S(gsz);
    for (size_t i = 0; i < gsz; ++i) {
      const int c = int(size_t(g) * cpg + i / plane);
      const S xhat = (xp[i] - mean) * inv;
      op[i] = inv * (gp[i] * gamma.data[c] - mgh - xhat * mghx);
    }
  }
  return gx;
}

template <class S>
Tensor<S> nearest_upsample(const Tensor<S>& x, int factor = 2) {
  const int C = x.shape[0], H = x.shape[1], W = x.shape[2];
  Tensor<S> y({C, H * factor, W * factor});
  for (int c = 0; c < C; ++c)
    for (int yo = 0; yo < H * factor; ++yo)
      for (int xo = 0; xo < W * factor; ++xo)
        y.at(c, yo, xo) = x.at(c, yo / factor, xo / factor);
  return y;
}

template <class S>
Tensor<S> nearest_upsample_backward(const Tensor<S>& x, const Tensor<S>& gy, int factor = 2) {
  Tensor<S> gx = zeros_like(x);
  const int C = x.shape[0], H = x.shape[1], W = x.shape[2];
  for (int c = 0; c < C; ++c)
    for (int yo = 0; yo < H * factor; ++yo)
      for (int xo = 0; xo < W * factor; ++xo)
        gx.at(c, yo / factor, xo / factor) += gy.at(c, yo, xo);
  return gx;
}

// 2x2 average pooling, stride 2. Spatial dims must be even.
template <class S>
Tensor<S> avg_pool2(const Tensor<S>& x) {
  const int C = x.shape[0], H = x.shape[1], W = x.shape[2];
  if (H % 2 || W % 2) throw ConfigError("avg_pool2: odd spatial dims");
  Tensor<S> y({C, H / 2, W / 2});
  for (int c = 0; c < C; ++c)
    for (int yo = 0; yo < H / 2; ++yo)
      for (int xo = 0; xo < W / 2; ++xo)
        y.at(c, yo, xo) = (x.at(c, 2 * yo, 2 * xo) + x.at(c, 2 * yo, 2 * xo + 1) +
                           x.at(c, 2 * yo + 1, 2 * xo) + x.at(c, 2 * yo + 1, 2 * xo + 1)) /
                          S(4);
  return y;
}

template <class S>
Tensor<S> avg_pool2_backward(const Tensor<S>& x, const Tensor<S>& gy) {
  Tensor<S> gx = zeros_like(x);
  const int C = x.shape[0], H = x.shape[1], W = x.shape[2];
  for (int c = 0; c < C; ++c)
    for (int yo = 0; yo < H / 2; ++yo)
      for (int xo = 0; xo < W / 2; ++xo) {
        const S g = gy.at(c, yo, xo) / S(4);
        gx.at(c, 2 * yo, 2 * xo) += g;
        gx.at(c, 2 * yo, 2 * xo + 1) += g;
        gx.at(c, 2 * yo + 1, 2 * xo) += g;
        gx.at(c, 2 * yo + 1, 2 * xo + 1) += g;
      }
  return gx;
}

// Row-wise softmax over the last dim of [N,K].
template <class S>
Tensor<S> softmax(const Tensor<S>& x) {
  const int N = x.shape[0], K = x.shape[1];
  Tensor<S> y = x;
  for (int i = 0; i < N; ++i) {
    S* row = y.data.data() + size_t(i) * K;
    S mx = row[0];
    for (int k = 1; k < K; ++k) mx = std::max(mx, row[k]);
    S sum = 0;
    for (int k = 0; k < K; ++k) {
      row[k] = std::exp(row[k] - mx);
      sum += row[k];
    }
    for (int k = 0; k < K; ++k) row[k] /= sum;
  }
  return y;
}

// gx from gy given p = softmax(x): gx = p * (gy - dot(gy, p)).
template <class S>
Tensor<S> softmax_backward(const Tensor<S>& p, const Tensor<S>& gy) {
  const int N = p.shape[0], K = p.shape[1];
  Tensor<S> gx = zeros_like(p);
  for (int i = 0; i < N; ++i) {
    const S* pr = p.data.data() + size_t(i) * K;
    const S* gr = gy.data.data() + size_t(i) * K;
    S dot = 0;
    for (int k = 0; k < K; ++k) dot += pr[k] * gr[k];
    for (int k = 0; k < K; ++k) gx.data[size_t(i) * K + k] = pr[k] * (gr[k] - dot);
  }
  return gx;
}

template <class S>
S mse_loss(const Tensor<S>& a, const Tensor<S>& b) {
  if (!a.same_shape(b)) throw ConfigError("mse_loss: shape mismatch");
  S acc = 0;
  for (size_t i = 0; i < a.numel(); ++i) {
    const S d = a.data[i] - b.data[i];
    acc += d * d;
  }
  return acc / S(a.numel());
}

template <class S>
Tensor<S> mse_loss_backward(const Tensor<S>& a, const Tensor<S>& b, S upstream = S(1)) {
  Tensor<S> g = zeros_like(a);
  const S k = upstream * S(2) / S(a.numel());
  for (size_t i = 0; i < a.numel(); ++i) g.data[i] = k * (a.data[i] - b.data[i]);
  return g;
}

// Mean negative log-likelihood over rows where mask (when given) is nonzero.
// logits [N,K], target class per row.
template <class S>
S cross_entropy_loss(const Tensor<S>& logits, const std::vector<int>& targets,
                     const std::vector<uint8_t>* mask = nullptr) {
  const int N = logits.shape[0], K = logits.shape[1];
  if (int(targets.size()) != N) throw ConfigError("cross_entropy: target length mismatch");
  S acc = 0;
  int count = 0;
  for (int i = 0; i < N; ++i) {
    if (mask && !(*mask)[i]) continue;
    if (targets[i] < 0 || targets[i] >= K) throw ConfigError("cross_entropy: target out of range");
    const S* row = logits.data.data() + size_t(i) * K;
    S mx = row[0];
    for (int k = 1; k < K; ++k) mx = std::max(mx, row[k]);
    S lse = 0;
    for (int k = 0; k < K; ++k) lse += std::exp(row[k] - mx);
    acc += std::log(lse) + mx - row[targets[i]];
    ++count;
  }
  if (count == 0) throw ConfigError("cross_entropy: no unmasked rows");
  return acc / S(count);
}

template <class S>
Tensor<S> cross_entropy_backward(const Tensor<S>& logits, const std::vector<int>& targets,
                                 const std::vector<uint8_t>* mask = nullptr,
                                 S upstream = S(1)) {
  const int N = logits.shape[0], K = logits.shape[1];
  int count = 0;
  for (int i = 0; i < N; ++i)
    if (!mask || (*mask)[i]) ++count;
  Tensor<S> gx = zeros_like(logits);
  const S scale = upstream / S(count);
  for (int i = 0; i < N; ++i) {
    if (mask && !(*mask)[i]) continue;
    const S* row = logits.data.data() + size_t(i) * K;
    S* grow = gx.data.data() + size_t(i) * K;
    S mx = row[0];
    for (int k = 1; k < K; ++k) mx = std::max(mx, row[k]);
    S lse = 0;
    for (int k = 0; k < K; ++k) lse += std::exp(row[k] - mx);
    for (int k = 0; k < K; ++k) grow[k] = scale * (std::exp(row[k] - mx) / lse);
    grow[targets[i]] -= scale;
  }
  return gx;
}

// --- thin module wrappers: parameters plus the forward/backward plumbing ---

template <class S>
void he_uniform(Tensor<S>& t, int fan_in, Rng& rng) {
  const double limit = std::sqrt(6.0 / double(fan_in));
  for (auto& v : t.data) v = S(rng.uniform(-limit, limit));
}

template <class S>
struct Conv2d {
  Tensor<S> w, b;
  int stride = 1, pad = 0;

  void init(int cout, int cin, int k, Rng rng, int stride_ = 1, int pad_ = -1) {
    w.set_requires_grad(true);
    b.set_requires_grad(true);
    w.resize({cout, cin, k, k});
    b.resize({cout});
    he_uniform(w, cin * k * k, rng);
    stride = stride_;
    pad = pad_ < 0 ? k / 2 : pad_;
  }
  Tensor<S> forward(const Tensor<S>& x) const { return conv2d(x, w, b, stride, pad); }
  Tensor<S> backward(const Tensor<S>& x, const Tensor<S>& gy) {
    return conv2d_backward(x, w, b, gy, stride, pad);
  }
  void collect(std::vector<NamedParam<S>>& out, const std::string& prefix) {
    out.push_back({prefix + ".w", &w});
    out.push_back({prefix + ".b", &b});
  }
};

template <class S>
struct Linear {
  Tensor<S> w, b;

  void init(int out, int in, Rng rng) {
    w.set_requires_grad(true);
    b.set_requires_grad(true);
    w.resize({out, in});
    b.resize({out});
    he_uniform(w, in, rng);
  }
  Tensor<S> forward(const Tensor<S>& x) const { return linear(x, w, b); }
  Tensor<S> backward(const Tensor<S>& x, const Tensor<S>& gy) {
    return linear_backward(x, w, b, gy);
  }
  void collect(std::vector<NamedParam<S>>& out, const std::string& prefix) {
    out.push_back({prefix + ".w", &w});
    out.push_back({prefix + ".b", &b});
  }
};

template <class S>
struct GroupNorm {
  Tensor<S> gamma, beta;
  int groups = 4;

  void init(int channels, int groups_ = 4) {
    gamma.set_requires_grad(true);
    beta.set_requires_grad(true);
    gamma.resize({channels});
    beta.resize({channels});
    std::fill(gamma.data.begin(), gamma.data.end(), S(1));
    groups = groups_;
  }
  Tensor<S> forward(const Tensor<S>& x) const { return group_norm(x, gamma, beta, groups); }
  Tensor<S> backward(const Tensor<S>& x, const Tensor<S>& gy) {
    return group_norm_backward(x, gamma, beta, gy, groups);
  }
  void collect(std::vector<NamedParam<S>>& out, const std::string& prefix) {
    out.push_back({prefix + ".gamma", &gamma});
    out.push_back({prefix + ".beta", &beta});
  }
};

}  // namespace phigen
