#pragma once

#include <cstddef>
#include <numeric>
#include <stdexcept>
#include <string>
#include <vector>

#include "phigen/error.hpp"

namespace phigen {

// Dense row-major tensor. Image tensors are [C, H, W]; matrices [rows, cols].
// grad is allocated iff requires_grad, always shaped like data.
template <class S>
struct Tensor {
  std::vector<int> shape;
  std::vector<S> data;
  bool requires_grad = false;
  std::vector<S> grad;

  Tensor() = default;
  explicit Tensor(std::vector<int> s) { resize(std::move(s)); }

  void resize(std::vector<int> s) {
    shape = std::move(s);
    size_t n = 1;
    for (int d : shape) {
      if (d <= 0) throw ConfigError("tensor: non-positive dimension");
      n *= size_t(d);
    }
    data.assign(n, S(0));
    if (requires_grad) grad.assign(n, S(0));
  }

  size_t numel() const { return data.size(); }

  void set_requires_grad(bool on) {
    requires_grad = on;
    grad.assign(on ? data.size() : 0, S(0));
  }

  void zero_grad() {
    if (requires_grad) std::fill(grad.begin(), grad.end(), S(0));
  }

  S& operator[](size_t i) { return data[i]; }
  const S& operator[](size_t i) const { return data[i]; }

  // [C,H,W] accessor.
  S& at(int c, int y, int x) {
    return data[(size_t(c) * shape[1] + y) * shape[2] + x];
  }
  const S& at(int c, int y, int x) const {
    return data[(size_t(c) * shape[1] + y) * shape[2] + x];
  }

  bool same_shape(const Tensor& o) const { return shape == o.shape; }
};

template <class S>
Tensor<S> zeros_like(const Tensor<S>& t) {
  return Tensor<S>(t.shape);
}

template <class S>
std::string shape_string(const Tensor<S>& t) {
  std::string s = "[";
  for (size_t i = 0; i < t.shape.size(); ++i)
    s += (i ? "," : "") + std::to_string(t.shape[i]);
  return s + "]";
}

}  // namespace phigen
