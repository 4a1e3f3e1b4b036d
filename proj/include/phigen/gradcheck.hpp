#pragma once

#include <algorithm>
#include <functional>
#include <string>
#include <vector>

#include "phigen/rng.hpp"
#include "phigen/tensor.hpp"

namespace phigen {

struct GradCheckEntry {
  std::string name;
  double max_rel_err = 0;
  int probes = 0;
};

// Central finite differences against the analytic gradient already stored in
// t.grad. loss() must recompute the scalar objective from current tensor
// contents. Probes the highest-|grad| coordinates plus a seeded random
// sample; relative error uses a 1e-6 floor so near-zero gradients compare
// against FD noise honestly instead of dividing by zero.
template <class LossFn>
GradCheckEntry grad_check_tensor(LossFn&& loss, Tensor<double>& t, const std::string& name,
                                 double eps = 1e-5, int max_probes = 16,
                                 uint64_t probe_seed = 0) {
  GradCheckEntry entry{name, 0.0, 0};
  const size_t n = t.numel();
  std::vector<size_t> probes;
  if (n <= size_t(max_probes)) {
    for (size_t i = 0; i < n; ++i) probes.push_back(i);
  } else {
    std::vector<size_t> order(n);
    for (size_t i = 0; i < n; ++i) order[i] = i;
    std::partial_sort(order.begin(), order.begin() + max_probes / 2, order.end(),
                      [&](size_t a, size_t b) {
                        return std::abs(t.grad[a]) > std::abs(t.grad[b]);
                      });
    probes.assign(order.begin(), order.begin() + max_probes / 2);
    Rng rng = Rng(probe_seed).split(rngstream::kGradCheck);
    while (probes.size() < size_t(max_probes)) {
      size_t idx = size_t(rng.uniform_int(n));
      if (std::find(probes.begin(), probes.end(), idx) == probes.end()) probes.push_back(idx);
    }
  }
  for (size_t idx : probes) {
    const double old = t.data[idx];
    t.data[idx] = old + eps;
    const double lp = loss();
    t.data[idx] = old - eps;
    const double lm = loss();
    t.data[idx] = old;
    const double fd = (lp - lm) / (2 * eps);
    const double an = t.grad[idx];
    const double denom = std::max(std::max(std::abs(fd), std::abs(an)), 1e-6);
    entry.max_rel_err = std::max(entry.max_rel_err, std::abs(fd - an) / denom);
    ++entry.probes;
  }
  return entry;
}

}  // namespace phigen
