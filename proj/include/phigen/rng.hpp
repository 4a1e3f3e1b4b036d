#pragma once

#include <cmath>
#include <cstdint>

namespace phigen {

// Counter-based splittable RNG. Draw k is a pure function of (key, k), so any
// stream can be replayed or split without touching sibling streams. split()
// derives an independent child keyed by a caller-chosen tag; identical
// seed + tag paths give identical streams regardless of interleaving.
class Rng {
 public:
  explicit Rng(uint64_t seed) : key_(mix(seed ^ 0x5851f42d4c957f2dULL)) {}

  Rng split(uint64_t tag) const {
    return Rng(mix(key_ + 0x9e3779b97f4a7c15ULL * (tag + 1)));
  }

  uint64_t next_u64() { return mix(key_ + 0x9e3779b97f4a7c15ULL * (++counter_)); }

  // Uniform in [0, 1) with 53-bit resolution.
  double uniform() { return double(next_u64() >> 11) * 0x1.0p-53; }

  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

  // Integer in [0, n). n must be > 0; modulo bias is irrelevant at our n.
  uint64_t uniform_int(uint64_t n) { return next_u64() % n; }

  // Box-Muller, two fresh uniforms per call so the stream position is
  // call-count deterministic (no cached spare).
  double normal() {
    double u1 = uniform();
    double u2 = uniform();
    if (u1 < 1e-300) u1 = 1e-300;
    return std::sqrt(-2.0 * std::log(u1)) * std::cos(6.283185307179586477 * u2);
  }

 private:
  static uint64_t mix(uint64_t x) {
    x ^= x >> 30;
    x *= 0xbf58476d1ce4e5b9ULL;
    x ^= x >> 27;
    x *= 0x94d049bb133111ebULL;
    x ^= x >> 31;
    return x;
  }

  uint64_t key_;
  uint64_t counter_ = 0;
};

// Fixed stream tags so independent consumers never share a stream.
namespace rngstream {
constexpr uint64_t kDataset = 1;
constexpr uint64_t kInit = 2;
constexpr uint64_t kTrain = 3;
constexpr uint64_t kSample = 4;
constexpr uint64_t kEval = 5;
constexpr uint64_t kGradCheck = 6;
}  // namespace rngstream

}  // namespace phigen
