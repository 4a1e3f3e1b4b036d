#pragma once

#include <map>
#include <string>
#include <vector>

#include "phigen/layers.hpp"

namespace phigen {

struct CheckpointTensor {
  std::vector<int> shape;
  std::vector<float> data;
};

using CheckpointMap = std::map<std::string, CheckpointTensor>;

// Binary format: magic "PHIG", u32 version, then per-parameter records
// (u32 name length, name bytes, u32 ndim, i32 dims, f32 data) to EOF,
// little-endian throughout. Values are stored f32 regardless of scalar type.
void write_checkpoint(const std::string& path, const CheckpointMap& tensors);
CheckpointMap read_checkpoint(const std::string& path);

template <class S>
CheckpointMap snapshot(const std::vector<NamedParam<S>>& params) {
  CheckpointMap out;
  for (const auto& p : params) {
    CheckpointTensor t;
    t.shape = p.t->shape;
    t.data.reserve(p.t->numel());
    for (S v : p.t->data) t.data.push_back(float(v));
    out.emplace(p.name, std::move(t));
  }
  return out;
}

// Strict: every parameter must be present with a matching shape, and the file
// must not carry extras.
template <class S>
void restore(std::vector<NamedParam<S>>& params, const CheckpointMap& tensors) {
  if (tensors.size() != params.size())
    throw IoError("checkpoint: parameter count mismatch (" + std::to_string(tensors.size()) +
                  " stored, " + std::to_string(params.size()) + " expected)");
  for (auto& p : params) {
    auto it = tensors.find(p.name);
    if (it == tensors.end()) throw IoError("checkpoint: missing parameter " + p.name);
    if (it->second.shape != p.t->shape)
      throw IoError("checkpoint: shape mismatch for " + p.name);
    for (size_t i = 0; i < p.t->numel(); ++i) p.t->data[i] = S(it->second.data[i]);
  }
}

}  // namespace phigen
