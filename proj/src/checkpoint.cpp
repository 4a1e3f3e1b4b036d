#include "phigen/checkpoint.hpp"

#include <cstdint>
#include <cstdio>
#include <filesystem>
#include <fstream>

#include "phigen/error.hpp"

namespace phigen {

namespace {
constexpr uint32_t kMagic = 0x47494850;  // "PHIG" little-endian
constexpr uint32_t kVersion = 1;

template <class T>
void put(std::ofstream& os, const T& v) {
  os.write(reinterpret_cast<const char*>(&v), sizeof(T));
}

template <class T>
T get(std::ifstream& is, long long& off) {
  T v{};
  is.read(reinterpret_cast<char*>(&v), sizeof(T));
  if (!is) throw IoError("checkpoint: truncated at byte " + std::to_string(off), off);
  off += sizeof(T);
  return v;
}
}  // namespace

void write_checkpoint(const std::string& path, const CheckpointMap& tensors) {
  const std::string tmp = path + ".tmp";
  {
    std::ofstream os(tmp, std::ios::binary);
    if (!os) throw IoError("checkpoint: cannot open " + tmp + " for writing");
    put(os, kMagic);
    put(os, kVersion);
    for (const auto& [name, t] : tensors) {
      put(os, uint32_t(name.size()));
      os.write(name.data(), std::streamsize(name.size()));
      put(os, uint32_t(t.shape.size()));
      for (int d : t.shape) put(os, int32_t(d));
      os.write(reinterpret_cast<const char*>(t.data.data()),
               std::streamsize(t.data.size() * sizeof(float)));
    }
    if (!os) throw IoError("checkpoint: write failed for " + tmp);
  }
  std::filesystem::rename(tmp, path);
}

CheckpointMap read_checkpoint(const std::string& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw IoError("checkpoint: cannot open " + path);
  long long off = 0;
  if (get<uint32_t>(is, off) != kMagic) throw IoError("checkpoint: bad magic in " + path, 0);
  const uint32_t version = get<uint32_t>(is, off);
  if (version != kVersion)
    throw IoError("checkpoint: unsupported version " + std::to_string(version), 4);
  CheckpointMap out;
  while (is.peek() != EOF) {
    const uint32_t name_len = get<uint32_t>(is, off);
    if (name_len > 4096) throw IoError("checkpoint: implausible name length", off - 4);
    std::string name(name_len, '\0');
    is.read(name.data(), name_len);
    if (!is) throw IoError("checkpoint: truncated at byte " + std::to_string(off), off);
    off += name_len;
    CheckpointTensor t;
    const uint32_t ndim = get<uint32_t>(is, off);
    if (ndim > 8) throw IoError("checkpoint: implausible rank", off - 4);
    size_t numel = 1;
    for (uint32_t d = 0; d < ndim; ++d) {
      const int32_t dim = get<int32_t>(is, off);
      if (dim <= 0) throw IoError("checkpoint: non-positive dimension", off - 4);
      t.shape.push_back(dim);
      numel *= size_t(dim);
    }
    t.data.resize(numel);
    is.read(reinterpret_cast<char*>(t.data.data()), std::streamsize(numel * sizeof(float)));
    if (!is) throw IoError("checkpoint: truncated tensor data at byte " + std::to_string(off), off);
    off += static_cast<long long>(numel * sizeof(float));
    if (!out.emplace(std::move(name), std::move(t)).second)
      throw IoError("checkpoint: duplicate parameter name", off);
  }
  return out;
}

}  // namespace phigen
