#include "phigen/scene_io.hpp"

#include <algorithm>
#include <cstring>
#include <sstream>
#include <filesystem>
#include <fstream>

#include "phigen/error.hpp"

namespace phigen {
namespace {

constexpr uint32_t kMagic = 0x43534750u;  // "PGSC" on disk
constexpr uint32_t kVersion = 1;

void put_bytes(std::string& buf, const void* p, size_t n) {
  buf.append(static_cast<const char*>(p), n);
}

template <typename T>
void put(std::string& buf, T v) {
  put_bytes(buf, &v, sizeof(T));
}

struct Reader {
  std::string data;
  size_t pos = 0;
  std::string path;

  void take(void* out, size_t n, const char* what) {
    if (pos + n > data.size())
      throw IoError(path + ": truncated while reading " + what, static_cast<int64_t>(pos));
    std::memcpy(out, data.data() + pos, n);
    pos += n;
  }
  template <typename T>
  T get(const char* what) {
    T v;
    take(&v, sizeof(T), what);
    return v;
  }
};

}  // namespace

void write_scene(const std::string& path, const GaussianScene& scene) {
  const size_t sem_channels = scene.gaussians.empty()
                                  ? 0
                                  : static_cast<size_t>(scene.gaussians.front().sem_logits.size());
  std::string buf;
  buf.reserve(24 + scene.size() * (17 * 4 + sem_channels * 4 + 1));
  put<uint32_t>(buf, kMagic);
  put<uint32_t>(buf, kVersion);
  put<uint64_t>(buf, scene.size());
  put<uint64_t>(buf, sem_channels);
  for (size_t i = 0; i < scene.size(); ++i) {
    const Gaussian4D& g = scene.gaussians[i];
    if (static_cast<size_t>(g.sem_logits.size()) != sem_channels)
      throw IoError("write_scene: inconsistent sem channel count at index " + std::to_string(i));
    put_bytes(buf, g.mu.data(), 3 * 4);
    put_bytes(buf, g.scale.data(), 3 * 4);
    put_bytes(buf, g.rot.data(), 4 * 4);
    put<float>(buf, g.opacity);
    put_bytes(buf, g.color.data(), 3 * 4);
    put_bytes(buf, g.flow.data(), 3 * 4);
    put_bytes(buf, g.sem_logits.data(), sem_channels * 4);
    const uint8_t dyn = i < scene.dynamic_mask.size() ? scene.dynamic_mask[i] : 0;
    put<uint8_t>(buf, dyn);
  }
  const std::string tmp = path + ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw IoError("cannot open for writing: " + tmp);
    out.write(buf.data(), static_cast<std::streamsize>(buf.size()));
    if (!out) throw IoError("write failed: " + tmp);
  }
  std::error_code ec;
  std::filesystem::rename(tmp, path, ec);
  if (ec) throw IoError("cannot move " + tmp + " to " + path + ": " + ec.message());
}

GaussianScene read_scene(const std::string& path) {
  Reader r;
  r.path = path;
  {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IoError("cannot open: " + path);
    std::ostringstream ss;
    ss << in.rdbuf();
    r.data = ss.str();
  }
  if (r.get<uint32_t>("magic") != kMagic) throw IoError(path + ": bad magic", 0);
  const uint32_t version = r.get<uint32_t>("version");
  if (version != kVersion)
    throw IoError(path + ": unsupported version " + std::to_string(version), 4);
  const uint64_t count = r.get<uint64_t>("gaussian count");
  const uint64_t sem_channels = r.get<uint64_t>("sem channel count");
  // Sanity bound so a corrupt count fails cleanly instead of exhausting memory.
  const uint64_t record = 17 * 4 + sem_channels * 4 + 1;
  if (sem_channels > (1u << 20) || count > (r.data.size() - r.pos) / std::max<uint64_t>(record, 1))
    throw IoError(path + ": header inconsistent with file size", 8);

  GaussianScene scene;
  scene.gaussians.resize(count);
  scene.dynamic_mask.resize(count);
  for (uint64_t i = 0; i < count; ++i) {
    Gaussian4D& g = scene.gaussians[i];
    g.sem_logits.resize(static_cast<Eigen::Index>(sem_channels));
    r.take(g.mu.data(), 3 * 4, "mu");
    r.take(g.scale.data(), 3 * 4, "scale");
    r.take(g.rot.data(), 4 * 4, "rot");
    g.opacity = r.get<float>("opacity");
    r.take(g.color.data(), 3 * 4, "color");
    r.take(g.flow.data(), 3 * 4, "flow");
    if (sem_channels > 0) r.take(g.sem_logits.data(), sem_channels * 4, "sem logits");
    scene.dynamic_mask[i] = r.get<uint8_t>("dynamic flag");
  }
  if (r.pos != r.data.size())
    throw IoError(path + ": trailing bytes after scene data", static_cast<int64_t>(r.pos));
  return scene;
}

}  // namespace phigen
