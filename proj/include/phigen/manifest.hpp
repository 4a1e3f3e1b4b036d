#pragma once

#include <string>

#include "json.hpp"

namespace phigen {

// Canonical serialization: object keys sorted (nlohmann::json's map order),
// doubles printed with %.17g, no whitespace. Hashes of this form are stable
// across platforms.
std::string canonical_dump(const nlohmann::json& value);

// Writes canonical JSON (with trailing newline) via temp-file-then-rename.
void write_json(const std::string& path, const nlohmann::json& value);
nlohmann::json read_json(const std::string& path);

// A run manifest records the command, fully resolved config (plus its hash),
// seed, and the produced artifacts with content hashes. Wall-clock timings go
// to a separate timings.json so manifests stay bit-identical across reruns.
class ManifestBuilder {
 public:
  ManifestBuilder(const std::string& command, const nlohmann::json& resolved_config,
                  const std::string& config_hash, uint64_t seed);

  // Records path (relative to the out dir) plus the FNV-1a64 of its bytes.
  void add_artifact(const std::string& out_dir, const std::string& relative_path);
  void add_metric(const std::string& name, double value);
  void add_note(const std::string& key, const nlohmann::json& value);
  void add_timing(const std::string& name, double seconds);

  // Writes out_dir/manifest.json and, when timings were recorded,
  // out_dir/timings.json.
  void write(const std::string& out_dir) const;

  const nlohmann::json& manifest() const { return manifest_; }

 private:
  nlohmann::json manifest_;
  nlohmann::json timings_;
};

}  // namespace phigen
