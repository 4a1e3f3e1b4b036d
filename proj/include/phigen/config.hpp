#pragma once

#include <cstdint>
#include <map>
#include <string>
#include <variant>
#include <vector>

namespace phigen {

using ConfigValue = std::variant<long long, double, bool, std::string>;

// Flat "section.key" configuration with a closed key registry: every key has a
// declared type and default, unknown keys are rejected, and the resolved map
// serializes canonically (sorted keys, %.17g floats) so its hash is stable.
class RunConfig {
 public:
  RunConfig();  // defaults

  void load_file(const std::string& path);        // JSON {section: {key: value}}
  void set(const std::string& key_eq_value);      // "section.key=value"
  void set(const std::string& key, const ConfigValue& v);

  long long get_int(const std::string& key) const;
  double get_double(const std::string& key) const;  // int keys coerce
  bool get_bool(const std::string& key) const;
  const std::string& get_string(const std::string& key) const;

  std::string canonical_json() const;   // nested, sorted, fixed float format
  std::string hash() const;             // 16-hex FNV-1a64 of canonical_json
  const std::map<std::string, ConfigValue>& values() const { return values_; }

 private:
  const ConfigValue& at(const std::string& key) const;
  std::map<std::string, ConfigValue> values_;
};

// Canonical scalar formatting shared by everything that hashes JSON.
std::string canonical_number(double v);
std::string json_escape(const std::string& s);
uint64_t fnv1a64(const void* data, size_t n, uint64_t seed = 14695981039346656037ULL);
std::string hash_hex(uint64_t h);
uint64_t fnv1a64_file(const std::string& path);

}  // namespace phigen
