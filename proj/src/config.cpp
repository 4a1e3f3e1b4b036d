#include "phigen/config.hpp"

#include <cinttypes>
#include <cstdio>
#include <fstream>
#include <sstream>

#include "phigen/error.hpp"
#include "json.hpp"

namespace phigen {
namespace {

enum class Kind { Int, Double, Bool, String };

struct RegistryEntry {
  const char* key;
  Kind kind;
  ConfigValue def;
};

// Closed registry: the only keys a config file or --set may mention.
const std::vector<RegistryEntry>& registry() {
  static const std::vector<RegistryEntry> r = {
      // synthetic dataset
      {"dataset.count", Kind::Int, 16LL},
      {"dataset.eval_count", Kind::Int, 10LL},
      {"dataset.width", Kind::Int, 96LL},
      {"dataset.height", Kind::Int, 64LL},
      {"dataset.frames", Kind::Int, 18LL},
      {"dataset.t_obs", Kind::Int, 2LL},
      {"dataset.t_future", Kind::Int, 4LL},
      {"dataset.classes", Kind::Int, 6LL},
      {"dataset.max_vehicles", Kind::Int, 3LL},
      {"dataset.max_buildings", Kind::Int, 10LL},
      {"dataset.speed_min", Kind::Double, 0.9},
      {"dataset.speed_max", Kind::Double, 1.3},
      // autoencoder
      {"vae.latent_channels", Kind::Int, 8LL},
      {"vae.base_channels", Kind::Int, 24LL},
      {"vae.steps", Kind::Int, 500LL},
      {"vae.lr", Kind::Double, 2e-3},
      {"vae.min_lr", Kind::Double, 2e-4},
      {"vae.weight_decay", Kind::Double, 1e-5},
      {"vae.width", Kind::Int, 72LL},
      {"vae.height", Kind::Int, 48LL},
      {"vae.batch", Kind::Int, 8LL},
      // range-view adapter (stage 1)
      {"adapter.channels", Kind::Int, 24LL},
      {"adapter.steps", Kind::Int, 2000LL},
      {"adapter.lr", Kind::Double, 2e-4},
      {"adapter.min_lr", Kind::Double, 2e-5},
      {"adapter.weight_decay", Kind::Double, 1e-4},
      {"adapter.w_rgb", Kind::Double, 1.0},
      {"adapter.w_d", Kind::Double, 0.5},
      {"adapter.w_s", Kind::Double, 0.2},
      {"adapter.w_db", Kind::Double, 0.2},
      {"adapter.depth_bins", Kind::Int, 32LL},
      {"adapter.near", Kind::Double, 1.0},
      {"adapter.far", Kind::Double, 60.0},
      {"adapter.flow_max", Kind::Double, 2.0},
      {"adapter.topk", Kind::Int, 8LL},
      // rectified flow (stage 2)
      {"flow.base_channels", Kind::Int, 32LL},
      {"flow.time_embed_dim", Kind::Int, 32LL},
      {"flow.steps1", Kind::Int, 1000LL},
      {"flow.steps2", Kind::Int, 1000LL},
      {"flow.lr1", Kind::Double, 1e-4},
      {"flow.lr2", Kind::Double, 5e-5},
      {"flow.min_lr", Kind::Double, 1e-5},
      {"flow.weight_decay", Kind::Double, 5e-5},
      {"flow.dropout", Kind::Double, 0.1},
      {"flow.sample_steps", Kind::Int, 20LL},
      {"flow.restart_period", Kind::Int, 0LL},
      {"flow.width1", Kind::Int, 72LL},
      {"flow.height1", Kind::Int, 48LL},
      // stereo forcing
      {"sf.mode", Kind::String, std::string("locpot")},
      {"sf.omega", Kind::Double, 1.5},
      {"sf.sigma_ref", Kind::Double, 4.0},
      {"sf.b_min", Kind::Double, 0.01},
      {"sf.noise_condition", Kind::Bool, false},
      // evaluation protocols
      {"eval.episodes", Kind::Int, 10LL},
      {"eval.seeds", Kind::Int, 20LL},
      // renderer
      {"render.threads", Kind::Int, 1LL},
      {"render.bg_r", Kind::Double, 0.62},
      {"render.bg_g", Kind::Double, 0.76},
      {"render.bg_b", Kind::Double, 0.92},
      // output
      {"output.root", Kind::String, std::string("")},
  };
  return r;
}

const RegistryEntry* find_entry(const std::string& key) {
  for (const auto& e : registry())
    if (key == e.key) return &e;
  return nullptr;
}

ConfigValue parse_typed(const RegistryEntry& e, const std::string& text) {
  try {
    switch (e.kind) {
      case Kind::Int: {
        size_t pos = 0;
        long long v = std::stoll(text, &pos);
        if (pos != text.size()) throw ConfigError("trailing characters");
        return v;
      }
      case Kind::Double: {
        size_t pos = 0;
        double v = std::stod(text, &pos);
        if (pos != text.size()) throw ConfigError("trailing characters");
        return v;
      }
      case Kind::Bool: {
        if (text == "true" || text == "1") return true;
        if (text == "false" || text == "0") return false;
        throw ConfigError("expected true/false");
      }
      case Kind::String:
        return text;
    }
  } catch (const ConfigError&) {
    throw ConfigError("config key '" + std::string(e.key) + "': cannot parse '" + text + "'");
  } catch (const std::exception&) {
    throw ConfigError("config key '" + std::string(e.key) + "': cannot parse '" + text + "'");
  }
  throw ConfigError("unreachable");
}

ConfigValue typed_from_json(const RegistryEntry& e, const nlohmann::json& j) {
  switch (e.kind) {
    case Kind::Int:
      if (!j.is_number_integer())
        throw ConfigError("config key '" + std::string(e.key) + "': expected integer");
      return j.get<long long>();
    case Kind::Double:
      if (!j.is_number())
        throw ConfigError("config key '" + std::string(e.key) + "': expected number");
      return j.get<double>();
    case Kind::Bool:
      if (!j.is_boolean())
        throw ConfigError("config key '" + std::string(e.key) + "': expected boolean");
      return j.get<bool>();
    case Kind::String:
      if (!j.is_string())
        throw ConfigError("config key '" + std::string(e.key) + "': expected string");
      return j.get<std::string>();
  }
  throw ConfigError("unreachable");
}

}  // namespace

RunConfig::RunConfig() {
  for (const auto& e : registry()) values_[e.key] = e.def;
}

void RunConfig::load_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open config file: " + path);
  nlohmann::json doc;
  try {
    in >> doc;
  } catch (const nlohmann::json::exception& ex) {
    throw ConfigError("config file " + path + ": " + ex.what());
  }
  if (!doc.is_object()) throw ConfigError("config file " + path + ": top level must be an object");
  for (auto& [section, body] : doc.items()) {
    if (!body.is_object())
      throw ConfigError("config section '" + section + "' must be an object");
    for (auto& [key, value] : body.items()) {
      const std::string full = section + "." + key;
      const RegistryEntry* e = find_entry(full);
      if (!e) throw ConfigError("unknown config key: " + full);
      values_[full] = typed_from_json(*e, value);
    }
  }
}

void RunConfig::set(const std::string& key_eq_value) {
  auto eq = key_eq_value.find('=');
  if (eq == std::string::npos)
    throw ConfigError("--set expects section.key=value, got: " + key_eq_value);
  const std::string key = key_eq_value.substr(0, eq);
  const std::string text = key_eq_value.substr(eq + 1);
  const RegistryEntry* e = find_entry(key);
  if (!e) throw ConfigError("unknown config key: " + key);
  values_[key] = parse_typed(*e, text);
}

void RunConfig::set(const std::string& key, const ConfigValue& v) {
  const RegistryEntry* e = find_entry(key);
  if (!e) throw ConfigError("unknown config key: " + key);
  if (v.index() != values_[key].index())
    throw ConfigError("config key '" + key + "': type mismatch");
  values_[key] = v;
}

const ConfigValue& RunConfig::at(const std::string& key) const {
  auto it = values_.find(key);
  if (it == values_.end()) throw ConfigError("unknown config key: " + key);
  return it->second;
}

long long RunConfig::get_int(const std::string& key) const {
  const ConfigValue& v = at(key);
  if (const auto* p = std::get_if<long long>(&v)) return *p;
  throw ConfigError("config key '" + key + "' is not an integer");
}

double RunConfig::get_double(const std::string& key) const {
  const ConfigValue& v = at(key);
  if (const auto* p = std::get_if<double>(&v)) return *p;
  if (const auto* p = std::get_if<long long>(&v)) return static_cast<double>(*p);
  throw ConfigError("config key '" + key + "' is not a number");
}

bool RunConfig::get_bool(const std::string& key) const {
  const ConfigValue& v = at(key);
  if (const auto* p = std::get_if<bool>(&v)) return *p;
  throw ConfigError("config key '" + key + "' is not a boolean");
}

const std::string& RunConfig::get_string(const std::string& key) const {
  const ConfigValue& v = at(key);
  if (const auto* p = std::get_if<std::string>(&v)) return *p;
  throw ConfigError("config key '" + key + "' is not a string");
}

std::string canonical_number(double v) {
  char buf[64];
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  return buf;
}

std::string json_escape(const std::string& s) {
  std::string out;
  out.reserve(s.size() + 2);
  for (char c : s) {
    switch (c) {
      case '"': out += "\\\""; break;
      case '\\': out += "\\\\"; break;
      case '\n': out += "\\n"; break;
      case '\r': out += "\\r"; break;
      case '\t': out += "\\t"; break;
      default:
        if (static_cast<unsigned char>(c) < 0x20) {
          char buf[8];
          std::snprintf(buf, sizeof(buf), "\\u%04x", c);
          out += buf;
        } else {
          out += c;
        }
    }
  }
  return out;
}

std::string RunConfig::canonical_json() const {
  // values_ is a std::map, so sections and keys come out sorted.
  std::map<std::string, std::map<std::string, const ConfigValue*>> nested;
  for (const auto& [key, value] : values_) {
    auto dot = key.find('.');
    nested[key.substr(0, dot)][key.substr(dot + 1)] = &value;
  }
  std::ostringstream os;
  os << "{";
  bool first_sec = true;
  for (const auto& [section, body] : nested) {
    if (!first_sec) os << ",";
    first_sec = false;
    os << "\"" << json_escape(section) << "\":{";
    bool first_key = true;
    for (const auto& [key, pv] : body) {
      if (!first_key) os << ",";
      first_key = false;
      os << "\"" << json_escape(key) << "\":";
      if (const auto* p = std::get_if<long long>(pv))
        os << *p;
      else if (const auto* p = std::get_if<double>(pv))
        os << canonical_number(*p);
      else if (const auto* p = std::get_if<bool>(pv))
        os << (*p ? "true" : "false");
      else
        os << "\"" << json_escape(std::get<std::string>(*pv)) << "\"";
    }
    os << "}";
  }
  os << "}";
  return os.str();
}

uint64_t fnv1a64(const void* data, size_t n, uint64_t seed) {
  const auto* p = static_cast<const unsigned char*>(data);
  uint64_t h = seed;
  for (size_t i = 0; i < n; ++i) {
    h ^= p[i];
    h *= 1099511628211ULL;
  }
  return h;
}

std::string hash_hex(uint64_t h) {
  char buf[17];
  std::snprintf(buf, sizeof(buf), "%016" PRIx64, h);
  return buf;
}

uint64_t fnv1a64_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open file for hashing: " + path);
  uint64_t h = 14695981039346656037ULL;
  char buf[1 << 16];
  while (in) {
    in.read(buf, sizeof(buf));
    h = fnv1a64(buf, static_cast<size_t>(in.gcount()), h);
  }
  return h;
}

std::string RunConfig::hash() const {
  const std::string j = canonical_json();
  return hash_hex(fnv1a64(j.data(), j.size()));
}

}  // namespace phigen
