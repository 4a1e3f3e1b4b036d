#include "phigen/manifest.hpp"

#include <filesystem>
#include <fstream>
#include <sstream>

#include "phigen/config.hpp"
#include "phigen/error.hpp"

namespace phigen {
namespace {

void dump_value(const nlohmann::json& v, std::string& out) {
  switch (v.type()) {
    case nlohmann::json::value_t::object: {
      out += '{';
      bool first = true;
      for (auto it = v.begin(); it != v.end(); ++it) {
        if (!first) out += ',';
        first = false;
        out += '"';
        out += json_escape(it.key());
        out += "\":";
        dump_value(it.value(), out);
      }
      out += '}';
      break;
    }
    case nlohmann::json::value_t::array: {
      out += '[';
      bool first = true;
      for (const auto& e : v) {
        if (!first) out += ',';
        first = false;
        dump_value(e, out);
      }
      out += ']';
      break;
    }
    case nlohmann::json::value_t::string:
      out += '"';
      out += json_escape(v.get<std::string>());
      out += '"';
      break;
    case nlohmann::json::value_t::boolean:
      out += v.get<bool>() ? "true" : "false";
      break;
    case nlohmann::json::value_t::number_integer:
      out += std::to_string(v.get<long long>());
      break;
    case nlohmann::json::value_t::number_unsigned:
      out += std::to_string(v.get<unsigned long long>());
      break;
    case nlohmann::json::value_t::number_float:
      out += canonical_number(v.get<double>());
      break;
    case nlohmann::json::value_t::null:
    default:
      out += "null";
      break;
  }
}

}  // namespace

std::string canonical_dump(const nlohmann::json& value) {
  std::string out;
  dump_value(value, out);
  return out;
}

void write_json(const std::string& path, const nlohmann::json& value) {
  const std::string body = canonical_dump(value) + "\n";
  const std::string tmp = path + ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw IoError("cannot open for writing: " + tmp);
    out.write(body.data(), static_cast<std::streamsize>(body.size()));
    if (!out) throw IoError("write failed: " + tmp);
  }
  std::error_code ec;
  std::filesystem::rename(tmp, path, ec);
  if (ec) throw IoError("cannot move " + tmp + " to " + path + ": " + ec.message());
}

nlohmann::json read_json(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open: " + path);
  nlohmann::json doc;
  try {
    in >> doc;
  } catch (const nlohmann::json::exception& ex) {
    throw IoError(path + ": " + ex.what());
  }
  return doc;
}

ManifestBuilder::ManifestBuilder(const std::string& command, const nlohmann::json& resolved_config,
                                 const std::string& config_hash, uint64_t seed) {
  manifest_["command"] = command;
  manifest_["config"] = resolved_config;
  manifest_["config_hash"] = config_hash;
  manifest_["seed"] = seed;
  manifest_["artifacts"] = nlohmann::json::object();
  manifest_["metrics"] = nlohmann::json::object();
  timings_ = nlohmann::json::object();
}

void ManifestBuilder::add_artifact(const std::string& out_dir, const std::string& relative_path) {
  const std::string full = out_dir + "/" + relative_path;
  manifest_["artifacts"][relative_path] = hash_hex(fnv1a64_file(full));
}

void ManifestBuilder::add_metric(const std::string& name, double value) {
  manifest_["metrics"][name] = value;
}

void ManifestBuilder::add_note(const std::string& key, const nlohmann::json& value) {
  manifest_[key] = value;
}

void ManifestBuilder::add_timing(const std::string& name, double seconds) {
  timings_[name] = seconds;
}

void ManifestBuilder::write(const std::string& out_dir) const {
  write_json(out_dir + "/manifest.json", manifest_);
  if (!timings_.empty()) write_json(out_dir + "/timings.json", timings_);
}

}  // namespace phigen
