#pragma once

// Parsing side of the persisted formats. Writing is done by hand in
// serialize.cpp so reals keep 17 significant digits.

#include <json.hpp>

#include <filesystem>
#include <string>
#include <vector>

#include "gapa/errors.hpp"
#include "gapa/serialize.hpp"

namespace gapa::detail {

using json = nlohmann::json;

inline json parse_document(const std::filesystem::path& path, const std::string& format) {
  const std::string text = read_text_file(path);
  json doc;
  try {
    doc = json::parse(text);
  } catch (const json::exception& e) {
    throw PersistenceError("malformed " + format + " file '" + path.string() + "': " + e.what());
  }
  if (!doc.is_object() || !doc.contains("format") || doc["format"] != format) {
    throw PersistenceError("'" + path.string() + "' is not a " + format + " file");
  }
  if (!doc.contains("version") || !doc["version"].is_number_integer()) {
    throw PersistenceError("'" + path.string() + "' has no version field");
  }
  const int version = doc["version"].get<int>();
  if (version != kFormatVersion) {
    throw PersistenceError(format + " file '" + path.string() + "' has version " +
                           std::to_string(version) + ", this build reads version " +
                           std::to_string(kFormatVersion));
  }
  return doc;
}

inline const json& field(const json& obj, const char* key) {
  if (!obj.is_object() || !obj.contains(key)) {
    throw PersistenceError(std::string("missing field '") + key + "'");
  }
  return obj.at(key);
}

inline double real(const json& v, const char* what) {
  if (!v.is_number()) throw PersistenceError(std::string("field '") + what + "' is not a number");
  return v.get<double>();
}

inline std::vector<double> reals(const json& v, const char* what) {
  if (!v.is_array()) throw PersistenceError(std::string("field '") + what + "' is not an array");
  std::vector<double> out;
  out.reserve(v.size());
  for (const auto& e : v) out.push_back(real(e, what));
  return out;
}

inline std::string text(const json& v, const char* what) {
  if (!v.is_string()) throw PersistenceError(std::string("field '") + what + "' is not a string");
  return v.get<std::string>();
}

}  // namespace gapa::detail
