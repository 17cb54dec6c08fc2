#pragma once

#include <string>

#include "json.hpp"
#include "nilmformer/appliance.hpp"
#include "nilmformer/model.hpp"

namespace nilmformer {

using Json = nlohmann::json;

// Reads a JSON manifest; IoError if unreadable, ConfigError on bad syntax.
Json load_json_file(const std::string& path);
void write_text_file(const std::string& path, const std::string& contents);

Json to_json(const ModelConfig& cfg);
ModelConfig model_config_from_json(const Json& j);

Json to_json(const ApplianceSpec& spec);
ApplianceSpec appliance_from_json(const Json& j);

// Field access with diagnostics that name the missing/ill-typed field.
template <typename T>
T require_field(const Json& j, const std::string& field, const std::string& where) {
  if (!j.contains(field)) {
    throw ConfigError(where + ": missing required field '" + field + "'");
  }
  try {
    return j.at(field).get<T>();
  } catch (const Json::exception&) {
    throw ConfigError(where + ": field '" + field + "' has the wrong type");
  }
}

template <typename T>
T field_or(const Json& j, const std::string& field, T fallback) {
  if (!j.contains(field)) return fallback;
  try {
    return j.at(field).get<T>();
  } catch (const Json::exception&) {
    throw ConfigError("field '" + field + "' has the wrong type");
  }
}

}  // namespace nilmformer
