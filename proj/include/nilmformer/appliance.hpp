#pragma once

#include <optional>
#include <string>

#include "nilmformer/errors.hpp"
#include "nilmformer/types.hpp"

namespace nilmformer {

// Operational classes: I on/off, II fixed multi-state cycles, III variable
// draw, IV constant draw.
enum class ApplianceCategory { kOnOff, kMultiState, kVariable, kConstant };

ApplianceCategory parse_category(const std::string& name);
const char* category_name(ApplianceCategory c);

struct ApplianceSpec {
  std::string name;
  Scalar p_max = 0;        // watts; normalization constant
  Scalar on_threshold = 0; // watts; state is +1 at or above this level
  Scalar lambda = 1.0;     // absolute-error loss weight
  ApplianceCategory category = ApplianceCategory::kOnOff;

  void validate() const {
    if (name.empty()) throw ConfigError("appliance: name must not be empty");
    if (!(on_threshold >= 0 && on_threshold < p_max)) {
      throw ConfigError("appliance '" + name + "': need 0 <= on_threshold < p_max, got " +
                        std::to_string(on_threshold) + " / " + std::to_string(p_max));
    }
    if (lambda < 0) throw ConfigError("appliance '" + name + "': lambda must be >= 0");
  }
};

// Built-in constants for the REDD appliances; overridable per manifest.
std::optional<ApplianceSpec> default_appliance(const std::string& name);

}  // namespace nilmformer
