#pragma once

#include <string>

#include "json.hpp"
#include "nilmformer/model.hpp"

namespace nilmformer {

// Versioned binary container: magic, format version, JSON config block
// (model config + appliance + caller extras), then named parameter tensors
// as (name, rows, cols, f64 values) little-endian, closed by an FNV-1a64
// content checksum.
void save_checkpoint(const std::string& path, const NilmModel& model,
                     const ApplianceSpec& spec, const nlohmann::json& extra = {});

struct LoadedCheckpoint {
  NilmModel model;
  ApplianceSpec spec;
  nlohmann::json extra;
};

LoadedCheckpoint load_checkpoint(const std::string& path);

}  // namespace nilmformer
