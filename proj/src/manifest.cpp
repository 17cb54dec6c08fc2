#include "nilmformer/manifest.hpp"

#include <fstream>
#include <sstream>

namespace nilmformer {

Json load_json_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open '" + path + "' for reading");
  std::stringstream buf;
  buf << in.rdbuf();
  try {
    return Json::parse(buf.str());
  } catch (const Json::parse_error& e) {
    throw ConfigError("manifest '" + path + "': " + e.what());
  }
}

void write_text_file(const std::string& path, const std::string& contents) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot open '" + path + "' for writing");
  out << contents;
  if (!out) throw IoError("write to '" + path + "' failed");
}

Json to_json(const ModelConfig& cfg) {
  return Json{{"hidden_dim", cfg.hidden_dim},
              {"n_layers", cfg.n_layers},
              {"n_heads", cfg.n_heads},
              {"dropout", cfg.dropout},
              {"window_len", cfg.window_len},
              {"conv_kernel", cfg.conv_kernel},
              {"pool_alpha", cfg.pool_alpha},
              {"ffn_expansion", cfg.ffn_expansion},
              {"ffn_activation", activation_name(cfg.ffn_activation)},
              {"recon_activation", activation_name(cfg.recon_activation)},
              {"norm_placement", norm_placement_name(cfg.norm_placement)}};
}

ModelConfig model_config_from_json(const Json& j) {
  ModelConfig cfg;
  cfg.hidden_dim = field_or<Index>(j, "hidden_dim", cfg.hidden_dim);
  cfg.n_layers = field_or<int>(j, "n_layers", cfg.n_layers);
  cfg.n_heads = field_or<int>(j, "n_heads", cfg.n_heads);
  cfg.dropout = field_or<Scalar>(j, "dropout", cfg.dropout);
  cfg.window_len = field_or<Index>(j, "window_len", cfg.window_len);
  cfg.conv_kernel = field_or<int>(j, "conv_kernel", cfg.conv_kernel);
  cfg.pool_alpha = field_or<int>(j, "pool_alpha", cfg.pool_alpha);
  cfg.ffn_expansion = field_or<int>(j, "ffn_expansion", cfg.ffn_expansion);
  cfg.ffn_activation =
      parse_activation(field_or<std::string>(j, "ffn_activation", "gelu"));
  cfg.recon_activation =
      parse_activation(field_or<std::string>(j, "recon_activation", "tanh"));
  cfg.norm_placement =
      parse_norm_placement(field_or<std::string>(j, "norm_placement", "pre"));
  cfg.validate();
  return cfg;
}

Json to_json(const ApplianceSpec& spec) {
  return Json{{"name", spec.name},
              {"p_max", spec.p_max},
              {"on_threshold", spec.on_threshold},
              {"lambda", spec.lambda},
              {"category", category_name(spec.category)}};
}

ApplianceSpec appliance_from_json(const Json& j) {
  ApplianceSpec spec;
  spec.name = require_field<std::string>(j, "name", "appliance");
  if (auto builtin = default_appliance(spec.name)) spec = *builtin;
  spec.p_max = field_or<Scalar>(j, "p_max", spec.p_max);
  spec.on_threshold = field_or<Scalar>(j, "on_threshold", spec.on_threshold);
  spec.lambda = field_or<Scalar>(j, "lambda", spec.lambda);
  if (j.contains("category")) {
    spec.category = parse_category(require_field<std::string>(j, "category", "appliance"));
  }
  spec.validate();
  return spec;
}

}  // namespace nilmformer
