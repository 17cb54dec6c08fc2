#include "nilmformer/model.hpp"

#include "nilmformer/errors.hpp"

namespace nilmformer {

ApplianceCategory parse_category(const std::string& name) {
  if (name == "I" || name == "on_off") return ApplianceCategory::kOnOff;
  if (name == "II" || name == "multi_state") return ApplianceCategory::kMultiState;
  if (name == "III" || name == "variable") return ApplianceCategory::kVariable;
  if (name == "IV" || name == "constant") return ApplianceCategory::kConstant;
  throw ConfigError("unknown appliance category '" + name + "' (expected I|II|III|IV)");
}

const char* category_name(ApplianceCategory c) {
  switch (c) {
    case ApplianceCategory::kOnOff: return "I";
    case ApplianceCategory::kMultiState: return "II";
    case ApplianceCategory::kVariable: return "III";
    case ApplianceCategory::kConstant: return "IV";
  }
  return "?";
}

std::optional<ApplianceSpec> default_appliance(const std::string& name) {
  if (name == "fridge") {
    return ApplianceSpec{"fridge", 400, 50, 1.0, ApplianceCategory::kMultiState};
  }
  if (name == "washer") {
    return ApplianceSpec{"washer", 500, 20, 1.0, ApplianceCategory::kMultiState};
  }
  if (name == "microwave") {
    return ApplianceSpec{"microwave", 1800, 200, 1.0, ApplianceCategory::kOnOff};
  }
  if (name == "dishwasher") {
    return ApplianceSpec{"dishwasher", 1200, 10, 1.0, ApplianceCategory::kMultiState};
  }
  return std::nullopt;
}

void ModelConfig::validate() const {
  std::string problems;
  auto complain = [&](const std::string& msg) {
    if (!problems.empty()) problems += "; ";
    problems += msg;
  };
  if (hidden_dim < 1) complain("hidden_dim must be >= 1");
  if (n_layers < 1) complain("n_layers must be >= 1");
  if (n_heads < 1) complain("n_heads must be >= 1");
  if (hidden_dim >= 1 && n_heads >= 1 && hidden_dim % n_heads != 0) {
    complain("n_heads " + std::to_string(n_heads) + " does not divide hidden_dim " +
             std::to_string(hidden_dim));
  }
  if (!(dropout >= 0 && dropout < 1)) complain("dropout must lie in [0, 1)");
  if (window_len < 1) complain("window_len must be >= 1");
  if (conv_kernel < 1) complain("conv_kernel must be >= 1");
  if (conv_kernel > window_len) complain("conv_kernel longer than window_len");
  if (pool_alpha < 1) complain("pool_alpha must be >= 1");
  if (pool_alpha >= 1 && window_len >= 1 && window_len % pool_alpha != 0) {
    complain("pool_alpha " + std::to_string(pool_alpha) + " does not divide window_len " +
             std::to_string(window_len));
  }
  if (ffn_expansion < 1) complain("ffn_expansion must be >= 1");
  if (!problems.empty()) throw ConfigError("model config: " + problems);
}

bool ModelConfig::is_valid() const {
  try {
    validate();
    return true;
  } catch (const ConfigError&) {
    return false;
  }
}

NilmModel::NilmModel(ModelConfig config, RngStream& rng) : config_(std::move(config)) {
  config_.validate();
  const Index d = config_.hidden_dim;
  conv_w_ = Tensor(xavier_init(config_.conv_kernel * 1, d, rng), true);
  conv_b_ = Tensor(Matrix::Zero(1, d), true);
  pos_ = Tensor(xavier_init(config_.embed_len(), d, rng) * 0.1, true);
  mask_token_ = Tensor(xavier_init(1, d, rng), true);
  blocks_.reserve(static_cast<std::size_t>(config_.n_layers));
  for (int i = 0; i < config_.n_layers; ++i) {
    blocks_.push_back(TransformerBlockParams::init(
        d, config_.n_heads, config_.ffn_expansion, config_.dropout,
        config_.ffn_activation, config_.norm_placement, rng));
  }
  deconv_w_ = Tensor(xavier_init(config_.deconv_kernel() * d, d, rng), true);
  out_w_ = Tensor(xavier_init(d, 1, rng), true);
  out_b_ = Tensor(Matrix::Zero(1, 1), true);
}

Tensor NilmModel::embed(const Tensor& x_agg, const std::vector<std::uint8_t>* mask) const {
  if (x_agg.rows() != config_.window_len || x_agg.cols() != 1) {
    throw ShapeError("embed: input [" + std::to_string(x_agg.rows()) + " x " +
                     std::to_string(x_agg.cols()) + "] does not match window_len " +
                     std::to_string(config_.window_len));
  }
  Tensor features =
      conv1d(x_agg, conv_w_, conv_b_, config_.conv_kernel, 1, Padding::kSame);
  Tensor pooled = pool1d(features, config_.pool_alpha);
  if (mask != nullptr) {
    if (static_cast<Index>(mask->size()) != config_.window_len) {
      throw ShapeError("embed: mask length " + std::to_string(mask->size()) +
                       " does not match window_len " + std::to_string(config_.window_len));
    }
    std::vector<std::uint8_t> pooled_mask(static_cast<std::size_t>(config_.embed_len()), 0);
    for (Index t = 0; t < config_.embed_len(); ++t) {
      for (int j = 0; j < config_.pool_alpha; ++j) {
        if ((*mask)[static_cast<std::size_t>(t * config_.pool_alpha + j)]) {
          pooled_mask[static_cast<std::size_t>(t)] = 1;
        }
      }
    }
    pooled = replace_masked_rows(pooled, pooled_mask, mask_token_);
  }
  return add(pooled, pos_);
}

ForwardResult NilmModel::forward(const Tensor& x_agg, const ApplianceSpec& spec,
                                 RngStream& rng, bool training,
                                 const std::vector<std::uint8_t>* mask) const {
  spec.validate();
  Tensor z = embed(x_agg, mask);
  for (const TransformerBlockParams& block : blocks_) {
    z = transformer_block(z, block, rng, training);
  }
  Tensor up = deconv1d(z, deconv_w_, config_.deconv_kernel(), config_.pool_alpha);
  const Index excess = up.rows() - config_.window_len;
  Tensor trimmed = slice_rows(up, excess / 2, config_.window_len);
  Tensor recon = activation(trimmed, config_.recon_activation);
  Tensor power = clamp01(add_rowvec(matmul(recon, out_w_), out_b_));

  ForwardResult result;
  result.power = power;
  const Scalar threshold_norm = spec.on_threshold / spec.p_max;
  result.state_score = add_scalar(power, -threshold_norm);
  result.state_pred.resize(static_cast<std::size_t>(power.rows()));
  for (Index t = 0; t < power.rows(); ++t) {
    result.state_pred[static_cast<std::size_t>(t)] =
        power.value()(t, 0) >= threshold_norm ? 1 : -1;
  }
  return result;
}

std::vector<std::pair<std::string, Tensor>> NilmModel::named_parameters() const {
  std::vector<std::pair<std::string, Tensor>> out;
  out.emplace_back("embed.conv_w", conv_w_);
  out.emplace_back("embed.conv_b", conv_b_);
  out.emplace_back("embed.pos", pos_);
  out.emplace_back("embed.mask_token", mask_token_);
  for (std::size_t i = 0; i < blocks_.size(); ++i) {
    blocks_[i].collect_params("block" + std::to_string(i), out);
  }
  out.emplace_back("recon.deconv_w", deconv_w_);
  out.emplace_back("recon.out_w", out_w_);
  out.emplace_back("recon.out_b", out_b_);
  return out;
}

std::vector<Tensor> NilmModel::parameters() const {
  std::vector<Tensor> out;
  for (auto& [name, t] : named_parameters()) out.push_back(t);
  return out;
}

void NilmModel::zero_grad() const {
  for (const Tensor& t : parameters()) t.zero_grad();
}

ParamCount NilmModel::count_params() const {
  ParamCount count;
  for (auto& [name, t] : named_parameters()) {
    count.by_component.emplace_back(name, static_cast<long long>(t.size()));
    count.total += static_cast<long long>(t.size());
  }
  return count;
}

std::vector<Matrix> NilmModel::snapshot() const {
  std::vector<Matrix> snap;
  for (const Tensor& t : parameters()) snap.push_back(t.value());
  return snap;
}

void NilmModel::restore(const std::vector<Matrix>& snap) const {
  std::vector<Tensor> params = parameters();
  if (snap.size() != params.size()) {
    throw ConfigError("restore: snapshot has " + std::to_string(snap.size()) +
                      " tensors, model has " + std::to_string(params.size()));
  }
  for (std::size_t i = 0; i < params.size(); ++i) {
    if (snap[i].rows() != params[i].rows() || snap[i].cols() != params[i].cols()) {
      throw ConfigError("restore: shape mismatch at parameter " + std::to_string(i));
    }
    params[i].mutable_value() = snap[i];
  }
}

}  // namespace nilmformer
