#pragma once

#include <cstdint>
#include <string>
#include <utility>
#include <vector>

#include "nilmformer/appliance.hpp"
#include "nilmformer/attention.hpp"
#include "nilmformer/ops.hpp"
#include "nilmformer/rng.hpp"
#include "nilmformer/tensor.hpp"

namespace nilmformer {

struct ModelConfig {
  Index hidden_dim = 256;
  int n_layers = 2;
  int n_heads = 2;
  Scalar dropout = 0.1;
  Index window_len = 480;
  int conv_kernel = 5;
  int pool_alpha = 2;
  int ffn_expansion = 4;
  Activation ffn_activation = Activation::kGelu;
  Activation recon_activation = Activation::kTanh;
  NormPlacement norm_placement = NormPlacement::kPre;

  Index embed_len() const { return window_len / pool_alpha; }
  // Kernel 2*alpha with stride alpha restores L + alpha positions; the extra
  // alpha rows are trimmed floor(alpha/2) from the front, the rest from the
  // back.
  int deconv_kernel() const { return 2 * pool_alpha; }

  void validate() const;
  bool is_valid() const;
};

struct ParamCount {
  long long total = 0;
  std::vector<std::pair<std::string, long long>> by_component;
};

struct ForwardResult {
  Tensor power;        // [L x 1], normalized, clamped to [0,1]
  Tensor state_score;  // [L x 1], (power*P_max - on_threshold)/P_max
  std::vector<int> state_pred;  // hard sign of the score; >= 0 maps to +1
};

// End-to-end disaggregator: conv/pool/positional embedding, transformer
// stack, deconv + activation + per-timestep linear reconstruction.
class NilmModel {
 public:
  NilmModel(ModelConfig config, RngStream& init_rng);

  const ModelConfig& config() const { return config_; }

  // Z' = pool(conv(x)) + e. Positions flagged in `mask` (per input timestep)
  // are replaced by the learned mask token after pooling; a pooled position
  // is masked when any timestep it covers is masked.
  Tensor embed(const Tensor& x_agg, const std::vector<std::uint8_t>* mask = nullptr) const;

  ForwardResult forward(const Tensor& x_agg, const ApplianceSpec& spec, RngStream& rng,
                        bool training,
                        const std::vector<std::uint8_t>* mask = nullptr) const;

  std::vector<std::pair<std::string, Tensor>> named_parameters() const;
  std::vector<Tensor> parameters() const;
  void zero_grad() const;
  ParamCount count_params() const;

  // Deep copies of parameter values, in named_parameters() order.
  std::vector<Matrix> snapshot() const;
  void restore(const std::vector<Matrix>& snap) const;

 private:
  ModelConfig config_;
  Tensor conv_w_, conv_b_;
  Tensor pos_;         // [(L/alpha) x d]
  Tensor mask_token_;  // [1 x d]
  std::vector<TransformerBlockParams> blocks_;
  Tensor deconv_w_;
  Tensor out_w_, out_b_;  // [d x 1], [1 x 1]
};

}  // namespace nilmformer
