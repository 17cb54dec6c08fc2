#pragma once

#include <string>
#include <utility>
#include <vector>

#include "nilmformer/ops.hpp"
#include "nilmformer/rng.hpp"
#include "nilmformer/tensor.hpp"

namespace nilmformer {

// Fused projections for all heads: w_q/w_k/w_v/w_o are [d_model x d_model]
// and column slice [i*d_k, (i+1)*d_k) of a projection belongs to head i.
struct AttentionParams {
  Tensor w_q, w_k, w_v, w_o;
  Tensor b_q, b_k, b_v, b_o;
  int head_count = 1;

  Index d_model() const { return w_q.cols(); }
  Index head_dim() const { return d_model() / head_count; }

  static AttentionParams init(Index d_model, int heads, RngStream& rng);
  void validate() const;

  void collect_params(const std::string& prefix,
                      std::vector<std::pair<std::string, Tensor>>& out) const;
};

// softmax(q k^T / sqrt(d_k)) v. If weights_out is given, the row-stochastic
// attention matrix is copied into it.
Tensor scaled_dot_attention(const Tensor& q, const Tensor& k, const Tensor& v,
                            Matrix* weights_out = nullptr);

// Self-attention over x [L x d_model]: project, split into heads, attend per
// head, concatenate, project with w_o. attn_dropout is applied to the
// attention probabilities in training mode.
Tensor multi_head_attention(const Tensor& x, const AttentionParams& params,
                            Scalar attn_dropout, RngStream& rng, bool training,
                            std::vector<Matrix>* head_weights_out = nullptr);

enum class NormPlacement { kPre, kPost };
NormPlacement parse_norm_placement(const std::string& name);
const char* norm_placement_name(NormPlacement p);

struct TransformerBlockParams {
  AttentionParams attention;
  Tensor ffn_w1, ffn_b1;  // [d x d_ff], [1 x d_ff]
  Tensor ffn_w2, ffn_b2;  // [d_ff x d], [1 x d]
  Tensor ln1_gamma, ln1_beta;
  Tensor ln2_gamma, ln2_beta;
  Scalar dropout = 0.0;
  Activation ffn_activation = Activation::kGelu;
  NormPlacement norm = NormPlacement::kPre;

  static TransformerBlockParams init(Index d_model, int heads, int ffn_expansion,
                                     Scalar dropout, Activation ffn_activation,
                                     NormPlacement norm, RngStream& rng);

  void collect_params(const std::string& prefix,
                      std::vector<std::pair<std::string, Tensor>>& out) const;
};

// Residual transformer block; output shape equals input shape.
// Pre-norm wiring: x + Drop(MHSA(LN1(x))), then + Drop(FFN(LN2(.))).
Tensor transformer_block(const Tensor& x, const TransformerBlockParams& params,
                         RngStream& rng, bool training);

// Xavier/Glorot normal init; draws in row-major element order.
Matrix xavier_init(Index rows, Index cols, RngStream& rng);

}  // namespace nilmformer
