#include "nilmformer/attention.hpp"

#include <cmath>

#include "nilmformer/errors.hpp"

namespace nilmformer {

Matrix xavier_init(Index rows, Index cols, RngStream& rng) {
  const Scalar stddev = std::sqrt(2.0 / static_cast<Scalar>(rows + cols));
  Matrix m(rows, cols);
  for (Index i = 0; i < rows; ++i) {
    for (Index j = 0; j < cols; ++j) m(i, j) = rng.normal(0.0, stddev);
  }
  return m;
}

AttentionParams AttentionParams::init(Index d_model, int heads, RngStream& rng) {
  AttentionParams p;
  p.head_count = heads;
  p.w_q = Tensor(xavier_init(d_model, d_model, rng), true);
  p.b_q = Tensor(Matrix::Zero(1, d_model), true);
  p.w_k = Tensor(xavier_init(d_model, d_model, rng), true);
  p.b_k = Tensor(Matrix::Zero(1, d_model), true);
  p.w_v = Tensor(xavier_init(d_model, d_model, rng), true);
  p.b_v = Tensor(Matrix::Zero(1, d_model), true);
  p.w_o = Tensor(xavier_init(d_model, d_model, rng), true);
  p.b_o = Tensor(Matrix::Zero(1, d_model), true);
  p.validate();
  return p;
}

void AttentionParams::validate() const {
  if (head_count < 1) {
    throw ConfigError("attention: head count must be >= 1, got " +
                      std::to_string(head_count));
  }
  if (d_model() % head_count != 0) {
    throw ConfigError("attention: head count " + std::to_string(head_count) +
                      " does not divide hidden dim " + std::to_string(d_model()));
  }
}

void AttentionParams::collect_params(
    const std::string& prefix, std::vector<std::pair<std::string, Tensor>>& out) const {
  out.emplace_back(prefix + ".w_q", w_q);
  out.emplace_back(prefix + ".b_q", b_q);
  out.emplace_back(prefix + ".w_k", w_k);
  out.emplace_back(prefix + ".b_k", b_k);
  out.emplace_back(prefix + ".w_v", w_v);
  out.emplace_back(prefix + ".b_v", b_v);
  out.emplace_back(prefix + ".w_o", w_o);
  out.emplace_back(prefix + ".b_o", b_o);
}

Tensor scaled_dot_attention(const Tensor& q, const Tensor& k, const Tensor& v,
                            Matrix* weights_out) {
  if (q.cols() != k.cols()) {
    throw ShapeError("attention: q and k disagree on key width: " +
                     std::to_string(q.cols()) + " vs " + std::to_string(k.cols()));
  }
  if (k.rows() != v.rows()) {
    throw ShapeError("attention: k and v disagree on length: " +
                     std::to_string(k.rows()) + " vs " + std::to_string(v.rows()));
  }
  const Scalar inv_sqrt_dk = 1.0 / std::sqrt(static_cast<Scalar>(q.cols()));
  Tensor scores = scale(matmul(q, transpose(k)), inv_sqrt_dk);
  Tensor weights = softmax_rows(scores);
  if (weights_out != nullptr) *weights_out = weights.value();
  return matmul(weights, v);
}

Tensor multi_head_attention(const Tensor& x, const AttentionParams& params,
                            Scalar attn_dropout, RngStream& rng, bool training,
                            std::vector<Matrix>* head_weights_out) {
  params.validate();
  if (x.cols() != params.d_model()) {
    throw ShapeError("attention: input width " + std::to_string(x.cols()) +
                     " vs d_model " + std::to_string(params.d_model()));
  }
  const int h = params.head_count;
  const Index dk = params.head_dim();
  if (head_weights_out != nullptr) head_weights_out->clear();

  Tensor q = add_rowvec(matmul(x, params.w_q), params.b_q);
  Tensor k = add_rowvec(matmul(x, params.w_k), params.b_k);
  Tensor v = add_rowvec(matmul(x, params.w_v), params.b_v);

  std::vector<Tensor> heads;
  heads.reserve(static_cast<std::size_t>(h));
  for (int i = 0; i < h; ++i) {
    Tensor qi = slice_cols(q, i * dk, dk);
    Tensor ki = slice_cols(k, i * dk, dk);
    Tensor vi = slice_cols(v, i * dk, dk);
    const Scalar inv_sqrt_dk = 1.0 / std::sqrt(static_cast<Scalar>(dk));
    Tensor probs = softmax_rows(scale(matmul(qi, transpose(ki)), inv_sqrt_dk));
    if (head_weights_out != nullptr) head_weights_out->push_back(probs.value());
    probs = dropout(probs, attn_dropout, rng, training);
    heads.push_back(matmul(probs, vi));
  }
  Tensor concat = concat_cols(heads);
  return add_rowvec(matmul(concat, params.w_o), params.b_o);
}

NormPlacement parse_norm_placement(const std::string& name) {
  if (name == "pre") return NormPlacement::kPre;
  if (name == "post") return NormPlacement::kPost;
  throw ConfigError("unknown norm placement '" + name + "' (expected pre|post)");
}

const char* norm_placement_name(NormPlacement p) {
  return p == NormPlacement::kPre ? "pre" : "post";
}

TransformerBlockParams TransformerBlockParams::init(Index d_model, int heads,
                                                    int ffn_expansion, Scalar dropout,
                                                    Activation ffn_activation,
                                                    NormPlacement norm, RngStream& rng) {
  if (ffn_expansion < 1) {
    throw ConfigError("transformer block: ffn expansion must be >= 1, got " +
                      std::to_string(ffn_expansion));
  }
  TransformerBlockParams p;
  p.attention = AttentionParams::init(d_model, heads, rng);
  const Index d_ff = d_model * ffn_expansion;
  p.ffn_w1 = Tensor(xavier_init(d_model, d_ff, rng), true);
  p.ffn_b1 = Tensor(Matrix::Zero(1, d_ff), true);
  p.ffn_w2 = Tensor(xavier_init(d_ff, d_model, rng), true);
  p.ffn_b2 = Tensor(Matrix::Zero(1, d_model), true);
  p.ln1_gamma = Tensor(Matrix::Ones(1, d_model), true);
  p.ln1_beta = Tensor(Matrix::Zero(1, d_model), true);
  p.ln2_gamma = Tensor(Matrix::Ones(1, d_model), true);
  p.ln2_beta = Tensor(Matrix::Zero(1, d_model), true);
  p.dropout = dropout;
  p.ffn_activation = ffn_activation;
  p.norm = norm;
  return p;
}

void TransformerBlockParams::collect_params(
    const std::string& prefix, std::vector<std::pair<std::string, Tensor>>& out) const {
  attention.collect_params(prefix + ".attn", out);
  out.emplace_back(prefix + ".ln1_gamma", ln1_gamma);
  out.emplace_back(prefix + ".ln1_beta", ln1_beta);
  out.emplace_back(prefix + ".ffn_w1", ffn_w1);
  out.emplace_back(prefix + ".ffn_b1", ffn_b1);
  out.emplace_back(prefix + ".ffn_w2", ffn_w2);
  out.emplace_back(prefix + ".ffn_b2", ffn_b2);
  out.emplace_back(prefix + ".ln2_gamma", ln2_gamma);
  out.emplace_back(prefix + ".ln2_beta", ln2_beta);
}

namespace {

Tensor feed_forward(const Tensor& x, const TransformerBlockParams& p) {
  Tensor hidden = activation(add_rowvec(matmul(x, p.ffn_w1), p.ffn_b1), p.ffn_activation);
  return add_rowvec(matmul(hidden, p.ffn_w2), p.ffn_b2);
}

}  // namespace

Tensor transformer_block(const Tensor& x, const TransformerBlockParams& params,
                         RngStream& rng, bool training) {
  if (params.norm == NormPlacement::kPre) {
    Tensor attended = multi_head_attention(layer_norm(x, params.ln1_gamma, params.ln1_beta),
                                           params.attention, params.dropout, rng, training);
    Tensor h = add(x, dropout(attended, params.dropout, rng, training));
    Tensor ff = feed_forward(layer_norm(h, params.ln2_gamma, params.ln2_beta), params);
    return add(h, dropout(ff, params.dropout, rng, training));
  }
  Tensor attended = multi_head_attention(x, params.attention, params.dropout, rng, training);
  Tensor h = layer_norm(add(x, dropout(attended, params.dropout, rng, training)),
                        params.ln1_gamma, params.ln1_beta);
  Tensor ff = feed_forward(h, params);
  return layer_norm(add(h, dropout(ff, params.dropout, rng, training)), params.ln2_gamma,
                    params.ln2_beta);
}

}  // namespace nilmformer
