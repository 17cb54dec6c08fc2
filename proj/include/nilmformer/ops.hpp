#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "nilmformer/rng.hpp"
#include "nilmformer/tensor.hpp"

namespace nilmformer {

// Every op defines a forward map and an exact backward map; the gradcheck
// suite certifies each against central finite differences.

Tensor matmul(const Tensor& a, const Tensor& b);
Tensor transpose(const Tensor& x);

Tensor add(const Tensor& a, const Tensor& b);
Tensor sub(const Tensor& a, const Tensor& b);
Tensor mul(const Tensor& a, const Tensor& b);  // elementwise
Tensor scale(const Tensor& x, Scalar c);
Tensor add_scalar(const Tensor& x, Scalar c);

// Broadcast a [1 x n] row over every row of x.
Tensor add_rowvec(const Tensor& x, const Tensor& row);
Tensor mul_rowvec(const Tensor& x, const Tensor& row);

Tensor sum(const Tensor& x);   // -> 1x1
Tensor mean(const Tensor& x);  // -> 1x1

Tensor log(const Tensor& x);       // caller guarantees positive input
Tensor softplus(const Tensor& x);  // log(1 + e^x), overflow-safe
Tensor abs(const Tensor& x);       // subgradient 0 at 0
Tensor clamp01(const Tensor& x);   // subgradient passes only strictly inside (0,1)

// Row-wise softmax with max subtraction; every output row sums to 1.
Tensor softmax_rows(const Tensor& x);

// Standardizes each row over the last axis, then applies the affine
// scale/shift. gamma and beta are [1 x d].
Tensor layer_norm(const Tensor& x, const Tensor& gamma, const Tensor& beta,
                  Scalar eps = 1e-5);

enum class Padding { kNone, kSame };

// Cross-correlation along the time axis. x is [L x c_in]; w is the flattened
// kernel [(k * c_in) x c_out] with row index j * c_in + ci; bias is
// [1 x c_out] or an undefined tensor for none. kSame requires stride 1 and
// preserves L.
Tensor conv1d(const Tensor& x, const Tensor& w, const Tensor& bias, int kernel,
              int stride = 1, Padding padding = Padding::kNone);

// Max over non-overlapping windows of width alpha per channel; gradient is
// routed to the first occurrence of the maximum.
Tensor pool1d(const Tensor& x, int alpha);

// Transposed convolution: the exact adjoint of conv1d(., w, kernel, stride,
// kNone). x is [L x c]; w uses conv1d layout [(k * c_up) x c] where c_up is
// the output channel count; the result is [(L-1)*stride + k x c_up].
Tensor deconv1d(const Tensor& x, const Tensor& w, int kernel, int stride);

// Inverted dropout: zeroes elements with probability p and scales survivors
// by 1/(1-p) in training mode; identity in eval mode.
Tensor dropout(const Tensor& x, Scalar p, RngStream& rng, bool training);

enum class Activation { kTanh, kGelu, kRelu };
Activation parse_activation(const std::string& name);
const char* activation_name(Activation a);
Tensor activation(const Tensor& x, Activation kind);

Tensor slice_rows(const Tensor& x, Index row0, Index n);
Tensor slice_cols(const Tensor& x, Index col0, Index n);
Tensor concat_cols(std::span<const Tensor> parts);
Tensor gather_rows(const Tensor& x, const std::vector<Index>& rows);

// Rows of x flagged in `masked` are replaced by the [1 x d] token row.
Tensor replace_masked_rows(const Tensor& x, const std::vector<std::uint8_t>& masked,
                           const Tensor& token);

inline Tensor operator+(const Tensor& a, const Tensor& b) { return add(a, b); }
inline Tensor operator-(const Tensor& a, const Tensor& b) { return sub(a, b); }
inline Tensor operator*(Scalar c, const Tensor& x) { return scale(x, c); }

}  // namespace nilmformer
