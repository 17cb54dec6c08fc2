#include "nilmformer/ops.hpp"

#include <cmath>

#include "nilmformer/errors.hpp"

namespace nilmformer {

namespace {

std::string shape_of(const Tensor& t) {
  return "[" + std::to_string(t.rows()) + " x " + std::to_string(t.cols()) + "]";
}

void require_same_shape(const char* op, const Tensor& a, const Tensor& b) {
  if (a.rows() != b.rows() || a.cols() != b.cols()) {
    throw ShapeError(std::string(op) + ": shape mismatch " + shape_of(a) + " vs " +
                     shape_of(b));
  }
}

constexpr Scalar kInvSqrt2 = 0.7071067811865475244;
constexpr Scalar kInvSqrt2Pi = 0.3989422804014326779;

Matrix im2col(const Matrix& xpad, int kernel, int stride, Index c_in, Index l_out) {
  Matrix cols(l_out, kernel * c_in);
  for (Index t = 0; t < l_out; ++t) {
    for (int j = 0; j < kernel; ++j) {
      cols.block(t, j * c_in, 1, c_in) = xpad.block(t * stride + j, 0, 1, c_in);
    }
  }
  return cols;
}

}  // namespace

Tensor matmul(const Tensor& a, const Tensor& b) {
  if (a.cols() != b.rows()) {
    throw ShapeError("matmul: inner dimensions disagree: " + shape_of(a) + " vs " +
                     shape_of(b));
  }
  Matrix out = a.value() * b.value();
  return make_op("matmul", std::move(out), {a, b},
                 [](const Matrix& g, const auto& in, GradSink& sink) {
                   sink.add(in[0], g * in[1]->value.transpose());
                   sink.add(in[1], in[0]->value.transpose() * g);
                 });
}

Tensor transpose(const Tensor& x) {
  return make_op("transpose", x.value().transpose(), {x},
                 [](const Matrix& g, const auto& in, GradSink& sink) {
                   sink.add(in[0], g.transpose());
                 });
}

Tensor add(const Tensor& a, const Tensor& b) {
  require_same_shape("add", a, b);
  return make_op("add", a.value() + b.value(), {a, b},
                 [](const Matrix& g, const auto& in, GradSink& sink) {
                   sink.add(in[0], g);
                   sink.add(in[1], g);
                 });
}

Tensor sub(const Tensor& a, const Tensor& b) {
  require_same_shape("sub", a, b);
  return make_op("sub", a.value() - b.value(), {a, b},
                 [](const Matrix& g, const auto& in, GradSink& sink) {
                   sink.add(in[0], g);
                   sink.add(in[1], -g);
                 });
}

Tensor mul(const Tensor& a, const Tensor& b) {
  require_same_shape("mul", a, b);
  return make_op("mul", a.value().cwiseProduct(b.value()), {a, b},
                 [](const Matrix& g, const auto& in, GradSink& sink) {
                   sink.add(in[0], g.cwiseProduct(in[1]->value));
                   sink.add(in[1], g.cwiseProduct(in[0]->value));
                 });
}

Tensor scale(const Tensor& x, Scalar c) {
  return make_op("scale", x.value() * c, {x},
                 [c](const Matrix& g, const auto& in, GradSink& sink) {
                   sink.add(in[0], g * c);
                 });
}

Tensor add_scalar(const Tensor& x, Scalar c) {
  return make_op("add_scalar", x.value().array() + c, {x},
                 [](const Matrix& g, const auto& in, GradSink& sink) {
                   sink.add(in[0], g);
                 });
}

Tensor add_rowvec(const Tensor& x, const Tensor& row) {
  if (row.rows() != 1 || row.cols() != x.cols()) {
    throw ShapeError("add_rowvec: row " + shape_of(row) + " does not broadcast over " +
                     shape_of(x));
  }
  Matrix out = x.value();
  out.rowwise() += row.value().row(0);
  return make_op("add_rowvec", std::move(out), {x, row},
                 [](const Matrix& g, const auto& in, GradSink& sink) {
                   sink.add(in[0], g);
                   sink.add(in[1], g.colwise().sum());
                 });
}

Tensor mul_rowvec(const Tensor& x, const Tensor& row) {
  if (row.rows() != 1 || row.cols() != x.cols()) {
    throw ShapeError("mul_rowvec: row " + shape_of(row) + " does not broadcast over " +
                     shape_of(x));
  }
  Matrix out = x.value().array().rowwise() * row.value().row(0).array();
  return make_op("mul_rowvec", std::move(out), {x, row},
                 [](const Matrix& g, const auto& in, GradSink& sink) {
                   sink.add(in[0], g.array().rowwise() * in[1]->value.row(0).array());
                   sink.add(in[1], g.cwiseProduct(in[0]->value).colwise().sum());
                 });
}

Tensor sum(const Tensor& x) {
  Matrix out(1, 1);
  out(0, 0) = x.value().sum();
  return make_op("sum", std::move(out), {x},
                 [](const Matrix& g, const auto& in, GradSink& sink) {
                   sink.add(in[0], Matrix::Constant(in[0]->value.rows(),
                                                    in[0]->value.cols(), g(0, 0)));
                 });
}

Tensor mean(const Tensor& x) {
  Matrix out(1, 1);
  out(0, 0) = x.value().mean();
  return make_op("mean", std::move(out), {x},
                 [](const Matrix& g, const auto& in, GradSink& sink) {
                   Scalar inv = 1.0 / static_cast<Scalar>(in[0]->value.size());
                   sink.add(in[0], Matrix::Constant(in[0]->value.rows(),
                                                    in[0]->value.cols(), g(0, 0) * inv));
                 });
}

Tensor log(const Tensor& x) {
  return make_op("log", x.value().array().log(), {x},
                 [](const Matrix& g, const auto& in, GradSink& sink) {
                   sink.add(in[0], (g.array() / in[0]->value.array()).matrix());
                 });
}

Tensor softplus(const Tensor& x) {
  Matrix out = x.value().unaryExpr([](Scalar v) {
    return v > 0 ? v + std::log1p(std::exp(-v)) : std::log1p(std::exp(v));
  });
  return make_op("softplus", std::move(out), {x},
                 [](const Matrix& g, const auto& in, GradSink& sink) {
                   Matrix sig = in[0]->value.unaryExpr(
                       [](Scalar v) { return 1.0 / (1.0 + std::exp(-v)); });
                   sink.add(in[0], g.cwiseProduct(sig));
                 });
}

Tensor abs(const Tensor& x) {
  return make_op("abs", x.value().cwiseAbs(), {x},
                 [](const Matrix& g, const auto& in, GradSink& sink) {
                   Matrix sign = in[0]->value.unaryExpr(
                       [](Scalar v) { return v > 0 ? 1.0 : (v < 0 ? -1.0 : 0.0); });
                   sink.add(in[0], g.cwiseProduct(sign));
                 });
}

Tensor clamp01(const Tensor& x) {
  Matrix out = x.value().cwiseMax(0.0).cwiseMin(1.0);
  return make_op("clamp01", std::move(out), {x},
                 [](const Matrix& g, const auto& in, GradSink& sink) {
                   Matrix inside = in[0]->value.unaryExpr(
                       [](Scalar v) { return (v > 0.0 && v < 1.0) ? 1.0 : 0.0; });
                   sink.add(in[0], g.cwiseProduct(inside));
                 });
}

Tensor softmax_rows(const Tensor& x) {
  Matrix y = x.value();
  for (Index i = 0; i < y.rows(); ++i) {
    Scalar mx = y.row(i).maxCoeff();
    y.row(i) = (y.row(i).array() - mx).exp();
    y.row(i) /= y.row(i).sum();
  }
  return make_op("softmax_rows", Matrix(y), {x},
                 [y](const Matrix& g, const auto& in, GradSink& sink) {
                   Matrix dx(y.rows(), y.cols());
                   for (Index i = 0; i < y.rows(); ++i) {
                     Scalar dot = g.row(i).dot(y.row(i));
                     dx.row(i) = y.row(i).array() * (g.row(i).array() - dot);
                   }
                   sink.add(in[0], dx);
                 });
}

Tensor layer_norm(const Tensor& x, const Tensor& gamma, const Tensor& beta, Scalar eps) {
  const Index d = x.cols();
  if (d < 1) throw ShapeError("layer_norm: empty last axis");
  if (eps <= 0) throw ConfigError("layer_norm: eps must be positive");
  if (gamma.rows() != 1 || gamma.cols() != d || beta.rows() != 1 || beta.cols() != d) {
    throw ShapeError("layer_norm: gamma " + shape_of(gamma) + " / beta " + shape_of(beta) +
                     " must be [1 x " + std::to_string(d) + "]");
  }
  const Matrix& v = x.value();
  Matrix xhat(v.rows(), d);
  VectorX inv_std(v.rows());
  for (Index i = 0; i < v.rows(); ++i) {
    Scalar mu = v.row(i).mean();
    Scalar var = (v.row(i).array() - mu).square().mean();
    inv_std(i) = 1.0 / std::sqrt(var + eps);
    xhat.row(i) = (v.row(i).array() - mu) * inv_std(i);
  }
  Matrix out = xhat.array().rowwise() * gamma.value().row(0).array();
  out.rowwise() += beta.value().row(0);
  return make_op(
      "layer_norm", std::move(out), {x, gamma, beta},
      [xhat, inv_std](const Matrix& g, const auto& in, GradSink& sink) {
        sink.add(in[1], g.cwiseProduct(xhat).colwise().sum());
        sink.add(in[2], g.colwise().sum());
        Matrix dxhat = g.array().rowwise() * in[1]->value.row(0).array();
        Matrix dx(xhat.rows(), xhat.cols());
        for (Index i = 0; i < xhat.rows(); ++i) {
          Scalar m1 = dxhat.row(i).mean();
          Scalar m2 = dxhat.row(i).cwiseProduct(xhat.row(i)).mean();
          dx.row(i) =
              inv_std(i) * (dxhat.row(i).array() - m1 - xhat.row(i).array() * m2);
        }
        sink.add(in[0], dx);
      });
}

Tensor conv1d(const Tensor& x, const Tensor& w, const Tensor& bias, int kernel,
              int stride, Padding padding) {
  const Index L = x.rows();
  const Index c_in = x.cols();
  if (kernel < 1 || stride < 1) throw ConfigError("conv1d: kernel and stride must be >= 1");
  if (w.rows() != static_cast<Index>(kernel) * c_in) {
    throw ShapeError("conv1d: weight " + shape_of(w) + " incompatible with kernel " +
                     std::to_string(kernel) + " and " + std::to_string(c_in) +
                     " input channels");
  }
  const Index c_out = w.cols();
  if (bias.defined() && (bias.rows() != 1 || bias.cols() != c_out)) {
    throw ShapeError("conv1d: bias " + shape_of(bias) + " must be [1 x " +
                     std::to_string(c_out) + "]");
  }
  Index pad_left = 0, pad_right = 0;
  if (padding == Padding::kSame) {
    if (stride != 1) throw ConfigError("conv1d: same padding requires stride 1");
    pad_left = (kernel - 1) / 2;
    pad_right = kernel - 1 - pad_left;
  }
  const Index lp = L + pad_left + pad_right;
  if (lp < kernel) {
    throw ShapeError("conv1d: kernel " + std::to_string(kernel) +
                     " longer than padded input of length " + std::to_string(lp));
  }
  const Index l_out = (lp - kernel) / stride + 1;

  Matrix xpad = Matrix::Zero(lp, c_in);
  xpad.block(pad_left, 0, L, c_in) = x.value();
  Matrix cols = im2col(xpad, kernel, stride, c_in, l_out);
  Matrix out = cols * w.value();
  if (bias.defined()) out.rowwise() += bias.value().row(0);

  std::vector<Tensor> inputs{x, w};
  if (bias.defined()) inputs.push_back(bias);
  return make_op(
      "conv1d", std::move(out), std::move(inputs),
      [kernel, stride, pad_left, lp, L, c_in, l_out](const Matrix& g, const auto& in,
                                                     GradSink& sink) {
        // The im2col buffer is recomputed from the saved input.
        Matrix xp = Matrix::Zero(lp, c_in);
        xp.block(pad_left, 0, L, c_in) = in[0]->value;
        Matrix cols = im2col(xp, kernel, stride, c_in, l_out);
        sink.add(in[1], cols.transpose() * g);
        if (in.size() > 2) sink.add(in[2], g.colwise().sum());
        Matrix dcols = g * in[1]->value.transpose();
        Matrix dxp = Matrix::Zero(lp, c_in);
        for (Index t = 0; t < l_out; ++t) {
          for (int j = 0; j < kernel; ++j) {
            dxp.block(t * stride + j, 0, 1, c_in) += dcols.block(t, j * c_in, 1, c_in);
          }
        }
        sink.add(in[0], dxp.block(pad_left, 0, L, c_in));
      });
}

Tensor pool1d(const Tensor& x, int alpha) {
  const Index L = x.rows();
  const Index c = x.cols();
  if (alpha < 1) throw ConfigError("pool1d: alpha must be >= 1");
  if (L % alpha != 0) {
    throw ShapeError("pool1d: alpha " + std::to_string(alpha) +
                     " does not divide sequence length " + std::to_string(L));
  }
  const Index l_out = L / alpha;
  Matrix out(l_out, c);
  // Ties break to the lowest index so the gradient route is deterministic.
  std::vector<Index> argmax(static_cast<std::size_t>(l_out * c));
  for (Index t = 0; t < l_out; ++t) {
    for (Index ch = 0; ch < c; ++ch) {
      Index best = t * alpha;
      Scalar best_v = x.value()(best, ch);
      for (Index j = 1; j < alpha; ++j) {
        Scalar v = x.value()(t * alpha + j, ch);
        if (v > best_v) {
          best_v = v;
          best = t * alpha + j;
        }
      }
      out(t, ch) = best_v;
      argmax[static_cast<std::size_t>(t * c + ch)] = best;
    }
  }
  return make_op("pool1d", std::move(out), {x},
                 [argmax, l_out, c](const Matrix& g, const auto& in, GradSink& sink) {
                   Matrix dx = Matrix::Zero(in[0]->value.rows(), in[0]->value.cols());
                   for (Index t = 0; t < l_out; ++t) {
                     for (Index ch = 0; ch < c; ++ch) {
                       dx(argmax[static_cast<std::size_t>(t * c + ch)], ch) += g(t, ch);
                     }
                   }
                   sink.add(in[0], dx);
                 });
}

Tensor deconv1d(const Tensor& x, const Tensor& w, int kernel, int stride) {
  const Index L = x.rows();
  const Index c = x.cols();
  if (kernel < 1 || stride < 1) {
    throw ConfigError("deconv1d: kernel and stride must be >= 1");
  }
  if (w.cols() != c || w.rows() % kernel != 0) {
    throw ShapeError("deconv1d: weight " + shape_of(w) + " incompatible with kernel " +
                     std::to_string(kernel) + " and input " + shape_of(x));
  }
  const Index c_up = w.rows() / kernel;
  const Index l_out = (L - 1) * stride + kernel;
  // out[t*stride + j, :] += x[t, :] * W_j^T keeps deconv1d the exact adjoint
  // of conv1d with the same weight matrix.
  Matrix out = Matrix::Zero(l_out, c_up);
  for (int j = 0; j < kernel; ++j) {
    Matrix contrib = x.value() * w.value().block(j * c_up, 0, c_up, c).transpose();
    for (Index t = 0; t < L; ++t) {
      out.row(t * stride + j) += contrib.row(t);
    }
  }
  return make_op(
      "deconv1d", std::move(out), {x, w},
      [kernel, stride, c_up, c, L](const Matrix& g, const auto& in, GradSink& sink) {
        Matrix dx = Matrix::Zero(L, c);
        Matrix dw = Matrix::Zero(kernel * c_up, c);
        Matrix gj(L, c_up);
        for (int j = 0; j < kernel; ++j) {
          for (Index t = 0; t < L; ++t) gj.row(t) = g.row(t * stride + j);
          dx += gj * in[1]->value.block(j * c_up, 0, c_up, c);
          dw.block(j * c_up, 0, c_up, c) += gj.transpose() * in[0]->value;
        }
        sink.add(in[0], dx);
        sink.add(in[1], dw);
      });
}

Tensor dropout(const Tensor& x, Scalar p, RngStream& rng, bool training) {
  if (p < 0 || p >= 1) {
    throw ConfigError("dropout: probability must lie in [0, 1), got " + std::to_string(p));
  }
  if (!training || p == 0.0) return x;
  const Scalar keep_scale = 1.0 / (1.0 - p);
  Matrix mask(x.rows(), x.cols());
  for (Index i = 0; i < mask.rows(); ++i) {
    for (Index j = 0; j < mask.cols(); ++j) {
      mask(i, j) = rng.uniform() < p ? 0.0 : keep_scale;
    }
  }
  return make_op("dropout", x.value().cwiseProduct(mask), {x},
                 [mask](const Matrix& g, const auto& in, GradSink& sink) {
                   sink.add(in[0], g.cwiseProduct(mask));
                 });
}

Activation parse_activation(const std::string& name) {
  if (name == "tanh") return Activation::kTanh;
  if (name == "gelu") return Activation::kGelu;
  if (name == "relu") return Activation::kRelu;
  throw ConfigError("unknown activation kind '" + name + "' (expected tanh|gelu|relu)");
}

const char* activation_name(Activation a) {
  switch (a) {
    case Activation::kTanh: return "tanh";
    case Activation::kGelu: return "gelu";
    case Activation::kRelu: return "relu";
  }
  return "?";
}

Tensor activation(const Tensor& x, Activation kind) {
  switch (kind) {
    case Activation::kTanh: {
      Matrix y = x.value().array().tanh();
      return make_op("tanh", Matrix(y), {x},
                     [y](const Matrix& g, const auto& in, GradSink& sink) {
                       sink.add(in[0], g.cwiseProduct(
                                           (1.0 - y.array().square()).matrix()));
                     });
    }
    case Activation::kRelu:
      return make_op("relu", x.value().cwiseMax(0.0), {x},
                     [](const Matrix& g, const auto& in, GradSink& sink) {
                       Matrix on = in[0]->value.unaryExpr(
                           [](Scalar v) { return v > 0 ? 1.0 : 0.0; });
                       sink.add(in[0], g.cwiseProduct(on));
                     });
    case Activation::kGelu: {
      // Exact (erf) formulation.
      Matrix y = x.value().unaryExpr(
          [](Scalar v) { return 0.5 * v * (1.0 + std::erf(v * kInvSqrt2)); });
      return make_op("gelu", std::move(y), {x},
                     [](const Matrix& g, const auto& in, GradSink& sink) {
                       Matrix d = in[0]->value.unaryExpr([](Scalar v) {
                         Scalar cdf = 0.5 * (1.0 + std::erf(v * kInvSqrt2));
                         Scalar pdf = kInvSqrt2Pi * std::exp(-0.5 * v * v);
                         return cdf + v * pdf;
                       });
                       sink.add(in[0], g.cwiseProduct(d));
                     });
    }
  }
  throw ConfigError("activation: unknown kind");
}

Tensor slice_rows(const Tensor& x, Index row0, Index n) {
  if (row0 < 0 || n < 0 || row0 + n > x.rows()) {
    throw ShapeError("slice_rows: range [" + std::to_string(row0) + ", " +
                     std::to_string(row0 + n) + ") out of bounds for " + shape_of(x));
  }
  Matrix out = x.value().block(row0, 0, n, x.cols());
  return make_op("slice_rows", std::move(out), {x},
                 [row0, n](const Matrix& g, const auto& in, GradSink& sink) {
                   Matrix dx = Matrix::Zero(in[0]->value.rows(), in[0]->value.cols());
                   dx.block(row0, 0, n, dx.cols()) = g;
                   sink.add(in[0], dx);
                 });
}

Tensor slice_cols(const Tensor& x, Index col0, Index n) {
  if (col0 < 0 || n < 0 || col0 + n > x.cols()) {
    throw ShapeError("slice_cols: range [" + std::to_string(col0) + ", " +
                     std::to_string(col0 + n) + ") out of bounds for " + shape_of(x));
  }
  Matrix out = x.value().block(0, col0, x.rows(), n);
  return make_op("slice_cols", std::move(out), {x},
                 [col0, n](const Matrix& g, const auto& in, GradSink& sink) {
                   Matrix dx = Matrix::Zero(in[0]->value.rows(), in[0]->value.cols());
                   dx.block(0, col0, dx.rows(), n) = g;
                   sink.add(in[0], dx);
                 });
}

Tensor concat_cols(std::span<const Tensor> parts) {
  if (parts.empty()) throw ShapeError("concat_cols: no inputs");
  Index rows = parts[0].rows();
  Index total = 0;
  for (const Tensor& t : parts) {
    if (t.rows() != rows) {
      throw ShapeError("concat_cols: row count mismatch " + shape_of(parts[0]) + " vs " +
                       shape_of(t));
    }
    total += t.cols();
  }
  Matrix out(rows, total);
  std::vector<Index> widths;
  Index at = 0;
  for (const Tensor& t : parts) {
    out.block(0, at, rows, t.cols()) = t.value();
    widths.push_back(t.cols());
    at += t.cols();
  }
  return make_op("concat_cols", std::move(out),
                 std::vector<Tensor>(parts.begin(), parts.end()),
                 [widths](const Matrix& g, const auto& in, GradSink& sink) {
                   Index at = 0;
                   for (std::size_t i = 0; i < in.size(); ++i) {
                     sink.add(in[i], g.block(0, at, g.rows(), widths[i]));
                     at += widths[i];
                   }
                 });
}

Tensor gather_rows(const Tensor& x, const std::vector<Index>& rows) {
  for (Index r : rows) {
    if (r < 0 || r >= x.rows()) {
      throw ShapeError("gather_rows: index " + std::to_string(r) + " out of bounds for " +
                       shape_of(x));
    }
  }
  Matrix out(static_cast<Index>(rows.size()), x.cols());
  for (std::size_t i = 0; i < rows.size(); ++i) out.row(static_cast<Index>(i)) = x.value().row(rows[i]);
  return make_op("gather_rows", std::move(out), {x},
                 [rows](const Matrix& g, const auto& in, GradSink& sink) {
                   Matrix dx = Matrix::Zero(in[0]->value.rows(), in[0]->value.cols());
                   for (std::size_t i = 0; i < rows.size(); ++i) {
                     dx.row(rows[i]) += g.row(static_cast<Index>(i));
                   }
                   sink.add(in[0], dx);
                 });
}

Tensor replace_masked_rows(const Tensor& x, const std::vector<std::uint8_t>& masked,
                           const Tensor& token) {
  if (static_cast<Index>(masked.size()) != x.rows()) {
    throw ShapeError("replace_masked_rows: mask length " + std::to_string(masked.size()) +
                     " vs " + shape_of(x));
  }
  if (token.rows() != 1 || token.cols() != x.cols()) {
    throw ShapeError("replace_masked_rows: token " + shape_of(token) + " must be [1 x " +
                     std::to_string(x.cols()) + "]");
  }
  Matrix out = x.value();
  for (Index i = 0; i < out.rows(); ++i) {
    if (masked[static_cast<std::size_t>(i)]) out.row(i) = token.value().row(0);
  }
  return make_op("replace_masked_rows", std::move(out), {x, token},
                 [masked](const Matrix& g, const auto& in, GradSink& sink) {
                   Matrix dx = g;
                   Matrix dtok = Matrix::Zero(1, g.cols());
                   for (Index i = 0; i < g.rows(); ++i) {
                     if (masked[static_cast<std::size_t>(i)]) {
                       dtok.row(0) += g.row(i);
                       dx.row(i).setZero();
                     }
                   }
                   sink.add(in[0], dx);
                   sink.add(in[1], dtok);
                 });
}

}  // namespace nilmformer
