#pragma once

#include <cstdint>
#include <functional>
#include <memory>
#include <unordered_map>
#include <vector>

#include "nilmformer/types.hpp"

namespace nilmformer {

struct TensorNode;
class Tensor;

// Collects gradient messages during one backward replay. Messages are local
// to the replay (they never read previously accumulated grad buffers), so
// replaying the same records twice adds the same contributions twice.
class GradSink {
 public:
  void add(const std::shared_ptr<TensorNode>& node, const Matrix& contribution);

 private:
  friend void backward(const Tensor& root);
  std::unordered_map<TensorNode*, Matrix> messages_;
};

using BackwardFn = std::function<void(
    const Matrix& out_grad, const std::vector<std::shared_ptr<TensorNode>>& inputs,
    GradSink& sink)>;

// One reverse-mode step: the op identifier, the input tensors it consumed and
// a closure holding whatever forward intermediates the backward map needs.
// Records replay in reverse creation order; contributions to a tensor that is
// consumed twice sum.
struct GradRecord {
  const char* op = nullptr;
  std::vector<std::shared_ptr<TensorNode>> inputs;
  BackwardFn apply;
};

struct TensorNode {
  Matrix value;
  Matrix grad;  // empty until first accumulation, then same shape as value
  bool requires_grad = false;
  std::uint64_t serial = 0;
  std::unique_ptr<GradRecord> record;  // null for leaves
};

// Value-semantic handle to a node in the computation graph. Copies share the
// node; node values are immutable once an op has written them, except for the
// optimizer's in-place parameter updates between forward passes.
class Tensor {
 public:
  Tensor() = default;
  explicit Tensor(Matrix value, bool requires_grad = false);

  static Tensor zeros(Index rows, Index cols, bool requires_grad = false);
  static Tensor scalar(Scalar v);

  bool defined() const { return node_ != nullptr; }
  const Matrix& value() const { return node_->value; }
  Matrix& mutable_value() const { return node_->value; }

  // Allocates a zero buffer on first access.
  Matrix& grad() const;
  void zero_grad() const;

  bool requires_grad() const { return node_ && node_->requires_grad; }
  Index rows() const { return node_->value.rows(); }
  Index cols() const { return node_->value.cols(); }
  Index size() const { return node_->value.size(); }
  Scalar item() const;

  const std::shared_ptr<TensorNode>& node() const { return node_; }

 private:
  std::shared_ptr<TensorNode> node_;
};

// Thread-local recording switch; eval paths run with recording off.
bool grad_enabled();

class NoGradGuard {
 public:
  NoGradGuard();
  ~NoGradGuard();
  NoGradGuard(const NoGradGuard&) = delete;
  NoGradGuard& operator=(const NoGradGuard&) = delete;

 private:
  bool prev_;
};

// Builds an op output node. A GradRecord is attached only when recording is
// enabled and at least one input requires grad.
Tensor make_op(const char* op, Matrix value, std::vector<Tensor> inputs, BackwardFn apply);

// Seeds d(root)/d(root) = 1 and replays every reachable record in reverse
// creation order, then flushes accumulated messages into node grad buffers.
// root must be a 1x1 tensor.
void backward(const Tensor& root);

}  // namespace nilmformer
