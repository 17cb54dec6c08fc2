#include "nilmformer/tensor.hpp"

#include <algorithm>
#include <atomic>
#include <unordered_set>

#include "nilmformer/errors.hpp"

namespace nilmformer {

namespace {
std::atomic<std::uint64_t> g_serial{0};
thread_local bool g_grad_enabled = true;

std::shared_ptr<TensorNode> new_node(Matrix value, bool requires_grad) {
  auto n = std::make_shared<TensorNode>();
  n->value = std::move(value);
  n->requires_grad = requires_grad;
  n->serial = ++g_serial;
  return n;
}
}  // namespace

Tensor::Tensor(Matrix value, bool requires_grad)
    : node_(new_node(std::move(value), requires_grad)) {}

Tensor Tensor::zeros(Index rows, Index cols, bool requires_grad) {
  return Tensor(Matrix::Zero(rows, cols), requires_grad);
}

Tensor Tensor::scalar(Scalar v) {
  Matrix m(1, 1);
  m(0, 0) = v;
  return Tensor(std::move(m));
}

Matrix& Tensor::grad() const {
  Matrix& g = node_->grad;
  if (g.size() == 0 && node_->value.size() != 0) {
    g = Matrix::Zero(node_->value.rows(), node_->value.cols());
  }
  return g;
}

void Tensor::zero_grad() const {
  if (node_->grad.size() != 0) node_->grad.setZero();
}

Scalar Tensor::item() const {
  if (size() != 1) {
    throw ShapeError("item(): tensor is not scalar, shape [" + std::to_string(rows()) +
                     " x " + std::to_string(cols()) + "]");
  }
  return node_->value(0, 0);
}

bool grad_enabled() { return g_grad_enabled; }

NoGradGuard::NoGradGuard() : prev_(g_grad_enabled) { g_grad_enabled = false; }
NoGradGuard::~NoGradGuard() { g_grad_enabled = prev_; }

void GradSink::add(const std::shared_ptr<TensorNode>& node, const Matrix& contribution) {
  if (!node || !node->requires_grad) return;
  auto [it, inserted] = messages_.try_emplace(node.get());
  if (inserted) {
    it->second = contribution;
  } else {
    it->second += contribution;
  }
}

Tensor make_op(const char* op, Matrix value, std::vector<Tensor> inputs, BackwardFn apply) {
  bool needs_grad = false;
  if (g_grad_enabled) {
    for (const Tensor& t : inputs) {
      if (t.requires_grad()) {
        needs_grad = true;
        break;
      }
    }
  }
  Tensor out(std::move(value), needs_grad);
  if (needs_grad) {
    auto rec = std::make_unique<GradRecord>();
    rec->op = op;
    rec->inputs.reserve(inputs.size());
    for (const Tensor& t : inputs) rec->inputs.push_back(t.node());
    rec->apply = std::move(apply);
    out.node()->record = std::move(rec);
  }
  return out;
}

void backward(const Tensor& root) {
  if (!root.defined() || root.size() != 1) {
    throw ShapeError("backward(): root must be a 1x1 scalar tensor");
  }

  // Collect reachable nodes iteratively; creation order is a topological
  // order, so descending serial replay visits consumers before producers.
  std::vector<TensorNode*> order;
  std::unordered_set<TensorNode*> visited;
  std::vector<TensorNode*> stack{root.node().get()};
  while (!stack.empty()) {
    TensorNode* n = stack.back();
    stack.pop_back();
    if (!visited.insert(n).second) continue;
    order.push_back(n);
    if (n->record) {
      for (const auto& in : n->record->inputs) stack.push_back(in.get());
    }
  }
  std::sort(order.begin(), order.end(),
            [](const TensorNode* a, const TensorNode* b) { return a->serial > b->serial; });

  // A node's message is complete once every consumer (higher serial) has
  // applied, so it can be flushed and handed to the node's own record. The
  // message is moved out first: apply() may grow the map and rehash it.
  GradSink sink;
  sink.add(root.node(), Matrix::Ones(1, 1));
  for (TensorNode* n : order) {
    auto it = sink.messages_.find(n);
    if (it == sink.messages_.end()) continue;
    Matrix msg = std::move(it->second);
    sink.messages_.erase(it);
    if (n->grad.size() == 0) {
      n->grad = msg;
    } else {
      n->grad += msg;
    }
    if (n->record) n->record->apply(msg, n->record->inputs, sink);
  }
}

}  // namespace nilmformer
