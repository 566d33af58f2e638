#include "mecc/autograd.hpp"

#include "mecc/kernels.hpp"

namespace mecc {
namespace {
thread_local Tape* g_active_tape = nullptr;
}

void Node::accumulate_grad(const Tensor& g) {
  if (!requires_grad) return;
  if (g.shape() != value.shape() || g.dtype() != value.dtype()) {
    throw std::logic_error(std::string("gradient shape ") + shape_str(g.shape()) +
                           " does not match value shape " + shape_str(value.shape()) +
                           " in op " + op);
  }
  if (!has_grad) {
    grad = g;
    has_grad = true;
    return;
  }
  dispatch(grad.dtype(), [&]<class T>() {
    auto dst = grad.data<T>();
    auto src = g.data<T>();
    kernels::add<T>(dst.data(), src.data(), dst.data(), dst.size());
  });
}

void Node::zero_grad() {
  has_grad = false;
  grad = Tensor();
}

Var Var::constant(Tensor value) {
  auto n = std::make_shared<Node>();
  n->value = std::move(value);
  n->op = "constant";
  return Var(std::move(n));
}

Var Var::leaf(Tensor value, bool requires_grad) {
  auto n = std::make_shared<Node>();
  n->value = std::move(value);
  n->requires_grad = requires_grad;
  return Var(std::move(n));
}

Tensor Var::grad() const {
  if (node_->has_grad) return node_->grad;
  return Tensor::zeros(node_->value.shape(), node_->value.dtype());
}

void Tape::backward(const Var& loss) {
  if (loss.value().numel() != 1) {
    throw std::invalid_argument("backward: loss must be scalar, got shape " +
                                shape_str(loss.shape()));
  }
  if (nodes_.empty()) throw std::logic_error("backward: tape is empty");
  auto root = loss.node();
  if (!root->requires_grad) return;
  root->accumulate_grad(Tensor::full(root->value.shape(), 1.0, root->value.dtype()));
  for (auto it = nodes_.rbegin(); it != nodes_.rend(); ++it) {
    Node& n = **it;
    if (!n.has_grad || !n.backward) continue;
    n.backward(n);
  }
}

TapeScope::TapeScope(Tape& tape) : previous_(g_active_tape) { g_active_tape = &tape; }
TapeScope::~TapeScope() { g_active_tape = previous_; }

NoGradScope::NoGradScope() : previous_(g_active_tape) { g_active_tape = nullptr; }
NoGradScope::~NoGradScope() { g_active_tape = previous_; }

Tape* active_tape() { return g_active_tape; }

Var make_result(Tensor value, const char* op, std::vector<Var> inputs,
                std::function<void(Node&)> backward) {
  auto n = std::make_shared<Node>();
  n->value = std::move(value);
  n->op = op;
  Tape* tape = g_active_tape;
  bool needs = false;
  if (tape) {
    for (const auto& in : inputs) needs = needs || in.requires_grad();
  }
  if (needs) {
    n->requires_grad = true;
    n->inputs.reserve(inputs.size());
    for (auto& in : inputs) n->inputs.push_back(in.node());
    n->backward = std::move(backward);
    tape->record(n);
  }
  return Var(std::move(n));
}

}  // namespace mecc
