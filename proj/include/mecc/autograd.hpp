#pragma once
// Tape-based reverse-mode differentiation.
//
// Ops executed while a Tape is active (see TapeScope) and that have at least
// one input requiring a gradient are appended to the tape together with a
// closure that propagates the output gradient to the inputs. Without an active
// tape every op produces a constant, so inference keeps no graph.

#include <functional>
#include <memory>
#include <string>
#include <vector>

#include "mecc/tensor.hpp"

namespace mecc {

struct Node {
  Tensor value;
  Tensor grad;  // empty shape {0} until first accumulation
  bool has_grad = false;
  bool requires_grad = false;
  const char* op = "leaf";
  std::vector<std::shared_ptr<Node>> inputs;
  // Reads this->grad and accumulates into inputs[i] via accumulate_grad().
  std::function<void(Node&)> backward;

  void accumulate_grad(const Tensor& g);
  void zero_grad();
};

// Handle to a value that may participate in differentiation. Cheap to copy.
class Var {
 public:
  Var() = default;
  explicit Var(std::shared_ptr<Node> node) : node_(std::move(node)) {}

  static Var constant(Tensor value);
  // A leaf whose gradient is tracked (an input to be differentiated).
  static Var leaf(Tensor value, bool requires_grad = true);

  const Tensor& value() const { return node_->value; }
  const Shape& shape() const { return node_->value.shape(); }
  DType dtype() const { return node_->value.dtype(); }
  std::size_t dim(std::size_t axis) const { return node_->value.dim(axis); }
  bool requires_grad() const { return node_ && node_->requires_grad; }
  bool has_grad() const { return node_->has_grad; }
  // Accumulated gradient; zeros of the value's shape when nothing arrived.
  Tensor grad() const;
  const std::shared_ptr<Node>& node() const { return node_; }
  bool defined() const { return static_cast<bool>(node_); }

 private:
  std::shared_ptr<Node> node_;
};

class Tape {
 public:
  void record(std::shared_ptr<Node> node) { nodes_.push_back(std::move(node)); }
  std::size_t size() const { return nodes_.size(); }
  bool empty() const { return nodes_.empty(); }
  void clear() { nodes_.clear(); }
  const std::vector<std::shared_ptr<Node>>& nodes() const { return nodes_; }

  // Seeds d(loss)/d(loss) = 1 and runs every recorded closure once, newest
  // first. Throws std::invalid_argument for a non-scalar loss and
  // std::logic_error for an empty tape.
  void backward(const Var& loss);

 private:
  std::vector<std::shared_ptr<Node>> nodes_;
};

// Makes `tape` the active tape of this thread for the scope's lifetime.
class TapeScope {
 public:
  explicit TapeScope(Tape& tape);
  ~TapeScope();
  TapeScope(const TapeScope&) = delete;
  TapeScope& operator=(const TapeScope&) = delete;

 private:
  Tape* previous_;
};

// Suspends recording for the scope's lifetime.
class NoGradScope {
 public:
  NoGradScope();
  ~NoGradScope();
  NoGradScope(const NoGradScope&) = delete;
  NoGradScope& operator=(const NoGradScope&) = delete;

 private:
  Tape* previous_;
};

Tape* active_tape();

// Builds the result of an op. Recording happens only when a tape is active
// and some input requires a gradient; otherwise `backward` is dropped.
Var make_result(Tensor value, const char* op, std::vector<Var> inputs,
                std::function<void(Node&)> backward);

}  // namespace mecc
