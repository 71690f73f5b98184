#pragma once

#include <cstddef>
#include <deque>
#include <functional>
#include <string>
#include <unordered_map>
#include <vector>

#include "reina/tensor.hpp"

namespace reina::ad {

class Tape;

// Handle to a node recorded on a Tape. Cheap to copy; valid while the tape lives.
class Var {
 public:
  Var() = default;
  Var(Tape* tape, std::size_t id) : tape_(tape), id_(id) {}

  Tape* tape() const { return tape_; }
  std::size_t id() const { return id_; }
  bool valid() const { return tape_ != nullptr; }
  const Tensor& value() const;
  const Shape& shape() const { return value().shape(); }
  std::size_t size() const { return value().size(); }
  bool requires_grad() const;

 private:
  Tape* tape_ = nullptr;
  std::size_t id_ = 0;
};

// Gradients of a scalar loss with respect to every trainable leaf of a tape.
class Gradients {
 public:
  const Tensor& operator[](const Var& leaf) const;
  const Tensor& at(std::size_t leaf_id) const;
  bool contains(std::size_t leaf_id) const { return grads_.count(leaf_id) != 0; }

 private:
  friend class Tape;
  std::unordered_map<std::size_t, Tensor> grads_;
};

// Records a computation graph in topological order and runs reverse-mode
// differentiation over it. Nodes whose inputs carry no gradient are stored
// without a backward closure, so inference on a tape costs only the forward ops.
class Tape {
 public:
  using Backward = std::function<void(Tape&, std::size_t self)>;

  Tape() = default;
  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;

  // Leaf referencing caller-owned storage; `value` must outlive the tape.
  Var leaf(const Tensor& value, bool trainable);
  Var leaf(Tensor&& value, bool trainable) = delete;
  // Leaf owning a copy of `value`; never trainable.
  Var constant(Tensor value);
  // Record an op output. `backward` is stored only if requires_grad is true.
  Var record(const char* op, Tensor value, bool requires_grad, Backward backward);

  const Tensor& value(std::size_t id) const;
  bool requires_grad(std::size_t id) const { return nodes_[id].requires_grad; }
  std::size_t size() const { return nodes_.size(); }

  // Gradient buffer of node `id`, zero-allocated on first access.
  Tensor& grad(std::size_t id);
  // Gradient buffer if one was allocated, else nullptr.
  const Tensor* grad_if(std::size_t id) const;

  // d(loss)/d(leaf) for every trainable leaf; untouched leaves get zeros.
  // Each node is visited once, in reverse recording order.
  Gradients backward(const Var& loss);

  const std::vector<std::size_t>& trainable_leaves() const { return trainable_; }

 private:
  struct Node {
    Tensor owned;
    const Tensor* ref = nullptr;
    Tensor grad;
    bool requires_grad = false;
    Backward backward;
    const Tensor& value() const { return ref ? *ref : owned; }
  };
  std::deque<Node> nodes_;
  std::vector<std::size_t> trainable_;
};

}  // namespace reina::ad
