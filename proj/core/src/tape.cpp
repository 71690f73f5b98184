#include "reina/tape.hpp"

#include <stdexcept>

namespace reina::ad {

const Tensor& Var::value() const {
  if (!tape_) throw std::logic_error("Var::value on an unbound variable");
  return tape_->value(id_);
}

bool Var::requires_grad() const { return tape_ && tape_->requires_grad(id_); }

const Tensor& Gradients::operator[](const Var& leaf) const { return at(leaf.id()); }

const Tensor& Gradients::at(std::size_t leaf_id) const {
  auto it = grads_.find(leaf_id);
  if (it == grads_.end()) throw std::invalid_argument("no gradient for non-trainable node");
  return it->second;
}

Var Tape::leaf(const Tensor& value, bool trainable) {
  if (!value.all_finite()) throw std::invalid_argument("leaf value contains NaN or Inf");
  Node n;
  n.ref = &value;
  n.requires_grad = trainable;
  nodes_.push_back(std::move(n));
  const std::size_t id = nodes_.size() - 1;
  if (trainable) trainable_.push_back(id);
  return Var(this, id);
}

Var Tape::constant(Tensor value) {
  if (!value.all_finite()) throw std::invalid_argument("constant contains NaN or Inf");
  Node n;
  n.owned = std::move(value);
  nodes_.push_back(std::move(n));
  return Var(this, nodes_.size() - 1);
}

Var Tape::record(const char* op, Tensor value, bool requires_grad, Backward backward) {
  if (!value.all_finite()) {
    throw std::domain_error(std::string("non-finite output from op ") + op);
  }
  Node n;
  n.owned = std::move(value);
  n.requires_grad = requires_grad;
  if (requires_grad) n.backward = std::move(backward);
  nodes_.push_back(std::move(n));
  return Var(this, nodes_.size() - 1);
}

const Tensor& Tape::value(std::size_t id) const { return nodes_.at(id).value(); }

Tensor& Tape::grad(std::size_t id) {
  Node& n = nodes_[id];
  if (n.grad.empty()) n.grad = Tensor(n.value().shape(), 0.0);
  return n.grad;
}

const Tensor* Tape::grad_if(std::size_t id) const {
  const Node& n = nodes_[id];
  return n.grad.empty() ? nullptr : &n.grad;
}

Gradients Tape::backward(const Var& loss) {
  if (loss.tape() != this) throw std::invalid_argument("loss belongs to another tape");
  if (value(loss.id()).size() != 1) {
    throw std::invalid_argument("backward requires a scalar loss, got shape " +
                                shape_string(value(loss.id()).shape()));
  }
  if (nodes_[loss.id()].requires_grad) {
    grad(loss.id())[0] = 1.0;
    for (std::size_t i = loss.id() + 1; i-- > 0;) {
      Node& n = nodes_[i];
      if (!n.requires_grad || !n.backward || n.grad.empty()) continue;
      n.backward(*this, i);
    }
  }
  Gradients out;
  for (std::size_t id : trainable_) {
    Node& n = nodes_[id];
    out.grads_.emplace(id, n.grad.empty() ? Tensor(n.value().shape(), 0.0)
                                          : std::move(n.grad));
  }
  return out;
}

}  // namespace reina::ad
