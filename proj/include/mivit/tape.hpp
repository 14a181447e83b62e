#pragma once

#include <deque>
#include <functional>
#include <vector>

#include "mivit/tensor.hpp"

namespace mivit {

// Reverse-mode tape. Ops append nodes in execution order, which is already
// a topological order, so backward() is a single reverse sweep. Node grads
// are fresh per backward() call; leaf grads accumulate (+=) into the
// tensors handed to leaf(), so repeated backward calls double them and
// zeroing is the caller's explicit step.
template <typename T>
class Tape;

template <typename T>
struct Var {
  Tape<T>* tape = nullptr;
  int id = -1;

  const TensorT<T>& value() const { return tape->node(id).value; }
  const Shape& shape() const { return value().shape; }
};

template <typename T>
class Tape {
 public:
  struct Node {
    TensorT<T> value;
    std::vector<T> grad;  // same numel as value, allocated when reached
    std::vector<int> parents;
    std::function<void(Tape&, int)> backward;  // null for constants
    bool needs_grad = false;
    bool reached = false;
  };

  Var<T> leaf(TensorT<T>& t) {
    Node n;
    n.value = t;  // shares storage
    n.needs_grad = t.requires_grad;
    if (t.requires_grad) {
      auto ext = t.grad;
      n.backward = [ext](Tape& tape, int self) {
        auto& g = tape.node(self).grad;
        auto& dst = *ext;
        for (size_t i = 0; i < dst.size(); ++i) dst[i] += g[i];
      };
    }
    nodes_.push_back(std::move(n));
    return {this, static_cast<int>(nodes_.size()) - 1};
  }

  Var<T> constant(TensorT<T> t) {
    Node n;
    n.value = std::move(t);
    nodes_.push_back(std::move(n));
    return {this, static_cast<int>(nodes_.size()) - 1};
  }

  // Used by op implementations.
  Var<T> emplace(TensorT<T> value, std::vector<int> parents,
                 std::function<void(Tape&, int)> backward) {
    Node n;
    n.value = std::move(value);
    bool any = false;
    for (int p : parents) any = any || nodes_[static_cast<size_t>(p)].needs_grad;
    n.needs_grad = any;
    if (any) {
      n.parents = std::move(parents);
      n.backward = std::move(backward);
    }
    nodes_.push_back(std::move(n));
    return {this, static_cast<int>(nodes_.size()) - 1};
  }

  Node& node(int id) { return nodes_[static_cast<size_t>(id)]; }
  const Node& node(int id) const { return nodes_[static_cast<size_t>(id)]; }
  int size() const { return static_cast<int>(nodes_.size()); }

  // Grad buffer of `id`, allocated zeroed on first touch.
  std::vector<T>& grad_of(int id) {
    Node& n = nodes_[static_cast<size_t>(id)];
    if (n.grad.empty()) n.grad.assign(static_cast<size_t>(n.value.numel()), T(0));
    n.reached = true;
    return n.grad;
  }

  void backward(Var<T> loss) {
    if (loss.value().numel() != 1)
      throw DimensionError("backward requires a scalar loss, got shape " +
                           shape_str(loss.value().shape));
    for (auto& n : nodes_) {
      n.grad.clear();
      n.reached = false;
    }
    grad_of(loss.id)[0] = T(1);
    for (int i = loss.id; i >= 0; --i) {
      Node& n = nodes_[static_cast<size_t>(i)];
      if (n.reached && n.needs_grad && n.backward) n.backward(*this, i);
    }
  }

 private:
  std::deque<Node> nodes_;  // reference-stable growth
};

}  // namespace mivit
