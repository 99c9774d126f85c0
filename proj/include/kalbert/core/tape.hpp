// Copyright 2026 The kalbert Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstdint>
#include <functional>
#include <initializer_list>
#include <limits>
#include <vector>

#include "kalbert/core/error.hpp"
#include "kalbert/core/tensor.hpp"

namespace kalbert {

/// Handle to a value recorded on a Tape.
struct Var {
  std::uint32_t id = std::numeric_limits<std::uint32_t>::max();
  bool valid() const noexcept { return id != std::numeric_limits<std::uint32_t>::max(); }
};

/// Define-by-run reverse-mode gradient tape.
///
/// Every op appends one node holding its output value and, when any input
/// participates in differentiation, a closure that pushes the node's
/// gradient into its inputs. backward() replays closures in reverse
/// recording order, which is a valid topological order by construction.
/// A tape is built for one forward pass and discarded afterwards.
template <Real T>
class Tape {
 public:
  using BackwardFn = std::function<void(Tape&, Var self)>;

  explicit Tape(bool grad_enabled = true) : grad_enabled_(grad_enabled) {}

  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;

  bool grad_enabled() const noexcept { return grad_enabled_; }

  /// Owned leaf value.
  Var input(Tensor<T> value, bool requires_grad = false) {
    ensure_finite(value, "input");
    Node node;
    node.owned = std::move(value);
    node.requires_grad = requires_grad && grad_enabled_;
    return push(std::move(node));
  }

  Var constant(Tensor<T> value) { return input(std::move(value), false); }

  /// Non-owning leaf. The referenced tensor must outlive the tape and must
  /// not be modified while the tape is alive.
  Var watch(const Tensor<T>& external, bool requires_grad = true) {
    ensure_finite(external, "parameter");
    Node node;
    node.external = &external;
    node.requires_grad = requires_grad && grad_enabled_;
    return push(std::move(node));
  }

  /// Appends an op output. The backward closure is kept only when some
  /// input requires a gradient.
  Var record(Tensor<T> value, std::initializer_list<Var> inputs, BackwardFn backward) {
    ensure_finite(value, "op output");
    Node node;
    node.owned = std::move(value);
    if (grad_enabled_) {
      for (Var in : inputs) {
        if (nodes_.at(in.id).requires_grad) node.requires_grad = true;
      }
      if (node.requires_grad) node.backward = std::move(backward);
    }
    return push(std::move(node));
  }

  const Tensor<T>& value(Var v) const {
    const Node& node = nodes_.at(v.id);
    return node.external != nullptr ? *node.external : node.owned;
  }

  bool requires_grad(Var v) const { return nodes_.at(v.id).requires_grad; }

  /// Mutable gradient accumulator for v, zero-initialized on first use.
  Tensor<T>& grad_buffer(Var v) {
    Node& node = nodes_.at(v.id);
    if (node.grad.empty() && !value(v).empty()) node.grad = Tensor<T>(value(v).shape());
    return node.grad;
  }

  bool has_grad(Var v) const { return !nodes_.at(v.id).grad.empty(); }

  /// Gradient of the last backward() target w.r.t. v; exact zeros when v is
  /// not on a path to it.
  Tensor<T> grad(Var v) const {
    const Node& node = nodes_.at(v.id);
    if (!node.grad.empty()) return node.grad;
    return Tensor<T>(value(v).shape());
  }

  void backward(Var loss) {
    if (value(loss).size() != 1) {
      fail(ErrorCode::NotScalarLoss, "backward target has shape " + shape_to_string(value(loss).shape()));
    }
    backward_visits_ = 0;
    grad_buffer(loss).fill(T{1});
    for (std::size_t i = nodes_.size(); i-- > 0;) {
      Node& node = nodes_[i];
      if (!node.backward || node.grad.empty()) continue;
      ++backward_visits_;
      node.backward(*this, Var{static_cast<std::uint32_t>(i)});
    }
  }

  std::size_t size() const noexcept { return nodes_.size(); }

  /// Number of closures executed by the last backward().
  std::size_t backward_visits() const noexcept { return backward_visits_; }

 private:
  struct Node {
    Tensor<T> owned;
    const Tensor<T>* external = nullptr;
    Tensor<T> grad;
    bool requires_grad = false;
    BackwardFn backward;
  };

  Var push(Node node) {
    nodes_.push_back(std::move(node));
    return Var{static_cast<std::uint32_t>(nodes_.size() - 1)};
  }

  static void ensure_finite(const Tensor<T>& value, const char* what) {
    if (!value.all_finite()) fail(ErrorCode::NonFinite, std::string("non-finite value in ") + what);
  }

  std::vector<Node> nodes_;
  bool grad_enabled_;
  std::size_t backward_visits_ = 0;
};

}  // namespace kalbert
