// Copyright 2026 The volcap Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstdint>
#include <functional>
#include <memory>
#include <vector>

#include "volcap/tensor.hpp"

namespace volcap::ag {

/// Graph node. `backward` reads `grad` and accumulates into the parents.
struct Node {
  Tensor value;
  Tensor grad;
  bool requires_grad = false;
  std::vector<std::shared_ptr<Node>> parents;
  std::function<void(Node&)> backward;

  /// Gradient buffer, allocated (zeroed) on first use.
  Tensor& grad_buffer();
  bool has_grad() const { return grad.size() == value.size() && !value.empty(); }
};

/// Handle to a node in a dynamically built reverse-mode graph. Copies share
/// the node; parameters are long-lived Vars whose gradients accumulate until
/// zero_grad().
class Var {
 public:
  Var() = default;
  explicit Var(Tensor value, bool requires_grad = false);

  const Tensor& value() const { return node_->value; }
  Tensor& mutable_value() { return node_->value; }
  const Shape& shape() const { return node_->value.shape(); }
  std::size_t dim(std::size_t axis) const { return node_->value.dim(axis); }
  bool requires_grad() const { return node_ && node_->requires_grad; }
  /// Gradient after backward(); zeros if nothing flowed here.
  const Tensor& grad() const;
  void zero_grad();
  double item() const;

  Node* node() const { return node_.get(); }
  const std::shared_ptr<Node>& ptr() const { return node_; }
  bool defined() const { return static_cast<bool>(node_); }

 private:
  friend Var make_result(Tensor, std::vector<Var>, std::function<void(Node&)>);
  std::shared_ptr<Node> node_;
};

inline Var parameter(Tensor value) { return Var(std::move(value), true); }
inline Var constant(Tensor value) { return Var(std::move(value), false); }

/// Builds an op output. The backward closure is dropped (and parents are not
/// retained) when grad mode is off or no input requires grad.
Var make_result(Tensor value, std::vector<Var> inputs, std::function<void(Node&)> backward);

/// Reverse sweep from a scalar (seed gradient 1).
void backward(const Var& loss);

bool grad_enabled();

class NoGradGuard {
 public:
  NoGradGuard();
  ~NoGradGuard();
  NoGradGuard(const NoGradGuard&) = delete;
  NoGradGuard& operator=(const NoGradGuard&) = delete;

 private:
  bool previous_;
};

/// While alive, piecewise ops (relu, max pooling) fold the branch each
/// element takes into a running digest. Two evaluations with equal digests
/// ran through the same linear piece; finite-difference checks use this to
/// detect a step that crosses a kink.
class BranchTrace {
 public:
  BranchTrace();
  ~BranchTrace();
  BranchTrace(const BranchTrace&) = delete;
  BranchTrace& operator=(const BranchTrace&) = delete;

  std::uint64_t digest() const { return digest_; }
  void reset() { digest_ = 0; }

 private:
  friend std::uint64_t* branch_digest();
  std::uint64_t digest_ = 0;
  BranchTrace* previous_;
};

/// Null unless a BranchTrace is active on this thread.
std::uint64_t* branch_digest();

}  // namespace volcap::ag
