// Copyright 2026 The volcap Authors
// SPDX-License-Identifier: Apache-2.0

#include "volcap/autograd/var.hpp"

#include <unordered_set>

#include "volcap/error.hpp"

namespace volcap::ag {
namespace {
thread_local bool g_grad_enabled = true;
}

Tensor& Node::grad_buffer() {
  if (grad.shape() != value.shape()) grad = Tensor(value.shape(), 0.0);
  return grad;
}

Var::Var(Tensor value, bool requires_grad) : node_(std::make_shared<Node>()) {
  node_->value = std::move(value);
  node_->requires_grad = requires_grad;
}

const Tensor& Var::grad() const { return node_->grad_buffer(); }

void Var::zero_grad() {
  if (node_->grad.shape() == node_->value.shape()) node_->grad.fill(0.0);
}

double Var::item() const {
  if (node_->value.size() != 1) throw DimensionError("item() on a tensor with " + std::to_string(node_->value.size()) + " values");
  return node_->value[0];
}

Var make_result(Tensor value, std::vector<Var> inputs, std::function<void(Node&)> backward) {
  Var out;
  out.node_ = std::make_shared<Node>();
  out.node_->value = std::move(value);
  if (!g_grad_enabled) return out;
  bool any = false;
  for (const auto& in : inputs) any = any || in.requires_grad();
  if (!any) return out;
  out.node_->requires_grad = true;
  out.node_->parents.reserve(inputs.size());
  for (auto& in : inputs) out.node_->parents.push_back(in.ptr());
  out.node_->backward = std::move(backward);
  return out;
}

void backward(const Var& loss) {
  if (loss.value().size() != 1) throw DimensionError("backward() needs a scalar loss");
  if (!loss.requires_grad()) return;
  // Iterative post-order DFS for a topological order.
  std::vector<Node*> order;
  std::unordered_set<Node*> seen;
  std::vector<std::pair<Node*, std::size_t>> stack{{loss.node(), 0}};
  seen.insert(loss.node());
  while (!stack.empty()) {
    auto& [node, next] = stack.back();
    if (next < node->parents.size()) {
      Node* p = node->parents[next++].get();
      if (p->requires_grad && seen.insert(p).second) stack.emplace_back(p, 0);
    } else {
      order.push_back(node);
      stack.pop_back();
    }
  }
  loss.node()->grad_buffer()[0] += 1.0;
  for (auto it = order.rbegin(); it != order.rend(); ++it) {
    Node* n = *it;
    if (n->backward && n->has_grad()) n->backward(*n);
  }
  // Interior gradients are not needed past this point.
  for (Node* n : order) {
    if (n->backward) n->grad = Tensor();
  }
}

bool grad_enabled() { return g_grad_enabled; }

NoGradGuard::NoGradGuard() : previous_(g_grad_enabled) { g_grad_enabled = false; }
NoGradGuard::~NoGradGuard() { g_grad_enabled = previous_; }

namespace {
thread_local BranchTrace* g_branch_trace = nullptr;
}  // namespace

BranchTrace::BranchTrace() : previous_(g_branch_trace) { g_branch_trace = this; }
BranchTrace::~BranchTrace() { g_branch_trace = previous_; }

std::uint64_t* branch_digest() { return g_branch_trace ? &g_branch_trace->digest_ : nullptr; }

}  // namespace volcap::ag
