// Copyright 2026 The volcap Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstddef>
#include <span>
#include <vector>

#include "volcap/autograd/var.hpp"

namespace volcap::ag {

// Elementwise (same shape).
Var add(const Var& a, const Var& b);
Var sub(const Var& a, const Var& b);
Var mul(const Var& a, const Var& b);
Var scale(const Var& a, double s);
/// a[..., n] + bias[n], broadcast over the leading axes.
Var add_bias(const Var& a, const Var& bias);

Var relu(const Var& a);
/// tanh approximation, as in GPT-2.
Var gelu(const Var& a);

// 2-D matrix ops.
Var matmul(const Var& a, const Var& b);
Var transpose(const Var& a);
/// Row softmax; with `causal`, entry (i, j) for j > i is masked to zero.
Var softmax_rows(const Var& a, bool causal = false);
/// Row-wise layer norm with affine gamma/beta of length n.
Var layer_norm(const Var& x, const Var& gamma, const Var& beta, double eps = 1e-5);
/// Gathers rows of `table` (V x d).
Var embedding(const Var& table, std::span<const int> ids);
Var concat_rows(const std::vector<Var>& parts);
Var slice_rows(const Var& a, std::size_t start, std::size_t count);
Var concat_cols(const std::vector<Var>& parts);
Var slice_cols(const Var& a, std::size_t start, std::size_t count);

Var reshape(const Var& a, Shape shape);

Var sum(const Var& a);
Var mean(const Var& a);
/// Mean of squared differences over all elements.
Var mse_loss(const Var& pred, const Tensor& target);
/// Mean over rows of -log_softmax(logits[r])[targets[r]].
Var cross_entropy(const Var& logits, std::span<const int> targets);

/// Row-wise log-softmax of a plain vector (no graph).
std::vector<double> log_softmax(std::span<const double> logits);

}  // namespace volcap::ag
