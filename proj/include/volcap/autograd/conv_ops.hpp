// Copyright 2026 The volcap Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstddef>

#include "volcap/autograd/var.hpp"

namespace volcap::ag {

/// x: [N, C, D, H, W], w: [O, C, k, k, k] (cubic kernel, no bias).
Var conv3d(const Var& x, const Var& w, std::size_t stride, std::size_t pad);

/// Running statistics owned by a batch-norm layer.
struct BatchNormState {
  Tensor running_mean;
  Tensor running_var;
  /// When set, running stats become the cumulative average of every batch
  /// seen (used to recalibrate after training).
  bool cumulative = false;
  std::size_t batches_seen = 0;
};

/// Per-channel normalization of x: [N, C, ...]. Training mode normalizes with
/// batch statistics (population variance) and updates `state`; inference mode
/// uses the running statistics.
Var batch_norm(const Var& x, const Var& gamma, const Var& beta, BatchNormState& state, bool training,
               double momentum = 0.1, double eps = 1e-5);

/// Cubic max pooling with implicit -inf padding.
Var max_pool3d(const Var& x, std::size_t kernel, std::size_t stride, std::size_t pad);

/// [N, C, ...] -> [N, C].
Var global_avg_pool(const Var& x);

inline std::size_t conv_out_size(std::size_t in, std::size_t kernel, std::size_t stride, std::size_t pad) {
  if (in + 2 * pad < kernel) return 0;
  return (in + 2 * pad - kernel) / stride + 1;
}

}  // namespace volcap::ag
