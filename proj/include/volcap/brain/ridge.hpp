// Copyright 2026 The volcap Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <filesystem>
#include <span>
#include <vector>

#include "volcap/tensor.hpp"

namespace volcap::brain {

/// Linear map y = x W + bias from V voxels to E embedding dims.
struct RidgeModel {
  Tensor weights;  // V x E
  std::vector<double> bias;
  double lambda = 0.0;

  std::size_t input_dim() const { return weights.dim(0); }
  std::size_t output_dim() const { return weights.dim(1); }
};

struct RidgeOptions {
  /// Center X and Y by column means; bias recovers the offset.
  bool fit_intercept = true;
};

/// Solves (X^T X + lambda I) W = X^T Y on (optionally centered) data. Uses the
/// primal system when V <= N and the dual (kernel) form otherwise. lambda = 0
/// returns the minimum-norm least-squares solution.
RidgeModel ridge_fit(const Tensor& x, const Tensor& y, double lambda, const RidgeOptions& options = {});

std::vector<double> ridge_predict(const RidgeModel& model, std::span<const double> x);
/// Row-wise prediction for an N x V matrix.
Tensor ridge_predict(const RidgeModel& model, const Tensor& x);

struct RidgeCvResult {
  double best_lambda = 0.0;
  std::vector<double> lambdas;
  std::vector<double> cv_mse;
};

/// {1e-3, 1e-2, ..., 1e4}
std::vector<double> default_lambda_grid();

/// K-fold cross-validation over contiguous folds; ties go to the smaller lambda.
RidgeCvResult ridge_cv(const Tensor& x, const Tensor& y, std::span<const double> lambdas, std::size_t folds = 5,
                       const RidgeOptions& options = {});

void save_ridge(const RidgeModel& model, const std::filesystem::path& dir);
RidgeModel load_ridge(const std::filesystem::path& dir);

}  // namespace volcap::brain
