// Copyright 2026 The volcap Authors
// SPDX-License-Identifier: Apache-2.0

#include "volcap/brain/ridge.hpp"

#include <Eigen/Dense>
#include <algorithm>
#include <cmath>
#include <limits>

#include "volcap/error.hpp"
#include "volcap/tensor_io.hpp"

namespace volcap::brain {
namespace {

using RowMat = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using Mat = Eigen::MatrixXd;

Mat to_mat(const Tensor& t) {
  if (t.rank() != 2) throw DimensionError("expected a matrix, got shape " + shape_str(t.shape()));
  return Eigen::Map<const RowMat>(t.data(), static_cast<Eigen::Index>(t.dim(0)), static_cast<Eigen::Index>(t.dim(1)));
}

Tensor to_tensor(const Mat& m) {
  Tensor t({static_cast<std::size_t>(m.rows()), static_cast<std::size_t>(m.cols())});
  Eigen::Map<RowMat>(t.data(), m.rows(), m.cols()) = m;
  return t;
}

Mat solve_spd(const Mat& a, const Mat& b) {
  Eigen::LLT<Mat> llt(a);
  if (llt.info() == Eigen::Success) return llt.solve(b);
  return a.ldlt().solve(b);
}

}  // namespace

RidgeModel ridge_fit(const Tensor& x, const Tensor& y, double lambda, const RidgeOptions& options) {
  if (!(lambda >= 0.0) || !std::isfinite(lambda)) throw ConfigError("ridge_fit: lambda must be a finite value >= 0");
  Mat X = to_mat(x);
  Mat Y = to_mat(y);
  if (X.rows() == 0) throw DimensionError("ridge_fit: need at least one sample");
  if (X.rows() != Y.rows()) throw DimensionError("ridge_fit: X and Y have different row counts");
  Eigen::RowVectorXd xm = Eigen::RowVectorXd::Zero(X.cols());
  Eigen::RowVectorXd ym = Eigen::RowVectorXd::Zero(Y.cols());
  if (options.fit_intercept) {
    xm = X.colwise().mean();
    ym = Y.colwise().mean();
    X.rowwise() -= xm;
    Y.rowwise() -= ym;
  }
  Mat W;
  if (lambda == 0.0) {
    W = Eigen::CompleteOrthogonalDecomposition<Mat>(X).solve(Y);
  } else if (X.cols() <= X.rows()) {
    Mat a = X.transpose() * X;
    a.diagonal().array() += lambda;
    W = solve_spd(a, X.transpose() * Y);
  } else {
    Mat k = X * X.transpose();
    k.diagonal().array() += lambda;
    W = X.transpose() * solve_spd(k, Y);
  }
  RidgeModel m;
  m.weights = to_tensor(W);
  const Eigen::RowVectorXd b = ym - xm * W;
  m.bias.assign(b.data(), b.data() + b.size());
  m.lambda = lambda;
  return m;
}

std::vector<double> ridge_predict(const RidgeModel& model, std::span<const double> x) {
  if (x.size() != model.input_dim()) {
    throw DimensionError("ridge_predict: input length " + std::to_string(x.size()) + " != model input dim " +
                         std::to_string(model.input_dim()));
  }
  const std::size_t e = model.output_dim();
  std::vector<double> out = model.bias;
  for (std::size_t v = 0; v < x.size(); ++v) {
    const double xv = x[v];
    if (xv == 0.0) continue;
    const double* row = model.weights.data() + v * e;
    for (std::size_t j = 0; j < e; ++j) out[j] += xv * row[j];
  }
  return out;
}

Tensor ridge_predict(const RidgeModel& model, const Tensor& x) {
  if (x.rank() != 2 || x.dim(1) != model.input_dim()) {
    throw DimensionError("ridge_predict: input shape " + shape_str(x.shape()) + " does not match model input dim " +
                         std::to_string(model.input_dim()));
  }
  Mat out = to_mat(x) * to_mat(model.weights);
  out.rowwise() += Eigen::Map<const Eigen::RowVectorXd>(model.bias.data(), static_cast<Eigen::Index>(model.bias.size()));
  return to_tensor(out);
}

std::vector<double> default_lambda_grid() { return {1e-3, 1e-2, 1e-1, 1.0, 1e1, 1e2, 1e3, 1e4}; }

RidgeCvResult ridge_cv(const Tensor& x, const Tensor& y, std::span<const double> lambdas, std::size_t folds,
                       const RidgeOptions& options) {
  const std::size_t n = x.dim(0);
  if (lambdas.empty()) throw ConfigError("ridge_cv: empty lambda grid");
  if (folds < 2 || folds > n) throw ConfigError("ridge_cv: need 2 <= folds <= samples");
  const Mat X = to_mat(x);
  const Mat Y = to_mat(y);
  RidgeCvResult res;
  res.lambdas.assign(lambdas.begin(), lambdas.end());
  res.cv_mse.assign(lambdas.size(), 0.0);
  for (std::size_t f = 0; f < folds; ++f) {
    const std::size_t lo = f * n / folds, hi = (f + 1) * n / folds;
    Mat xtr(static_cast<Eigen::Index>(n - (hi - lo)), X.cols()), ytr(xtr.rows(), Y.cols());
    Eigen::Index r = 0;
    for (std::size_t i = 0; i < n; ++i) {
      if (i >= lo && i < hi) continue;
      xtr.row(r) = X.row(static_cast<Eigen::Index>(i));
      ytr.row(r++) = Y.row(static_cast<Eigen::Index>(i));
    }
    const Tensor txtr = to_tensor(xtr), tytr = to_tensor(ytr);
    const Tensor xval = to_tensor(X.middleRows(static_cast<Eigen::Index>(lo), static_cast<Eigen::Index>(hi - lo)));
    const Mat yval = Y.middleRows(static_cast<Eigen::Index>(lo), static_cast<Eigen::Index>(hi - lo));
    for (std::size_t li = 0; li < lambdas.size(); ++li) {
      const Mat pred = to_mat(ridge_predict(ridge_fit(txtr, tytr, lambdas[li], options), xval));
      res.cv_mse[li] += (pred - yval).squaredNorm() / static_cast<double>(yval.size()) / static_cast<double>(folds);
    }
  }
  std::size_t best = 0;
  for (std::size_t li = 1; li < lambdas.size(); ++li) {
    if (res.cv_mse[li] < res.cv_mse[best] ||
        (res.cv_mse[li] == res.cv_mse[best] && lambdas[li] < lambdas[best])) {
      best = li;
    }
  }
  res.best_lambda = lambdas[best];
  return res;
}

void save_ridge(const RidgeModel& model, const std::filesystem::path& dir) {
  write_tensor(dir / "weights.vct", model.weights);
  write_tensor(dir / "bias.vct", Tensor::vector(model.bias));
  write_tensor(dir / "lambda.vct", Tensor::scalar(model.lambda));
}

RidgeModel load_ridge(const std::filesystem::path& dir) {
  RidgeModel m;
  m.weights = read_tensor(dir / "weights.vct");
  m.bias = read_tensor(dir / "bias.vct").values();
  m.lambda = read_tensor(dir / "lambda.vct")[0];
  if (m.weights.rank() != 2 || m.bias.size() != m.weights.dim(1)) throw ValidationError("ridge checkpoint has inconsistent shapes");
  return m;
}

}  // namespace volcap::brain
