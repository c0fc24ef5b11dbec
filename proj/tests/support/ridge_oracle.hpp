// Copyright 2026 The volcap Authors
// SPDX-License-Identifier: Apache-2.0

// Plain-loop references for the ridge solver: a gradient-descent minimizer of
// the ridge objective and the normal-equation residual.

#pragma once

#include <algorithm>
#include <cmath>
#include <vector>

#include "volcap/tensor.hpp"

namespace volcap::testing {

using Mat = std::vector<std::vector<double>>;

inline Mat to_rows(const Tensor& t) {
  Mat m(t.dim(0), std::vector<double>(t.dim(1)));
  for (std::size_t i = 0; i < t.dim(0); ++i)
    for (std::size_t j = 0; j < t.dim(1); ++j) m[i][j] = t[i * t.dim(1) + j];
  return m;
}

inline Mat gram(const Mat& x) {  // X^T X
  const std::size_t n = x.size(), v = x[0].size();
  Mat g(v, std::vector<double>(v, 0.0));
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t a = 0; a < v; ++a)
      for (std::size_t b = 0; b < v; ++b) g[a][b] += x[i][a] * x[i][b];
  return g;
}

inline Mat cross(const Mat& x, const Mat& y) {  // X^T Y
  Mat c(x[0].size(), std::vector<double>(y[0].size(), 0.0));
  for (std::size_t i = 0; i < x.size(); ++i)
    for (std::size_t a = 0; a < x[0].size(); ++a)
      for (std::size_t b = 0; b < y[0].size(); ++b) c[a][b] += x[i][a] * y[i][b];
  return c;
}

inline Mat center(Mat m) {
  for (std::size_t j = 0; j < m[0].size(); ++j) {
    double s = 0.0;
    for (const auto& r : m) s += r[j];
    s /= static_cast<double>(m.size());
    for (auto& r : m) r[j] -= s;
  }
  return m;
}

inline double inf_norm(const Mat& m) {  // max row sum
  double best = 0.0;
  for (const auto& r : m) {
    double s = 0.0;
    for (double v : r) s += std::abs(v);
    best = std::max(best, s);
  }
  return best;
}

/// ||X^T X W + lambda W - X^T Y||_inf scaled by the size of its terms.
inline double normal_residual(const Mat& x, const Mat& y, const Tensor& w_t, double lambda) {
  const Mat w = to_rows(w_t);
  const Mat g = gram(x), c = cross(x, y);
  Mat r = c;
  for (std::size_t a = 0; a < g.size(); ++a)
    for (std::size_t b = 0; b < w[0].size(); ++b) {
      double s = lambda * w[a][b];
      for (std::size_t k = 0; k < g.size(); ++k) s += g[a][k] * w[k][b];
      r[a][b] = s - c[a][b];
    }
  const double scale = inf_norm(g) * inf_norm(w) + lambda * inf_norm(w) + inf_norm(c);
  return inf_norm(r) / std::max(scale, 1e-300);
}

/// Minimizes sum ||x W + b - y||^2 + lambda ||W||^2 by gradient descent
/// (b unpenalized). Step size 1 / (L + lambda), L from power iteration on
/// the augmented Gram matrix [X 1]^T [X 1].
inline void ridge_gd(const Mat& x, const Mat& y, double lambda, std::size_t iters, Mat& w, std::vector<double>& b) {
  const std::size_t n = x.size(), v = x[0].size(), e = y[0].size();
  std::vector<double> z(v + 1, 1.0);
  double l = 0.0;
  for (int it = 0; it < 200; ++it) {
    std::vector<double> xz(n, 0.0), nz(v + 1, 0.0);
    for (std::size_t i = 0; i < n; ++i) {
      for (std::size_t a = 0; a < v; ++a) xz[i] += x[i][a] * z[a];
      xz[i] += z[v];
    }
    for (std::size_t i = 0; i < n; ++i) {
      for (std::size_t a = 0; a < v; ++a) nz[a] += x[i][a] * xz[i];
      nz[v] += xz[i];
    }
    double norm = 0.0;
    for (double q : nz) norm += q * q;
    norm = std::sqrt(norm);
    l = norm;
    for (std::size_t a = 0; a <= v; ++a) z[a] = nz[a] / norm;
  }
  const double step = 1.0 / (1.02 * l + lambda);
  w.assign(v, std::vector<double>(e, 0.0));
  b.assign(e, 0.0);
  std::vector<double> res(e);
  for (std::size_t it = 0; it < iters; ++it) {
    Mat gw(v, std::vector<double>(e, 0.0));
    std::vector<double> gb(e, 0.0);
    for (std::size_t i = 0; i < n; ++i) {
      for (std::size_t j = 0; j < e; ++j) {
        double p = b[j];
        for (std::size_t a = 0; a < v; ++a) p += x[i][a] * w[a][j];
        res[j] = p - y[i][j];
        gb[j] += res[j];
      }
      for (std::size_t a = 0; a < v; ++a)
        for (std::size_t j = 0; j < e; ++j) gw[a][j] += x[i][a] * res[j];
    }
    for (std::size_t a = 0; a < v; ++a)
      for (std::size_t j = 0; j < e; ++j) w[a][j] -= step * (gw[a][j] + lambda * w[a][j]);
    for (std::size_t j = 0; j < e; ++j) b[j] -= step * gb[j];
  }
}

}  // namespace volcap::testing
