// Copyright 2026 The volcap Authors
// SPDX-License-Identifier: Apache-2.0

#include "volcap/autograd/conv_ops.hpp"

#include <Eigen/Dense>
#include <algorithm>
#include <cmath>
#include <limits>
#include <memory>

#include "volcap/error.hpp"
#include "volcap/hash.hpp"

namespace volcap::ag {
namespace {

using RowMat = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using MapMat = Eigen::Map<RowMat>;
using CMapMat = Eigen::Map<const RowMat>;

struct ConvGeom {
  std::size_t n, c, d, h, w;     // input
  std::size_t o, k, stride, pad;
  std::size_t od, oh, ow;        // output
  std::size_t in_sp() const { return d * h * w; }
  std::size_t out_sp() const { return od * oh * ow; }
  std::size_t col_rows() const { return c * k * k * k; }
};

// Output columns [lo, hi) read in-bounds input for kernel offset `kk`.
void valid_range(std::size_t kk, const ConvGeom& g, std::size_t in, std::size_t out, std::size_t& lo, std::size_t& hi) {
  lo = kk >= g.pad ? 0 : (g.pad - kk + g.stride - 1) / g.stride;
  const std::size_t limit = in + g.pad;  // need xx * stride + kk < limit
  hi = limit <= kk ? 0 : std::min(out, (limit - kk + g.stride - 1) / g.stride);
  if (hi < lo) hi = lo;
}

// cols[(ci, kd, kh, kw), (z, y, x)] for one sample.
void im2col(const double* x, const ConvGeom& g, double* cols) {
  const std::size_t p = g.out_sp();
  std::size_t row = 0;
  for (std::size_t ci = 0; ci < g.c; ++ci)
    for (std::size_t kd = 0; kd < g.k; ++kd)
      for (std::size_t kh = 0; kh < g.k; ++kh)
        for (std::size_t kw = 0; kw < g.k; ++kw, ++row) {
          double* dst = cols + row * p;
          const double* src = x + ci * g.in_sp();
          std::size_t xlo, xhi;
          valid_range(kw, g, g.w, g.ow, xlo, xhi);
          for (std::size_t z = 0; z < g.od; ++z) {
            const std::ptrdiff_t iz = static_cast<std::ptrdiff_t>(z * g.stride + kd) - static_cast<std::ptrdiff_t>(g.pad);
            for (std::size_t y = 0; y < g.oh; ++y) {
              const std::ptrdiff_t iy = static_cast<std::ptrdiff_t>(y * g.stride + kh) - static_cast<std::ptrdiff_t>(g.pad);
              double* drow = dst + (z * g.oh + y) * g.ow;
              if (iz < 0 || iz >= static_cast<std::ptrdiff_t>(g.d) || iy < 0 || iy >= static_cast<std::ptrdiff_t>(g.h)) {
                std::fill_n(drow, g.ow, 0.0);
                continue;
              }
              const double* srow = src + (static_cast<std::size_t>(iz) * g.h + static_cast<std::size_t>(iy)) * g.w + kw;
              std::fill_n(drow, xlo, 0.0);
              for (std::size_t xx = xlo; xx < xhi; ++xx) drow[xx] = srow[static_cast<std::ptrdiff_t>(xx * g.stride) - static_cast<std::ptrdiff_t>(g.pad)];
              std::fill(drow + xhi, drow + g.ow, 0.0);
            }
          }
        }
}

void col2im(const double* cols, const ConvGeom& g, double* dx) {
  const std::size_t p = g.out_sp();
  std::size_t row = 0;
  for (std::size_t ci = 0; ci < g.c; ++ci)
    for (std::size_t kd = 0; kd < g.k; ++kd)
      for (std::size_t kh = 0; kh < g.k; ++kh)
        for (std::size_t kw = 0; kw < g.k; ++kw, ++row) {
          const double* src = cols + row * p;
          double* dst = dx + ci * g.in_sp();
          std::size_t xlo, xhi;
          valid_range(kw, g, g.w, g.ow, xlo, xhi);
          for (std::size_t z = 0; z < g.od; ++z) {
            const std::ptrdiff_t iz = static_cast<std::ptrdiff_t>(z * g.stride + kd) - static_cast<std::ptrdiff_t>(g.pad);
            if (iz < 0 || iz >= static_cast<std::ptrdiff_t>(g.d)) continue;
            for (std::size_t y = 0; y < g.oh; ++y) {
              const std::ptrdiff_t iy = static_cast<std::ptrdiff_t>(y * g.stride + kh) - static_cast<std::ptrdiff_t>(g.pad);
              if (iy < 0 || iy >= static_cast<std::ptrdiff_t>(g.h)) continue;
              const double* srow = src + (z * g.oh + y) * g.ow;
              double* drow = dst + (static_cast<std::size_t>(iz) * g.h + static_cast<std::size_t>(iy)) * g.w + kw;
              for (std::size_t xx = xlo; xx < xhi; ++xx) drow[static_cast<std::ptrdiff_t>(xx * g.stride) - static_cast<std::ptrdiff_t>(g.pad)] += srow[xx];
            }
          }
        }
}

std::size_t spatial_size(const Shape& s) {
  std::size_t n = 1;
  for (std::size_t i = 2; i < s.size(); ++i) n *= s[i];
  return n;
}

}  // namespace

Var conv3d(const Var& x, const Var& w, std::size_t stride, std::size_t pad) {
  const Shape& xs = x.shape();
  const Shape& ws = w.shape();
  if (xs.size() != 5 || ws.size() != 5) throw DimensionError("conv3d: expects 5-D input and weight");
  if (ws[1] != xs[1]) throw DimensionError("conv3d: weight in-channels " + std::to_string(ws[1]) + " != input channels " + std::to_string(xs[1]));
  if (ws[2] != ws[3] || ws[3] != ws[4]) throw DimensionError("conv3d: kernel must be cubic");
  if (stride == 0) throw DimensionError("conv3d: stride must be positive");
  ConvGeom g{xs[0], xs[1], xs[2], xs[3], xs[4], ws[0], ws[2], stride, pad, 0, 0, 0};
  g.od = conv_out_size(g.d, g.k, stride, pad);
  g.oh = conv_out_size(g.h, g.k, stride, pad);
  g.ow = conv_out_size(g.w, g.k, stride, pad);
  if (g.od == 0 || g.oh == 0 || g.ow == 0) throw DimensionError("conv3d: input " + shape_str(xs) + " too small for kernel");

  Tensor out({g.n, g.o, g.od, g.oh, g.ow});
  auto cols = std::make_unique_for_overwrite<double[]>(g.col_rows() * g.out_sp());
  CMapMat wm(w.value().data(), g.o, g.col_rows());
  for (std::size_t s = 0; s < g.n; ++s) {
    im2col(x.value().data() + s * g.c * g.in_sp(), g, cols.get());
    MapMat(out.data() + s * g.o * g.out_sp(), g.o, g.out_sp()).noalias() =
        wm * CMapMat(cols.get(), g.col_rows(), g.out_sp());
  }
  return make_result(std::move(out), {x, w}, [g](Node& node) {
    Node& xn = *node.parents[0];
    Node& wn = *node.parents[1];
    auto cols = std::make_unique_for_overwrite<double[]>(g.col_rows() * g.out_sp());
    auto dcols = std::make_unique_for_overwrite<double[]>(xn.requires_grad ? g.col_rows() * g.out_sp() : 0);
    CMapMat wm(wn.value.data(), g.o, g.col_rows());
    for (std::size_t s = 0; s < g.n; ++s) {
      CMapMat go(node.grad.data() + s * g.o * g.out_sp(), g.o, g.out_sp());
      if (wn.requires_grad) {
        im2col(xn.value.data() + s * g.c * g.in_sp(), g, cols.get());
        MapMat(wn.grad_buffer().data(), g.o, g.col_rows()).noalias() +=
            go * CMapMat(cols.get(), g.col_rows(), g.out_sp()).transpose();
      }
      if (xn.requires_grad) {
        MapMat(dcols.get(), g.col_rows(), g.out_sp()).noalias() = wm.transpose() * go;
        col2im(dcols.get(), g, xn.grad_buffer().data() + s * g.c * g.in_sp());
      }
    }
  });
}

Var batch_norm(const Var& x, const Var& gamma, const Var& beta, BatchNormState& state, bool training, double momentum,
               double eps) {
  const Shape& xs = x.shape();
  if (xs.size() < 2) throw DimensionError("batch_norm: expects [N, C, ...]");
  const std::size_t n = xs[0], c = xs[1], sp = spatial_size(xs);
  if (gamma.value().size() != c || beta.value().size() != c) throw DimensionError("batch_norm: affine size mismatch");
  if (state.running_mean.size() != c) {
    state.running_mean = Tensor({c}, 0.0);
    state.running_var = Tensor({c}, 1.0);
  }
  const double m = static_cast<double>(n * sp);
  std::vector<double> mu(c), inv_std(c);
  if (training) {
    for (std::size_t ch = 0; ch < c; ++ch) {
      double s = 0.0;
      for (std::size_t i = 0; i < n; ++i) {
        const double* p = x.value().data() + (i * c + ch) * sp;
        for (std::size_t j = 0; j < sp; ++j) s += p[j];
      }
      mu[ch] = s / m;
      double v = 0.0;
      for (std::size_t i = 0; i < n; ++i) {
        const double* p = x.value().data() + (i * c + ch) * sp;
        for (std::size_t j = 0; j < sp; ++j) v += (p[j] - mu[ch]) * (p[j] - mu[ch]);
      }
      v /= m;
      inv_std[ch] = 1.0 / std::sqrt(v + eps);
      const double mom = state.cumulative ? 1.0 / static_cast<double>(state.batches_seen + 1) : momentum;
      state.running_mean[ch] = (1.0 - mom) * state.running_mean[ch] + mom * mu[ch];
      state.running_var[ch] = (1.0 - mom) * state.running_var[ch] + mom * v;
    }
    ++state.batches_seen;
  } else {
    for (std::size_t ch = 0; ch < c; ++ch) {
      mu[ch] = state.running_mean[ch];
      inv_std[ch] = 1.0 / std::sqrt(state.running_var[ch] + eps);
    }
  }
  Tensor out(xs);
  Tensor xhat(xs);
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t ch = 0; ch < c; ++ch) {
      const std::size_t base = (i * c + ch) * sp;
      for (std::size_t j = 0; j < sp; ++j) {
        xhat[base + j] = (x.value()[base + j] - mu[ch]) * inv_std[ch];
        out[base + j] = xhat[base + j] * gamma.value()[ch] + beta.value()[ch];
      }
    }
  return make_result(std::move(out), {x, gamma, beta},
                     [n, c, sp, m, training, xhat = std::move(xhat), inv_std = std::move(inv_std)](Node& node) {
                       const Tensor& gam = node.parents[1]->value;
                       std::vector<double> sum_g(c, 0.0), sum_gx(c, 0.0);
                       for (std::size_t i = 0; i < n; ++i)
                         for (std::size_t ch = 0; ch < c; ++ch) {
                           const std::size_t base = (i * c + ch) * sp;
                           for (std::size_t j = 0; j < sp; ++j) {
                             sum_g[ch] += node.grad[base + j];
                             sum_gx[ch] += node.grad[base + j] * xhat[base + j];
                           }
                         }
                       if (node.parents[0]->requires_grad) {
                         Tensor& g = node.parents[0]->grad_buffer();
                         for (std::size_t i = 0; i < n; ++i)
                           for (std::size_t ch = 0; ch < c; ++ch) {
                             const std::size_t base = (i * c + ch) * sp;
                             const double k = gam[ch] * inv_std[ch];
                             for (std::size_t j = 0; j < sp; ++j) {
                               if (training) {
                                 g[base + j] += k * (node.grad[base + j] - sum_g[ch] / m - xhat[base + j] * sum_gx[ch] / m);
                               } else {
                                 g[base + j] += k * node.grad[base + j];
                               }
                             }
                           }
                       }
                       if (node.parents[1]->requires_grad) {
                         Tensor& g = node.parents[1]->grad_buffer();
                         for (std::size_t ch = 0; ch < c; ++ch) g[ch] += sum_gx[ch];
                       }
                       if (node.parents[2]->requires_grad) {
                         Tensor& g = node.parents[2]->grad_buffer();
                         for (std::size_t ch = 0; ch < c; ++ch) g[ch] += sum_g[ch];
                       }
                     });
}

Var max_pool3d(const Var& x, std::size_t kernel, std::size_t stride, std::size_t pad) {
  const Shape& xs = x.shape();
  if (xs.size() != 5) throw DimensionError("max_pool3d: expects 5-D input");
  const std::size_t nc = xs[0] * xs[1], d = xs[2], h = xs[3], w = xs[4];
  const std::size_t od = conv_out_size(d, kernel, stride, pad), oh = conv_out_size(h, kernel, stride, pad),
                    ow = conv_out_size(w, kernel, stride, pad);
  if (od == 0 || oh == 0 || ow == 0) throw DimensionError("max_pool3d: input " + shape_str(xs) + " too small");
  Tensor out({xs[0], xs[1], od, oh, ow});
  std::vector<std::size_t> arg(out.size());
  const auto lo = [&](std::size_t o) { return static_cast<std::ptrdiff_t>(o * stride) - static_cast<std::ptrdiff_t>(pad); };
  for (std::size_t q = 0; q < nc; ++q) {
    const double* src = x.value().data() + q * d * h * w;
    for (std::size_t z = 0; z < od; ++z)
      for (std::size_t y = 0; y < oh; ++y)
        for (std::size_t xx = 0; xx < ow; ++xx) {
          double best = -std::numeric_limits<double>::infinity();
          std::size_t best_i = 0;
          for (std::ptrdiff_t iz = std::max<std::ptrdiff_t>(lo(z), 0); iz < std::min<std::ptrdiff_t>(lo(z) + static_cast<std::ptrdiff_t>(kernel), static_cast<std::ptrdiff_t>(d)); ++iz)
            for (std::ptrdiff_t iy = std::max<std::ptrdiff_t>(lo(y), 0); iy < std::min<std::ptrdiff_t>(lo(y) + static_cast<std::ptrdiff_t>(kernel), static_cast<std::ptrdiff_t>(h)); ++iy)
              for (std::ptrdiff_t ix = std::max<std::ptrdiff_t>(lo(xx), 0); ix < std::min<std::ptrdiff_t>(lo(xx) + static_cast<std::ptrdiff_t>(kernel), static_cast<std::ptrdiff_t>(w)); ++ix) {
                const std::size_t idx = (static_cast<std::size_t>(iz) * h + static_cast<std::size_t>(iy)) * w + static_cast<std::size_t>(ix);
                if (src[idx] > best) {
                  best = src[idx];
                  best_i = idx;
                }
              }
          const std::size_t o = ((q * od + z) * oh + y) * ow + xx;
          out[o] = best;
          arg[o] = q * d * h * w + best_i;
        }
  }
  if (std::uint64_t* digest = branch_digest()) {
    for (std::size_t a : arg) *digest = splitmix64(*digest ^ a);
  }
  return make_result(std::move(out), {x}, [arg = std::move(arg)](Node& node) {
    if (!node.parents[0]->requires_grad) return;
    Tensor& g = node.parents[0]->grad_buffer();
    for (std::size_t o = 0; o < arg.size(); ++o) g[arg[o]] += node.grad[o];
  });
}

Var global_avg_pool(const Var& x) {
  const Shape& xs = x.shape();
  if (xs.size() < 3) throw DimensionError("global_avg_pool: expects [N, C, spatial...]");
  const std::size_t n = xs[0], c = xs[1], sp = spatial_size(xs);
  Tensor out({n, c});
  for (std::size_t q = 0; q < n * c; ++q) {
    double s = 0.0;
    for (std::size_t j = 0; j < sp; ++j) s += x.value()[q * sp + j];
    out[q] = s / static_cast<double>(sp);
  }
  return make_result(std::move(out), {x}, [n, c, sp](Node& node) {
    if (!node.parents[0]->requires_grad) return;
    Tensor& g = node.parents[0]->grad_buffer();
    for (std::size_t q = 0; q < n * c; ++q) {
      const double v = node.grad[q] / static_cast<double>(sp);
      for (std::size_t j = 0; j < sp; ++j) g[q * sp + j] += v;
    }
  });
}

}  // namespace volcap::ag
