// Copyright 2026 The volcap Authors
// SPDX-License-Identifier: Apache-2.0

#include "volcap/autograd/ops.hpp"

#include <Eigen/Dense>
#include <algorithm>
#include <cmath>
#include <limits>

#include "volcap/error.hpp"
#include "volcap/hash.hpp"

namespace volcap::ag {
namespace {

using RowMat = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using MapMat = Eigen::Map<RowMat>;
using CMapMat = Eigen::Map<const RowMat>;

void same_shape(const Var& a, const Var& b, const char* op) {
  if (a.shape() != b.shape()) {
    throw DimensionError(std::string(op) + ": shape " + shape_str(a.shape()) + " vs " + shape_str(b.shape()));
  }
}

void require_rank(const Var& a, std::size_t r, const char* op) {
  if (a.value().rank() != r) {
    throw DimensionError(std::string(op) + ": expected rank " + std::to_string(r) + ", got " + shape_str(a.shape()));
  }
}

// Accumulates g into parent i's gradient if it participates.
template <typename F>
void into(Node& n, std::size_t i, F&& fn) {
  Node& p = *n.parents[i];
  if (p.requires_grad) fn(p.grad_buffer());
}

}  // namespace

Var add(const Var& a, const Var& b) {
  same_shape(a, b, "add");
  Tensor out = a.value();
  for (std::size_t i = 0; i < out.size(); ++i) out[i] += b.value()[i];
  return make_result(std::move(out), {a, b}, [](Node& n) {
    for (std::size_t k = 0; k < 2; ++k)
      into(n, k, [&](Tensor& g) {
        for (std::size_t i = 0; i < g.size(); ++i) g[i] += n.grad[i];
      });
  });
}

Var sub(const Var& a, const Var& b) {
  same_shape(a, b, "sub");
  Tensor out = a.value();
  for (std::size_t i = 0; i < out.size(); ++i) out[i] -= b.value()[i];
  return make_result(std::move(out), {a, b}, [](Node& n) {
    into(n, 0, [&](Tensor& g) {
      for (std::size_t i = 0; i < g.size(); ++i) g[i] += n.grad[i];
    });
    into(n, 1, [&](Tensor& g) {
      for (std::size_t i = 0; i < g.size(); ++i) g[i] -= n.grad[i];
    });
  });
}

Var mul(const Var& a, const Var& b) {
  same_shape(a, b, "mul");
  Tensor out = a.value();
  for (std::size_t i = 0; i < out.size(); ++i) out[i] *= b.value()[i];
  return make_result(std::move(out), {a, b}, [](Node& n) {
    const Tensor& av = n.parents[0]->value;
    const Tensor& bv = n.parents[1]->value;
    into(n, 0, [&](Tensor& g) {
      for (std::size_t i = 0; i < g.size(); ++i) g[i] += n.grad[i] * bv[i];
    });
    into(n, 1, [&](Tensor& g) {
      for (std::size_t i = 0; i < g.size(); ++i) g[i] += n.grad[i] * av[i];
    });
  });
}

Var scale(const Var& a, double s) {
  Tensor out = a.value();
  for (double& v : out.values()) v *= s;
  return make_result(std::move(out), {a}, [s](Node& n) {
    into(n, 0, [&](Tensor& g) {
      for (std::size_t i = 0; i < g.size(); ++i) g[i] += n.grad[i] * s;
    });
  });
}

Var add_bias(const Var& a, const Var& bias) {
  require_rank(bias, 1, "add_bias");
  const std::size_t n = bias.dim(0);
  if (a.value().rank() == 0 || a.shape().back() != n) throw DimensionError("add_bias: trailing dim mismatch");
  Tensor out = a.value();
  for (std::size_t i = 0; i < out.size(); ++i) out[i] += bias.value()[i % n];
  return make_result(std::move(out), {a, bias}, [n](Node& node) {
    into(node, 0, [&](Tensor& g) {
      for (std::size_t i = 0; i < g.size(); ++i) g[i] += node.grad[i];
    });
    into(node, 1, [&](Tensor& g) {
      for (std::size_t i = 0; i < node.grad.size(); ++i) g[i % n] += node.grad[i];
    });
  });
}

Var relu(const Var& a) {
  Tensor out = a.value();
  for (double& v : out.values()) v = v > 0.0 ? v : 0.0;
  if (std::uint64_t* d = branch_digest()) {
    std::uint64_t word = 0;
    for (std::size_t i = 0; i < out.size(); ++i) {
      word = (word << 1) | (out[i] > 0.0 ? 1 : 0);
      if (i % 64 == 63 || i + 1 == out.size()) {
        *d = splitmix64(*d ^ word);
        word = 0;
      }
    }
  }
  return make_result(std::move(out), {a}, [](Node& n) {
    const Tensor& x = n.parents[0]->value;
    into(n, 0, [&](Tensor& g) {
      for (std::size_t i = 0; i < g.size(); ++i) g[i] += x[i] > 0.0 ? n.grad[i] : 0.0;
    });
  });
}

Var gelu(const Var& a) {
  constexpr double kC = 0.7978845608028654;  // sqrt(2/pi)
  constexpr double kA = 0.044715;
  Tensor out = a.value();
  for (double& v : out.values()) v = 0.5 * v * (1.0 + std::tanh(kC * (v + kA * v * v * v)));
  return make_result(std::move(out), {a}, [](Node& n) {
    const Tensor& x = n.parents[0]->value;
    into(n, 0, [&](Tensor& g) {
      for (std::size_t i = 0; i < g.size(); ++i) {
        const double v = x[i];
        const double t = std::tanh(kC * (v + kA * v * v * v));
        const double dt = (1.0 - t * t) * kC * (1.0 + 3.0 * kA * v * v);
        g[i] += n.grad[i] * (0.5 * (1.0 + t) + 0.5 * v * dt);
      }
    });
  });
}

Var matmul(const Var& a, const Var& b) {
  require_rank(a, 2, "matmul");
  require_rank(b, 2, "matmul");
  const std::size_t m = a.dim(0), k = a.dim(1), n = b.dim(1);
  if (b.dim(0) != k) throw DimensionError("matmul: inner dims " + shape_str(a.shape()) + " x " + shape_str(b.shape()));
  Tensor out({m, n});
  MapMat(out.data(), m, n).noalias() = CMapMat(a.value().data(), m, k) * CMapMat(b.value().data(), k, n);
  return make_result(std::move(out), {a, b}, [m, k, n](Node& node) {
    CMapMat go(node.grad.data(), m, n);
    into(node, 0, [&](Tensor& g) {
      MapMat(g.data(), m, k).noalias() += go * CMapMat(node.parents[1]->value.data(), k, n).transpose();
    });
    into(node, 1, [&](Tensor& g) {
      MapMat(g.data(), k, n).noalias() += CMapMat(node.parents[0]->value.data(), m, k).transpose() * go;
    });
  });
}

Var transpose(const Var& a) {
  require_rank(a, 2, "transpose");
  const std::size_t m = a.dim(0), n = a.dim(1);
  Tensor out({n, m});
  MapMat(out.data(), n, m) = CMapMat(a.value().data(), m, n).transpose();
  return make_result(std::move(out), {a}, [m, n](Node& node) {
    into(node, 0, [&](Tensor& g) { MapMat(g.data(), m, n) += CMapMat(node.grad.data(), n, m).transpose(); });
  });
}

Var softmax_rows(const Var& a, bool causal) {
  require_rank(a, 2, "softmax_rows");
  const std::size_t m = a.dim(0), n = a.dim(1);
  Tensor out({m, n}, 0.0);
  for (std::size_t i = 0; i < m; ++i) {
    const std::size_t lim = causal ? std::min(n, i + 1) : n;
    const double* row = a.value().data() + i * n;
    double mx = -std::numeric_limits<double>::infinity();
    for (std::size_t j = 0; j < lim; ++j) mx = std::max(mx, row[j]);
    double z = 0.0;
    for (std::size_t j = 0; j < lim; ++j) z += (out[i * n + j] = std::exp(row[j] - mx));
    for (std::size_t j = 0; j < lim; ++j) out[i * n + j] /= z;
  }
  return make_result(std::move(out), {a}, [m, n](Node& node) {
    into(node, 0, [&](Tensor& g) {
      const Tensor& y = node.value;
      for (std::size_t i = 0; i < m; ++i) {
        double dot = 0.0;
        for (std::size_t j = 0; j < n; ++j) dot += node.grad[i * n + j] * y[i * n + j];
        for (std::size_t j = 0; j < n; ++j) g[i * n + j] += y[i * n + j] * (node.grad[i * n + j] - dot);
      }
    });
  });
}

Var layer_norm(const Var& x, const Var& gamma, const Var& beta, double eps) {
  require_rank(x, 2, "layer_norm");
  const std::size_t m = x.dim(0), n = x.dim(1);
  if (gamma.value().size() != n || beta.value().size() != n) throw DimensionError("layer_norm: affine size mismatch");
  Tensor out({m, n});
  Tensor xhat({m, n});
  std::vector<double> inv_std(m);
  for (std::size_t i = 0; i < m; ++i) {
    const double* row = x.value().data() + i * n;
    double mu = 0.0;
    for (std::size_t j = 0; j < n; ++j) mu += row[j];
    mu /= static_cast<double>(n);
    double var = 0.0;
    for (std::size_t j = 0; j < n; ++j) var += (row[j] - mu) * (row[j] - mu);
    var /= static_cast<double>(n);
    inv_std[i] = 1.0 / std::sqrt(var + eps);
    for (std::size_t j = 0; j < n; ++j) {
      xhat[i * n + j] = (row[j] - mu) * inv_std[i];
      out[i * n + j] = xhat[i * n + j] * gamma.value()[j] + beta.value()[j];
    }
  }
  return make_result(std::move(out), {x, gamma, beta},
                     [m, n, xhat = std::move(xhat), inv_std = std::move(inv_std)](Node& node) {
                       const Tensor& gam = node.parents[1]->value;
                       into(node, 0, [&](Tensor& g) {
                         for (std::size_t i = 0; i < m; ++i) {
                           double s1 = 0.0, s2 = 0.0;
                           for (std::size_t j = 0; j < n; ++j) {
                             const double d = node.grad[i * n + j] * gam[j];
                             s1 += d;
                             s2 += d * xhat[i * n + j];
                           }
                           const double inv_n = 1.0 / static_cast<double>(n);
                           for (std::size_t j = 0; j < n; ++j) {
                             const double d = node.grad[i * n + j] * gam[j];
                             g[i * n + j] += inv_std[i] * (d - inv_n * s1 - xhat[i * n + j] * inv_n * s2);
                           }
                         }
                       });
                       into(node, 1, [&](Tensor& g) {
                         for (std::size_t i = 0; i < m * n; ++i) g[i % n] += node.grad[i] * xhat[i];
                       });
                       into(node, 2, [&](Tensor& g) {
                         for (std::size_t i = 0; i < m * n; ++i) g[i % n] += node.grad[i];
                       });
                     });
}

Var embedding(const Var& table, std::span<const int> ids) {
  require_rank(table, 2, "embedding");
  const std::size_t v = table.dim(0), d = table.dim(1);
  std::vector<int> idx(ids.begin(), ids.end());
  Tensor out({idx.size(), d});
  for (std::size_t r = 0; r < idx.size(); ++r) {
    if (idx[r] < 0 || static_cast<std::size_t>(idx[r]) >= v) {
      throw DimensionError("embedding: token id " + std::to_string(idx[r]) + " outside vocabulary of " + std::to_string(v));
    }
    std::copy_n(table.value().data() + static_cast<std::size_t>(idx[r]) * d, d, out.data() + r * d);
  }
  return make_result(std::move(out), {table}, [idx = std::move(idx), d](Node& node) {
    into(node, 0, [&](Tensor& g) {
      for (std::size_t r = 0; r < idx.size(); ++r)
        for (std::size_t j = 0; j < d; ++j) g[static_cast<std::size_t>(idx[r]) * d + j] += node.grad[r * d + j];
    });
  });
}

Var concat_rows(const std::vector<Var>& parts) {
  if (parts.empty()) throw DimensionError("concat_rows: no inputs");
  const std::size_t n = parts.front().dim(1);
  std::size_t rows = 0;
  for (const auto& p : parts) {
    require_rank(p, 2, "concat_rows");
    if (p.dim(1) != n) throw DimensionError("concat_rows: column mismatch");
    rows += p.dim(0);
  }
  Tensor out({rows, n});
  std::size_t off = 0;
  for (const auto& p : parts) {
    std::copy(p.value().values().begin(), p.value().values().end(), out.data() + off);
    off += p.value().size();
  }
  return make_result(std::move(out), parts, [](Node& node) {
    std::size_t off = 0;
    for (std::size_t k = 0; k < node.parents.size(); ++k) {
      const std::size_t sz = node.parents[k]->value.size();
      into(node, k, [&](Tensor& g) {
        for (std::size_t i = 0; i < sz; ++i) g[i] += node.grad[off + i];
      });
      off += sz;
    }
  });
}

Var slice_rows(const Var& a, std::size_t start, std::size_t count) {
  require_rank(a, 2, "slice_rows");
  const std::size_t n = a.dim(1);
  if (start + count > a.dim(0)) throw DimensionError("slice_rows: range out of bounds");
  Tensor out({count, n});
  std::copy_n(a.value().data() + start * n, count * n, out.data());
  return make_result(std::move(out), {a}, [start, n](Node& node) {
    into(node, 0, [&](Tensor& g) {
      for (std::size_t i = 0; i < node.grad.size(); ++i) g[start * n + i] += node.grad[i];
    });
  });
}

Var concat_cols(const std::vector<Var>& parts) {
  if (parts.empty()) throw DimensionError("concat_cols: no inputs");
  const std::size_t m = parts.front().dim(0);
  std::size_t cols = 0;
  for (const auto& p : parts) {
    require_rank(p, 2, "concat_cols");
    if (p.dim(0) != m) throw DimensionError("concat_cols: row mismatch");
    cols += p.dim(1);
  }
  Tensor out({m, cols});
  std::size_t c0 = 0;
  for (const auto& p : parts) {
    const std::size_t w = p.dim(1);
    for (std::size_t i = 0; i < m; ++i) std::copy_n(p.value().data() + i * w, w, out.data() + i * cols + c0);
    c0 += w;
  }
  return make_result(std::move(out), parts, [m, cols](Node& node) {
    std::size_t c0 = 0;
    for (std::size_t k = 0; k < node.parents.size(); ++k) {
      const std::size_t w = node.parents[k]->value.dim(1);
      into(node, k, [&](Tensor& g) {
        for (std::size_t i = 0; i < m; ++i)
          for (std::size_t j = 0; j < w; ++j) g[i * w + j] += node.grad[i * cols + c0 + j];
      });
      c0 += w;
    }
  });
}

Var slice_cols(const Var& a, std::size_t start, std::size_t count) {
  require_rank(a, 2, "slice_cols");
  const std::size_t m = a.dim(0), n = a.dim(1);
  if (start + count > n) throw DimensionError("slice_cols: range out of bounds");
  Tensor out({m, count});
  for (std::size_t i = 0; i < m; ++i) std::copy_n(a.value().data() + i * n + start, count, out.data() + i * count);
  return make_result(std::move(out), {a}, [m, n, start, count](Node& node) {
    into(node, 0, [&](Tensor& g) {
      for (std::size_t i = 0; i < m; ++i)
        for (std::size_t j = 0; j < count; ++j) g[i * n + start + j] += node.grad[i * count + j];
    });
  });
}

Var reshape(const Var& a, Shape shape) {
  Tensor out = a.value().reshaped(std::move(shape));
  return make_result(std::move(out), {a}, [](Node& node) {
    into(node, 0, [&](Tensor& g) {
      for (std::size_t i = 0; i < g.size(); ++i) g[i] += node.grad[i];
    });
  });
}

Var sum(const Var& a) {
  double s = 0.0;
  for (double v : a.value().values()) s += v;
  return make_result(Tensor::scalar(s), {a}, [](Node& node) {
    into(node, 0, [&](Tensor& g) {
      for (double& v : g.values()) v += node.grad[0];
    });
  });
}

Var mean(const Var& a) { return scale(sum(a), 1.0 / static_cast<double>(a.value().size())); }

Var mse_loss(const Var& pred, const Tensor& target) {
  if (pred.shape() != target.shape()) {
    throw DimensionError("mse_loss: prediction " + shape_str(pred.shape()) + " vs target " + shape_str(target.shape()));
  }
  const double inv = 1.0 / static_cast<double>(target.size());
  double s = 0.0;
  for (std::size_t i = 0; i < target.size(); ++i) {
    const double d = pred.value()[i] - target[i];
    s += d * d;
  }
  return make_result(Tensor::scalar(s * inv), {pred}, [target, inv](Node& node) {
    into(node, 0, [&](Tensor& g) {
      const double go = node.grad[0];
      for (std::size_t i = 0; i < g.size(); ++i) g[i] += go * 2.0 * inv * (node.parents[0]->value[i] - target[i]);
    });
  });
}

std::vector<double> log_softmax(std::span<const double> logits) {
  double mx = -std::numeric_limits<double>::infinity();
  for (double v : logits) mx = std::max(mx, v);
  double z = 0.0;
  for (double v : logits) z += std::exp(v - mx);
  const double lse = mx + std::log(z);
  std::vector<double> out(logits.size());
  for (std::size_t i = 0; i < logits.size(); ++i) out[i] = logits[i] - lse;
  return out;
}

Var cross_entropy(const Var& logits, std::span<const int> targets) {
  require_rank(logits, 2, "cross_entropy");
  const std::size_t t = logits.dim(0), v = logits.dim(1);
  if (targets.size() != t) throw DimensionError("cross_entropy: one target per row required");
  if (t == 0) throw DimensionError("cross_entropy: no rows");
  Tensor probs({t, v});
  double loss = 0.0;
  std::vector<int> tgt(targets.begin(), targets.end());
  for (std::size_t r = 0; r < t; ++r) {
    if (tgt[r] < 0 || static_cast<std::size_t>(tgt[r]) >= v) {
      throw DimensionError("cross_entropy: token id " + std::to_string(tgt[r]) + " outside vocabulary of " + std::to_string(v));
    }
    const auto lp = log_softmax(std::span<const double>(logits.value().data() + r * v, v));
    loss -= lp[static_cast<std::size_t>(tgt[r])];
    for (std::size_t j = 0; j < v; ++j) probs[r * v + j] = std::exp(lp[j]);
  }
  const double inv = 1.0 / static_cast<double>(t);
  return make_result(Tensor::scalar(loss * inv), {logits}, [probs = std::move(probs), tgt = std::move(tgt), v, inv](Node& node) {
    into(node, 0, [&](Tensor& g) {
      const double go = node.grad[0] * inv;
      for (std::size_t r = 0; r < tgt.size(); ++r) {
        for (std::size_t j = 0; j < v; ++j) g[r * v + j] += go * probs[r * v + j];
        g[r * v + static_cast<std::size_t>(tgt[r])] -= go;
      }
    });
  });
}

}  // namespace volcap::ag
