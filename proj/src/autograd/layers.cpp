// Copyright 2026 The volcap Authors
// SPDX-License-Identifier: Apache-2.0

#include "volcap/autograd/layers.hpp"

#include <cmath>

#include "volcap/error.hpp"

namespace volcap::ag {
namespace {

Tensor normal_tensor(Shape shape, double stddev, Rng& rng) {
  Tensor t(std::move(shape));
  for (double& v : t.values()) v = rng.normal() * stddev;
  return t;
}

}  // namespace

Linear::Linear(std::size_t in, std::size_t out, Rng& rng, double init_std, bool bias) {
  const double sd = init_std > 0.0 ? init_std : 1.0 / std::sqrt(static_cast<double>(in));
  weight_ = parameter(normal_tensor({in, out}, sd, rng));
  if (bias) bias_ = parameter(Tensor({out}, 0.0));
}

Var Linear::forward(const Var& x) const {
  Var y = matmul(x, weight_);
  return bias_.defined() ? add_bias(y, bias_) : y;
}

void Linear::visit_parameters(const std::string& prefix, std::vector<NamedParam>& out) const {
  out.push_back({join_name(prefix, "weight"), weight_});
  if (bias_.defined()) out.push_back({join_name(prefix, "bias"), bias_});
}

LayerNorm::LayerNorm(std::size_t n) : gamma_(parameter(Tensor({n}, 1.0))), beta_(parameter(Tensor({n}, 0.0))) {}

void LayerNorm::visit_parameters(const std::string& prefix, std::vector<NamedParam>& out) const {
  out.push_back({join_name(prefix, "gamma"), gamma_});
  out.push_back({join_name(prefix, "beta"), beta_});
}

BatchNorm::BatchNorm(std::size_t channels)
    : gamma_(parameter(Tensor({channels}, 1.0))), beta_(parameter(Tensor({channels}, 0.0))) {
  state_.running_mean = Tensor({channels}, 0.0);
  state_.running_var = Tensor({channels}, 1.0);
}

Var BatchNorm::forward(const Var& x) { return batch_norm(x, gamma_, beta_, state_, training_); }

void BatchNorm::visit_parameters(const std::string& prefix, std::vector<NamedParam>& out) const {
  out.push_back({join_name(prefix, "gamma"), gamma_});
  out.push_back({join_name(prefix, "beta"), beta_});
}

void BatchNorm::visit_buffers(const std::string& prefix, std::vector<NamedBuffer>& out) {
  out.push_back({join_name(prefix, "running_mean"), &state_.running_mean});
  out.push_back({join_name(prefix, "running_var"), &state_.running_var});
}

Conv3d::Conv3d(std::size_t in, std::size_t out, std::size_t kernel, std::size_t stride, std::size_t pad, Rng& rng)
    : stride_(stride), pad_(pad) {
  const double fan_in = static_cast<double>(in * kernel * kernel * kernel);
  weight_ = parameter(normal_tensor({out, in, kernel, kernel, kernel}, std::sqrt(2.0 / fan_in), rng));
}

void Conv3d::visit_parameters(const std::string& prefix, std::vector<NamedParam>& out) const {
  out.push_back({join_name(prefix, "weight"), weight_});
}

SelfAttention::SelfAttention(std::size_t dim, std::size_t heads, Rng& rng, double init_std)
    : heads_(heads), qkv_(dim, 3 * dim, rng, init_std), proj_(dim, dim, rng, init_std) {
  if (heads == 0 || dim % heads != 0) {
    throw ConfigError("attention width " + std::to_string(dim) + " is not divisible by " + std::to_string(heads) + " heads");
  }
}

Var SelfAttention::forward(const Var& x, bool causal) const {
  const std::size_t d = x.dim(1);
  const std::size_t hd = d / heads_;
  const double inv_sqrt = 1.0 / std::sqrt(static_cast<double>(hd));
  Var qkv = qkv_.forward(x);
  std::vector<Var> outs;
  outs.reserve(heads_);
  for (std::size_t h = 0; h < heads_; ++h) {
    Var q = slice_cols(qkv, h * hd, hd);
    Var k = slice_cols(qkv, d + h * hd, hd);
    Var v = slice_cols(qkv, 2 * d + h * hd, hd);
    Var att = softmax_rows(scale(matmul(q, transpose(k)), inv_sqrt), causal);
    outs.push_back(matmul(att, v));
  }
  return proj_.forward(heads_ == 1 ? outs.front() : concat_cols(outs));
}

void SelfAttention::visit_parameters(const std::string& prefix, std::vector<NamedParam>& out) const {
  qkv_.visit_parameters(join_name(prefix, "qkv"), out);
  proj_.visit_parameters(join_name(prefix, "proj"), out);
}

TransformerBlock::TransformerBlock(std::size_t dim, std::size_t heads, std::size_t mlp_hidden, Rng& rng, double init_std)
    : ln1_(dim), attn_(dim, heads, rng, init_std), ln2_(dim), fc1_(dim, mlp_hidden, rng, init_std),
      fc2_(mlp_hidden, dim, rng, init_std) {}

Var TransformerBlock::forward(const Var& x, bool causal) const {
  Var h = add(x, attn_.forward(ln1_.forward(x), causal));
  return add(h, fc2_.forward(gelu(fc1_.forward(ln2_.forward(h)))));
}

void TransformerBlock::visit_parameters(const std::string& prefix, std::vector<NamedParam>& out) const {
  ln1_.visit_parameters(join_name(prefix, "ln1"), out);
  attn_.visit_parameters(join_name(prefix, "attn"), out);
  ln2_.visit_parameters(join_name(prefix, "ln2"), out);
  fc1_.visit_parameters(join_name(prefix, "fc1"), out);
  fc2_.visit_parameters(join_name(prefix, "fc2"), out);
}

}  // namespace volcap::ag
