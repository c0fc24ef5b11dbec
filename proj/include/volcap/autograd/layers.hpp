// Copyright 2026 The volcap Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstddef>

#include "volcap/autograd/conv_ops.hpp"
#include "volcap/autograd/module.hpp"
#include "volcap/autograd/ops.hpp"
#include "volcap/rng.hpp"

namespace volcap::ag {

/// y = x W + b with W: [in, out].
class Linear : public Module {
 public:
  Linear() = default;
  /// Weights ~ N(0, init_std^2); init_std <= 0 selects 1/sqrt(in).
  Linear(std::size_t in, std::size_t out, Rng& rng, double init_std = 0.0, bool bias = true);
  Var forward(const Var& x) const;
  void visit_parameters(const std::string& prefix, std::vector<NamedParam>& out) const override;

  std::size_t in_features() const { return weight_.dim(0); }
  std::size_t out_features() const { return weight_.dim(1); }
  const Var& weight() const { return weight_; }

 private:
  Var weight_;
  Var bias_;
};

class LayerNorm : public Module {
 public:
  LayerNorm() = default;
  explicit LayerNorm(std::size_t n);
  Var forward(const Var& x) const { return layer_norm(x, gamma_, beta_); }
  void visit_parameters(const std::string& prefix, std::vector<NamedParam>& out) const override;

 private:
  Var gamma_;
  Var beta_;
};

class BatchNorm : public Module {
 public:
  BatchNorm() = default;
  explicit BatchNorm(std::size_t channels);
  Var forward(const Var& x);
  void visit_parameters(const std::string& prefix, std::vector<NamedParam>& out) const override;
  void visit_buffers(const std::string& prefix, std::vector<NamedBuffer>& out) override;
  BatchNormState& norm_state() { return state_; }

 private:
  Var gamma_;
  Var beta_;
  BatchNormState state_;
};

/// Bias-free cubic 3-D convolution, Kaiming-normal init.
class Conv3d : public Module {
 public:
  Conv3d() = default;
  Conv3d(std::size_t in, std::size_t out, std::size_t kernel, std::size_t stride, std::size_t pad, Rng& rng);
  Var forward(const Var& x) const { return conv3d(x, weight_, stride_, pad_); }
  void visit_parameters(const std::string& prefix, std::vector<NamedParam>& out) const override;
  std::size_t kernel() const { return weight_.dim(2); }
  std::size_t stride() const { return stride_; }
  std::size_t pad() const { return pad_; }

 private:
  Var weight_;
  std::size_t stride_ = 1;
  std::size_t pad_ = 0;
};

/// Multi-head self-attention over a [T, d] sequence.
class SelfAttention : public Module {
 public:
  SelfAttention() = default;
  SelfAttention(std::size_t dim, std::size_t heads, Rng& rng, double init_std = 0.0);
  Var forward(const Var& x, bool causal) const;
  void visit_parameters(const std::string& prefix, std::vector<NamedParam>& out) const override;

 private:
  std::size_t heads_ = 1;
  Linear qkv_;
  Linear proj_;
};

/// Pre-norm transformer block: x + attn(ln(x)), then x + mlp(ln(x)).
class TransformerBlock : public Module {
 public:
  TransformerBlock() = default;
  TransformerBlock(std::size_t dim, std::size_t heads, std::size_t mlp_hidden, Rng& rng, double init_std = 0.0);
  Var forward(const Var& x, bool causal) const;
  void visit_parameters(const std::string& prefix, std::vector<NamedParam>& out) const override;

 private:
  LayerNorm ln1_;
  SelfAttention attn_;
  LayerNorm ln2_;
  Linear fc1_;
  Linear fc2_;
};

}  // namespace volcap::ag
