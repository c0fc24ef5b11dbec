// Copyright 2026 The volcap Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstdint>
#include <istream>
#include <ostream>
#include <memory>
#include <span>
#include <string>
#include <vector>

#include "json.hpp"
#include "volcap/autograd/layers.hpp"
#include "volcap/tensor.hpp"

namespace volcap::caption {

/// Next-token scorer conditioned on a K x d prefix followed by token ids.
/// Logits may depend only on that left context.
class DecoderLM {
 public:
  virtual ~DecoderLM() = default;
  virtual std::size_t vocab_size() const = 0;
  virtual std::size_t embed_dim() const = 0;
  virtual std::vector<double> next_logits(const Tensor& prefix, std::span<const int> tokens) const = 0;
};

/// A DecoderLM that exposes a graph for training.
class DifferentiableLM : public DecoderLM {
 public:
  /// Logits for every position of prefix ++ embed(tokens): [K + T, V].
  virtual ag::Var forward_logits(const ag::Var& prefix, std::span<const int> tokens) const = 0;
  virtual std::vector<ag::Var> lm_parameters() const = 0;

  std::vector<double> next_logits(const Tensor& prefix, std::span<const int> tokens) const override;
};

struct TinyLMConfig {
  std::size_t vocab_size = 0;
  std::size_t embed_dim = 32;
  std::size_t layers = 2;
  std::size_t heads = 4;
  std::size_t mlp_hidden = 64;
  std::size_t max_positions = 64;
  std::uint64_t seed = 0;

  void validate() const;
  static TinyLMConfig from_json(const nlohmann::json& j);
  nlohmann::json to_json() const;
};

/// GPT-style decoder: token + learned position embeddings, pre-LN causal
/// blocks, final LN, output tied to the token embedding.
class TinyLM : public DifferentiableLM, public ag::Module {
 public:
  explicit TinyLM(const TinyLMConfig& config);

  std::size_t vocab_size() const override { return config_.vocab_size; }
  std::size_t embed_dim() const override { return config_.embed_dim; }
  ag::Var forward_logits(const ag::Var& prefix, std::span<const int> tokens) const override;
  std::vector<ag::Var> lm_parameters() const override { return parameters(); }
  void visit_parameters(const std::string& prefix, std::vector<ag::NamedParam>& out) const override;
  const TinyLMConfig& config() const { return config_; }

 private:
  TinyLMConfig config_;
  ag::Var token_emb_;
  ag::Var pos_emb_;
  std::vector<ag::TransformerBlock> blocks_;
  ag::LayerNorm final_ln_;
};

/// Adapter for a language model hosted by another process. Each request
/// writes two VCT1 tensors to the child's stdin (the K x d prefix, then the
/// token ids as a float64 vector); the child answers with one VCT1 vector of
/// vocab_size logits on stdout. Inference only.
class ProcessLM : public DecoderLM {
 public:
  ProcessLM(std::vector<std::string> command, std::size_t vocab_size, std::size_t embed_dim);
  ~ProcessLM() override;
  ProcessLM(const ProcessLM&) = delete;
  ProcessLM& operator=(const ProcessLM&) = delete;

  std::size_t vocab_size() const override { return vocab_size_; }
  std::size_t embed_dim() const override { return embed_dim_; }
  std::vector<double> next_logits(const Tensor& prefix, std::span<const int> tokens) const override;
  const std::vector<std::string>& command() const { return command_; }

 private:
  std::vector<std::string> command_;
  std::size_t vocab_size_;
  std::size_t embed_dim_;
  int pid_ = -1;
  int to_child_fd_ = -1;
  int from_child_fd_ = -1;
};

/// Serves `lm` over the same protocol until `in` reaches EOF.
void serve_lm(const DecoderLM& lm, std::istream& in, std::ostream& out);

}  // namespace volcap::caption
