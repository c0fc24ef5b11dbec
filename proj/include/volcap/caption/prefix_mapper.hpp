// Copyright 2026 The volcap Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstdint>
#include <span>
#include <vector>

#include "json.hpp"
#include "volcap/autograd/layers.hpp"
#include "volcap/tensor.hpp"

namespace volcap::caption {

struct PrefixMapperConfig {
  std::size_t input_dim = 1536;
  std::size_t prefix_length = 10;
  std::size_t lm_embed_dim = 768;
  std::size_t mapper_layers = 4;
  std::size_t mapper_heads = 8;
  /// Width of the feed-forward layer inside each mapper block.
  std::size_t mapper_hidden_dim = 512;
  std::uint64_t seed = 0;

  void validate() const;
  static PrefixMapperConfig from_json(const nlohmann::json& j);
  nlohmann::json to_json() const;
};

/// Embedding -> K prefix vectors. The embedding is projected to K slots,
/// K learned query vectors are appended, the 2K rows pass through a
/// bidirectional transformer, and the query rows are the output.
class PrefixMapper : public ag::Module {
 public:
  explicit PrefixMapper(const PrefixMapperConfig& config);

  /// [K, d_lm] as part of the graph.
  ag::Var forward(std::span<const double> embedding) const;
  const PrefixMapperConfig& config() const { return config_; }
  void visit_parameters(const std::string& prefix, std::vector<ag::NamedParam>& out) const override;

 private:
  PrefixMapperConfig config_;
  ag::Linear project_;
  ag::Var queries_;
  std::vector<ag::TransformerBlock> blocks_;
};

/// Inference-mode prefix, shape (K, d_lm).
Tensor encode_prefix(const PrefixMapper& mapper, std::span<const double> embedding);

}  // namespace volcap::caption
