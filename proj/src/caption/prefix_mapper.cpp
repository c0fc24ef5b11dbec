// Copyright 2026 The volcap Authors
// SPDX-License-Identifier: Apache-2.0

#include "volcap/caption/prefix_mapper.hpp"

#include <cmath>

#include "volcap/error.hpp"

namespace volcap::caption {

using ag::Var;
using nlohmann::json;

void PrefixMapperConfig::validate() const {
  if (input_dim == 0) throw ConfigError("prefix mapper: input_dim must be positive");
  if (prefix_length == 0) throw ConfigError("prefix mapper: prefix_length must be >= 1");
  if (lm_embed_dim == 0 || mapper_layers == 0 || mapper_hidden_dim == 0) {
    throw ConfigError("prefix mapper: dimensions must be positive");
  }
  if (mapper_heads == 0 || lm_embed_dim % mapper_heads != 0) {
    throw ConfigError("prefix mapper: lm_embed_dim " + std::to_string(lm_embed_dim) + " is not divisible by " +
                      std::to_string(mapper_heads) + " heads");
  }
}

PrefixMapperConfig PrefixMapperConfig::from_json(const json& j) {
  PrefixMapperConfig c;
  try {
    c.input_dim = j.value("input_dim", c.input_dim);
    c.prefix_length = j.value("prefix_length", c.prefix_length);
    c.lm_embed_dim = j.value("lm_embed_dim", c.lm_embed_dim);
    c.mapper_layers = j.value("mapper_layers", c.mapper_layers);
    c.mapper_heads = j.value("mapper_heads", c.mapper_heads);
    c.mapper_hidden_dim = j.value("mapper_hidden_dim", c.mapper_hidden_dim);
    c.seed = j.value("seed", c.seed);
  } catch (const json::exception& e) {
    throw ConfigError(std::string("prefix mapper config: ") + e.what());
  }
  c.validate();
  return c;
}

json PrefixMapperConfig::to_json() const {
  return {{"input_dim", input_dim},         {"prefix_length", prefix_length}, {"lm_embed_dim", lm_embed_dim},
          {"mapper_layers", mapper_layers}, {"mapper_heads", mapper_heads},   {"mapper_hidden_dim", mapper_hidden_dim},
          {"seed", seed}};
}

PrefixMapper::PrefixMapper(const PrefixMapperConfig& config) : config_(config) {
  config_.validate();
  Rng rng(config_.seed);
  project_ = ag::Linear(config_.input_dim, config_.prefix_length * config_.lm_embed_dim, rng);
  Tensor q({config_.prefix_length, config_.lm_embed_dim});
  for (double& v : q.values()) v = rng.normal();
  queries_ = ag::parameter(std::move(q));
  for (std::size_t i = 0; i < config_.mapper_layers; ++i) {
    blocks_.emplace_back(config_.lm_embed_dim, config_.mapper_heads, config_.mapper_hidden_dim, rng);
  }
}

Var PrefixMapper::forward(std::span<const double> embedding) const {
  if (embedding.size() != config_.input_dim) {
    throw DimensionError("prefix mapper: embedding length " + std::to_string(embedding.size()) + " != " +
                         std::to_string(config_.input_dim));
  }
  const std::size_t k = config_.prefix_length, d = config_.lm_embed_dim;
  const Var e = ag::constant(Tensor({1, embedding.size()}, std::vector<double>(embedding.begin(), embedding.end())));
  Var x = ag::concat_rows({ag::reshape(project_.forward(e), {k, d}), queries_});
  for (const auto& block : blocks_) x = block.forward(x, false);
  return ag::slice_rows(x, k, k);
}

void PrefixMapper::visit_parameters(const std::string& prefix, std::vector<ag::NamedParam>& out) const {
  project_.visit_parameters(ag::join_name(prefix, "project"), out);
  out.push_back({ag::join_name(prefix, "queries"), queries_});
  for (std::size_t i = 0; i < blocks_.size(); ++i) {
    blocks_[i].visit_parameters(ag::join_name(prefix, "block" + std::to_string(i)), out);
  }
}

Tensor encode_prefix(const PrefixMapper& mapper, std::span<const double> embedding) {
  ag::NoGradGuard guard;
  return mapper.forward(embedding).value();
}

}  // namespace volcap::caption
