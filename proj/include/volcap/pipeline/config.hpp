// Copyright 2026 The volcap Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "json.hpp"
#include "volcap/autograd/optim.hpp"
#include "volcap/caption/captioner.hpp"
#include "volcap/dataset/normalize.hpp"
#include "volcap/metrics/report.hpp"

namespace volcap::pipeline {

enum class MapperKind { kRidge, kLinear, kShallow, kWide };
std::string to_string(MapperKind k);
MapperKind parse_mapper_kind(const std::string& s);
/// Column label used in the comparison tables ("Ridge", "Shallow CNN", ...).
std::string display_name(MapperKind k);
bool is_volumetric(MapperKind k);

struct PreprocessStageConfig {
  /// Unset: zscore for flat mappers, minmax for conv mappers.
  std::optional<dataset::NormMode> mode;
  dataset::MinMaxScope minmax_scope = dataset::MinMaxScope::kGlobal;
  bool average_test_repetitions = true;
  bool l2_normalize_targets = false;

  static PreprocessStageConfig from_json(const nlohmann::json& j);
  nlohmann::json to_json() const;
};

struct BrainStageConfig {
  MapperKind mapper = MapperKind::kWide;
  /// Unset: chosen by k-fold cross-validation over `lambda_grid`.
  std::optional<double> lambda;
  std::vector<double> lambda_grid;  // empty: default grid
  std::size_t cv_folds = 5;
  ag::TrainConfig train;
  /// Merged over the variant's defaults (input shape and E come from the data).
  nlohmann::json conv = nlohmann::json::object();

  static BrainStageConfig from_json(const nlohmann::json& j);
  nlohmann::json to_json() const;
};

struct CaptionStageConfig {
  /// Partial PrefixMapperConfig; input_dim comes from the data.
  nlohmann::json mapper = nlohmann::json::object();
  /// Partial TinyLMConfig; vocab_size comes from the caption corpus.
  nlohmann::json lm = nlohmann::json::object();
  bool freeze_lm = true;
  ag::TrainConfig train;

  /// The LM width fixes the prefix width.
  caption::TinyLMConfig lm_config(std::size_t vocab_size, std::uint64_t seed) const;
  caption::PrefixMapperConfig mapper_config(std::size_t input_dim, std::size_t lm_embed_dim,
                                            std::uint64_t seed) const;

  static CaptionStageConfig from_json(const nlohmann::json& j);
  nlohmann::json to_json() const;
};

struct EvaluateStageConfig {
  /// "stub" or a directory holding sentence/, clip_b/ and clip_l/ text stores.
  std::string encoders = "stub";
  bool meteor_stem = false;

  /// A relative encoder directory resolves against `base_dir`.
  static EvaluateStageConfig from_json(const nlohmann::json& j, const std::filesystem::path& base_dir = {});
  nlohmann::json to_json() const;
};

struct RunConfig {
  std::vector<std::string> subjects{"sub1", "sub2", "sub5", "sub7"};
  /// subject -> bundle manifest.
  std::map<std::string, std::filesystem::path> data;
  std::filesystem::path run_dir;
  std::uint64_t seed = 0;
  PreprocessStageConfig preprocess;
  BrainStageConfig brain;
  CaptionStageConfig caption;
  caption::DecodeConfig decode;
  metrics::Protocol protocol = metrics::Protocol::kVsCoco;
  EvaluateStageConfig evaluate;

  dataset::NormMode norm_mode() const;
  /// Throws ConfigError. Paths are checked when a stage starts, not here.
  void validate() const;

  /// Unknown keys anywhere are rejected. Relative paths resolve against `base_dir`.
  static RunConfig from_json(const nlohmann::json& j, const std::filesystem::path& base_dir = {});
  nlohmann::json to_json() const;
};

RunConfig load_run_config(const std::filesystem::path& path);

/// VOLCAP_SEED, when set, replaces cfg.seed.
void apply_env_overrides(RunConfig& cfg);

/// Independent seed for one consumer of the run seed.
std::uint64_t derive_seed(std::uint64_t seed, std::string_view tag);

/// Top-level keys accepted by RunConfig::from_json.
const std::vector<std::string>& run_config_keys();

}  // namespace volcap::pipeline
