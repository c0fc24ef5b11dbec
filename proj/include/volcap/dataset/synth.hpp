// Copyright 2026 The volcap Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <string>
#include <vector>

#include "json.hpp"
#include "volcap/dataset/types.hpp"

namespace volcap::dataset {

enum class PlantedMapping { kLinear, kConvFriendly };

/// Generator settings for synthetic subjects. Captions come from a small
/// template grammar: the noun, adjective and verb are the argmax over
/// consecutive blocks of the stimulus embedding, so the caption is a function
/// of the embedding.
struct SynthConfig {
  std::string subject_id = "synth";
  Shape volume_shape = {12, 12, 12};
  double roi_density = 0.3;
  std::size_t roi_voxels = 0;  // exact ROI size when nonzero; overrides roi_density
  std::size_t n_train_stimuli = 16;
  std::size_t n_test_stimuli = 4;
  std::size_t train_repetitions = 1;
  std::size_t test_repetitions = 3;
  std::size_t embedding_dim = 16;
  std::size_t captions_per_stimulus = 3;
  std::vector<std::string> nouns = {"dog", "cat", "train", "pizza"};
  std::vector<std::string> adjectives = {"red", "small", "wooden"};
  std::vector<std::string> verbs = {"sitting", "running", "parked"};
  PlantedMapping mapping = PlantedMapping::kLinear;
  double noise_std = 0.0;        // trial noise inside the ROI / signal region
  double background_std = 0.1;   // voxels outside the ROI (linear mapping)
  double signal_scale = 1.0;

  void validate() const;
  static SynthConfig from_json(const nlohmann::json& j);
  nlohmann::json to_json() const;
};

/// Ground truth kept next to a synthetic bundle so tests can score recovery.
struct PlantedTruth {
  PlantedMapping mapping = PlantedMapping::kLinear;
  /// linear: E x V loading matrix (ROI betas = embedding * weights + offset);
  /// conv-friendly: E x (W*D*H) blob patterns.
  Tensor weights;
  Tensor offsets;  // per-ROI-voxel baseline (linear); empty otherwise
  std::map<std::string, std::string> true_captions;

  bool operator==(const PlantedTruth&) const = default;
};

struct SynthResult {
  DatasetBundle bundle;
  PlantedTruth planted;
};

SynthResult synth_generate(const SynthConfig& config, std::uint64_t seed);

/// Caption templates keyed to an embedding (first one is the canonical caption).
std::vector<std::string> synth_captions(const SynthConfig& config, const std::vector<double>& embedding);

/// Writes the bundle plus planted/planted.json and planted/weights.vct.
std::filesystem::path write_synth(const SynthResult& result, const std::filesystem::path& dir);
PlantedTruth load_planted(const std::filesystem::path& bundle_dir);

}  // namespace volcap::dataset
