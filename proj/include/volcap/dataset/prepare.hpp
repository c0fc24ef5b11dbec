// Copyright 2026 The volcap Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <filesystem>
#include <map>
#include <string>
#include <vector>

#include "volcap/dataset/normalize.hpp"
#include "volcap/dataset/types.hpp"

namespace volcap::dataset {

struct PrepareOptions {
  NormMode mode = NormMode::kZScore;
  MinMaxScope minmax_scope = MinMaxScope::kGlobal;
  bool average_test_repetitions = true;
  /// Scale every target embedding to unit L2 norm (off: raw embeddings).
  bool l2_normalize_targets = false;
};

/// Row-aligned model inputs and target embeddings for one split.
/// zscore: x is N x V (ROI-linearized); minmax: x is N x W x D x H.
struct PreparedSplit {
  Tensor x;
  Tensor y;
  std::vector<std::string> stimulus_ids;
  std::vector<std::string> trial_ids;
  bool operator==(const PreparedSplit&) const = default;
};

struct PreparedData {
  std::string subject_id;
  Shape volume_shape;
  NormStats stats;
  PreparedSplit train;
  PreparedSplit test;
  std::map<std::string, std::vector<std::string>> captions;
  bool operator==(const PreparedData&) const = default;
};

/// Fits normalization on the train split only and applies it to both splits.
/// Train trials stay one row per trial; test repetitions are averaged per
/// stimulus unless disabled.
PreparedData prepare(const DatasetBundle& bundle, const PrepareOptions& options);

void write_prepared(const PreparedData& data, const std::filesystem::path& dir);
PreparedData read_prepared(const std::filesystem::path& dir);

}  // namespace volcap::dataset
