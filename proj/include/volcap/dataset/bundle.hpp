// Copyright 2026 The volcap Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <filesystem>

#include "volcap/dataset/types.hpp"
#include "volcap/tensor_io.hpp"

namespace volcap::dataset {

/// Loads and validates a dataset manifest:
///   {subject_id, volume_shape:[W,D,H], mask_file,
///    trials:[{trial_id, stimulus_id, split, beta_file}],
///    stimuli:[{stimulus_id, embedding_file, captions:[...]}]}
/// File paths are relative to the manifest's directory. Trials come back
/// ordered by (split, trial_id).
DatasetBundle load_bundle(const std::filesystem::path& manifest_path);

/// Writes manifest.json plus mask.vct, betas/<trial>.vct and
/// embeddings/<stimulus>.vct under `dir`. Returns the manifest path.
std::filesystem::path write_bundle(const DatasetBundle& bundle, const std::filesystem::path& dir,
                                   DType beta_dtype = DType::kFloat64);

/// Structural checks shared by the loader and the writer.
void validate_bundle(const DatasetBundle& bundle);

}  // namespace volcap::dataset
