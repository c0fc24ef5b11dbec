// Copyright 2026 The volcap Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <span>
#include <string>
#include <vector>

#include "volcap/dataset/types.hpp"

namespace volcap::dataset {

enum class NormMode { kZScore, kMinMax };
enum class MinMaxScope { kGlobal, kPerVolume };

std::string to_string(NormMode m);
NormMode parse_norm_mode(const std::string& s);
std::string to_string(MinMaxScope s);
MinMaxScope parse_minmax_scope(const std::string& s);

/// Floor applied to per-voxel standard deviations.
inline constexpr double kStdEpsilon = 1e-8;

struct NormStats {
  NormMode mode = NormMode::kZScore;
  MinMaxScope scope = MinMaxScope::kGlobal;
  std::vector<double> per_voxel_mean;
  std::vector<double> per_voxel_std;
  double global_min = 0.0;
  double global_max = 0.0;
  std::string fitted_on = "train";

  bool operator==(const NormStats&) const = default;
};

/// Masked voxels of `volume`, row-major with W outermost.
FlatVoxelVector linearize(const VolumeGrid& volume, const RoiMask& mask);

/// Z-score stats (population std, clamped at kStdEpsilon).
NormStats fit_norm(std::span<const FlatVoxelVector> train, NormMode mode = NormMode::kZScore);
/// Min-max stats over volumes. Per-volume scope stores no extrema; each volume
/// is scaled by its own range at apply time.
NormStats fit_norm(std::span<const VolumeGrid> train, NormMode mode = NormMode::kMinMax,
                   MinMaxScope scope = MinMaxScope::kGlobal);

FlatVoxelVector apply_norm(const FlatVoxelVector& x, const NormStats& stats);
VolumeGrid apply_norm(const VolumeGrid& x, const NormStats& stats);

/// One input row tagged with its stimulus and trial.
struct Sample {
  std::string stimulus_id;
  std::string trial_id;
  Tensor x;
};

enum class Granularity { kVolume, kFlat };

/// Mean over repetitions of each stimulus. Members of a group are summed in
/// trial_id order, so the result does not depend on input order. Output is
/// sorted by stimulus_id; the trial_id of an averaged sample is its first
/// member's.
std::vector<Sample> average_repetitions(std::span<const Sample> samples);
std::vector<Sample> average_repetitions(const TrialSet& trials, Granularity granularity,
                                        const RoiMask* mask = nullptr);

}  // namespace volcap::dataset
