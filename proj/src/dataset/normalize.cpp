// Copyright 2026 The volcap Authors
// SPDX-License-Identifier: Apache-2.0

#include "volcap/dataset/normalize.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <map>

#include "volcap/error.hpp"

namespace volcap::dataset {

std::string to_string(NormMode m) { return m == NormMode::kZScore ? "zscore" : "minmax"; }

NormMode parse_norm_mode(const std::string& s) {
  if (s == "zscore") return NormMode::kZScore;
  if (s == "minmax") return NormMode::kMinMax;
  throw ConfigError("unknown normalization mode '" + s + "' (expected zscore|minmax)");
}

std::string to_string(MinMaxScope s) { return s == MinMaxScope::kGlobal ? "global" : "per_volume"; }

MinMaxScope parse_minmax_scope(const std::string& s) {
  if (s == "global") return MinMaxScope::kGlobal;
  if (s == "per_volume") return MinMaxScope::kPerVolume;
  throw ConfigError("unknown minmax scope '" + s + "' (expected global|per_volume)");
}

FlatVoxelVector linearize(const VolumeGrid& volume, const RoiMask& mask) {
  if (volume.data.shape() != mask.shape()) {
    throw DimensionError("linearize: volume shape " + shape_str(volume.data.shape()) + " != mask shape " +
                         shape_str(mask.shape()));
  }
  FlatVoxelVector out;
  out.values.reserve(mask.voxel_count());
  const auto& m = mask.mask().values();
  const auto& v = volume.data.values();
  for (std::size_t i = 0; i < m.size(); ++i) {
    if (m[i] != 0.0) out.values.push_back(v[i]);
  }
  return out;
}

NormStats fit_norm(std::span<const FlatVoxelVector> train, NormMode mode) {
  if (mode != NormMode::kZScore) throw ConfigError("minmax normalization requires volumes, not flat vectors");
  if (train.empty()) throw ConfigError("fit_norm: empty training collection");
  const std::size_t v = train.front().values.size();
  NormStats stats;
  stats.mode = NormMode::kZScore;
  stats.per_voxel_mean.assign(v, 0.0);
  stats.per_voxel_std.assign(v, 0.0);
  for (const auto& x : train) {
    if (x.values.size() != v) throw DimensionError("fit_norm: ragged training vectors");
    for (std::size_t j = 0; j < v; ++j) stats.per_voxel_mean[j] += x.values[j];
  }
  const double n = static_cast<double>(train.size());
  for (auto& m : stats.per_voxel_mean) m /= n;
  for (const auto& x : train) {
    for (std::size_t j = 0; j < v; ++j) {
      const double d = x.values[j] - stats.per_voxel_mean[j];
      stats.per_voxel_std[j] += d * d;
    }
  }
  for (auto& s : stats.per_voxel_std) s = std::max(std::sqrt(s / n), kStdEpsilon);
  return stats;
}

NormStats fit_norm(std::span<const VolumeGrid> train, NormMode mode, MinMaxScope scope) {
  if (mode != NormMode::kMinMax) throw ConfigError("zscore normalization requires flat vectors, not volumes");
  if (train.empty()) throw ConfigError("fit_norm: empty training collection");
  NormStats stats;
  stats.mode = NormMode::kMinMax;
  stats.scope = scope;
  if (scope == MinMaxScope::kPerVolume) return stats;
  double lo = std::numeric_limits<double>::infinity();
  double hi = -lo;
  for (const auto& vol : train) {
    for (double x : vol.data.values()) {
      lo = std::min(lo, x);
      hi = std::max(hi, x);
    }
  }
  if (!(hi > lo)) throw DataError("fit_norm: training volumes are constant; min-max range is empty");
  stats.global_min = lo;
  stats.global_max = hi;
  return stats;
}

FlatVoxelVector apply_norm(const FlatVoxelVector& x, const NormStats& stats) {
  if (stats.mode != NormMode::kZScore) throw ConfigError("apply_norm: flat vectors take zscore stats");
  if (x.values.size() != stats.per_voxel_mean.size()) {
    throw DimensionError("apply_norm: vector length " + std::to_string(x.values.size()) + " != stats length " +
                         std::to_string(stats.per_voxel_mean.size()));
  }
  FlatVoxelVector out;
  out.values.resize(x.values.size());
  for (std::size_t j = 0; j < x.values.size(); ++j) {
    out.values[j] = (x.values[j] - stats.per_voxel_mean[j]) / stats.per_voxel_std[j];
  }
  return out;
}

VolumeGrid apply_norm(const VolumeGrid& x, const NormStats& stats) {
  if (stats.mode != NormMode::kMinMax) throw ConfigError("apply_norm: volumes take minmax stats");
  double lo = stats.global_min;
  double hi = stats.global_max;
  if (stats.scope == MinMaxScope::kPerVolume) {
    const auto [mn, mx] = std::minmax_element(x.data.values().begin(), x.data.values().end());
    lo = *mn;
    hi = *mx;
    if (!(hi > lo)) throw DataError("apply_norm: volume " + x.trial_id + " is constant");
  }
  VolumeGrid out = x;
  // Division rather than a precomputed reciprocal keeps the endpoints exact.
  const double range = hi - lo;
  for (double& v : out.data.values()) v = 2.0 * (v - lo) / range - 1.0;
  return out;
}

std::vector<Sample> average_repetitions(std::span<const Sample> samples) {
  std::map<std::string, std::vector<const Sample*>> groups;
  for (const auto& s : samples) groups[s.stimulus_id].push_back(&s);
  std::vector<Sample> out;
  out.reserve(groups.size());
  for (auto& [stim, members] : groups) {
    std::sort(members.begin(), members.end(), [](const Sample* a, const Sample* b) { return a->trial_id < b->trial_id; });
    Sample avg{stim, members.front()->trial_id, members.front()->x};
    if (members.size() > 1) {
      for (std::size_t k = 1; k < members.size(); ++k) {
        if (members[k]->x.shape() != avg.x.shape()) throw DimensionError("average_repetitions: shape mismatch in " + stim);
        for (std::size_t i = 0; i < avg.x.size(); ++i) avg.x[i] += members[k]->x[i];
      }
      const double n = static_cast<double>(members.size());
      for (double& v : avg.x.values()) v /= n;
    }
    out.push_back(std::move(avg));
  }
  return out;
}

std::vector<Sample> average_repetitions(const TrialSet& trials, Granularity granularity, const RoiMask* mask) {
  if (granularity == Granularity::kFlat && mask == nullptr) {
    throw ConfigError("average_repetitions: flat granularity needs a mask");
  }
  std::vector<Sample> samples;
  samples.reserve(trials.trials.size());
  for (const auto& t : trials.trials) {
    if (granularity == Granularity::kFlat) {
      samples.push_back({t.stimulus_id, t.volume.trial_id, Tensor::vector(linearize(t.volume, *mask).values)});
    } else {
      samples.push_back({t.stimulus_id, t.volume.trial_id, t.volume.data});
    }
  }
  return average_repetitions(samples);
}

}  // namespace volcap::dataset
