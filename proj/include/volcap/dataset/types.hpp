// Copyright 2026 The volcap Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstddef>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "volcap/tensor.hpp"

namespace volcap::dataset {

/// One trial's beta volume, shape (W, D, H).
struct VolumeGrid {
  Tensor data;
  std::string subject_id;
  std::string trial_id;

  bool operator==(const VolumeGrid&) const = default;
};

/// Boolean ROI selection over a subject's volume grid.
class RoiMask {
 public:
  RoiMask() = default;
  /// Values must be 0 or 1; rank 3.
  explicit RoiMask(Tensor mask);

  const Tensor& mask() const { return mask_; }
  const Shape& shape() const { return mask_.shape(); }
  std::size_t voxel_count() const { return voxel_count_; }
  bool operator==(const RoiMask&) const = default;

 private:
  Tensor mask_;
  std::size_t voxel_count_ = 0;
};

/// ROI-masked voxels in row-major (W outermost) order.
struct FlatVoxelVector {
  std::vector<double> values;
  bool operator==(const FlatVoxelVector&) const = default;
};

enum class Split { kTrain, kTest };
std::string to_string(Split s);
Split parse_split(const std::string& s);

struct Trial {
  VolumeGrid volume;
  std::string stimulus_id;
  bool operator==(const Trial&) const = default;
};

struct TrialSet {
  Split split = Split::kTrain;
  std::vector<Trial> trials;

  /// stimulus_id -> indices into `trials`, in trial order.
  std::map<std::string, std::vector<std::size_t>> by_stimulus() const;
  bool operator==(const TrialSet&) const = default;
};

struct StimulusRecord {
  std::string stimulus_id;
  std::vector<double> target_embedding;
  std::vector<std::string> reference_captions;
  bool operator==(const StimulusRecord&) const = default;
};

struct DatasetBundle {
  std::string subject_id;
  Shape volume_shape;
  RoiMask mask;
  TrialSet train{Split::kTrain, {}};
  TrialSet test{Split::kTest, {}};
  std::vector<StimulusRecord> stimuli;

  const StimulusRecord& stimulus(const std::string& id) const;
  std::size_t embedding_dim() const;
  bool operator==(const DatasetBundle&) const = default;
};

/// Reference geometry for subjects with published shapes.
struct SubjectGeometry {
  Shape volume_shape;
  std::size_t roi_voxels;
};
std::optional<SubjectGeometry> known_geometry(const std::string& subject_id);

}  // namespace volcap::dataset
