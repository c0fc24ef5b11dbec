// Copyright 2026 The volcap Authors
// SPDX-License-Identifier: Apache-2.0

#include "volcap/dataset/types.hpp"

#include <algorithm>

#include "volcap/error.hpp"

namespace volcap::dataset {

RoiMask::RoiMask(Tensor mask) : mask_(std::move(mask)) {
  if (mask_.rank() != 3) throw DimensionError("ROI mask must be rank 3, got shape " + shape_str(mask_.shape()));
  for (double v : mask_.values()) {
    if (v != 0.0 && v != 1.0) throw ValidationError("ROI mask holds a value other than 0/1");
    voxel_count_ += v != 0.0;
  }
}

std::string to_string(Split s) { return s == Split::kTrain ? "train" : "test"; }

Split parse_split(const std::string& s) {
  if (s == "train") return Split::kTrain;
  if (s == "test") return Split::kTest;
  throw ValidationError("unknown split '" + s + "' (expected train|test)");
}

std::map<std::string, std::vector<std::size_t>> TrialSet::by_stimulus() const {
  std::map<std::string, std::vector<std::size_t>> out;
  for (std::size_t i = 0; i < trials.size(); ++i) out[trials[i].stimulus_id].push_back(i);
  return out;
}

const StimulusRecord& DatasetBundle::stimulus(const std::string& id) const {
  auto it = std::find_if(stimuli.begin(), stimuli.end(), [&](const auto& s) { return s.stimulus_id == id; });
  if (it == stimuli.end()) throw MissingKeyError("unknown stimulus '" + id + "'");
  return *it;
}

std::size_t DatasetBundle::embedding_dim() const {
  return stimuli.empty() ? 0 : stimuli.front().target_embedding.size();
}

std::optional<SubjectGeometry> known_geometry(const std::string& subject_id) {
  if (subject_id == "sub1" || subject_id == "subj01") return SubjectGeometry{{81, 104, 83}, 15724};
  return std::nullopt;
}

}  // namespace volcap::dataset
