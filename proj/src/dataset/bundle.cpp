// Copyright 2026 The volcap Authors
// SPDX-License-Identifier: Apache-2.0

#include "volcap/dataset/bundle.hpp"

#include <algorithm>
#include <fstream>
#include <set>

#include "json.hpp"
#include "volcap/error.hpp"

namespace volcap::dataset {
namespace fs = std::filesystem;
using nlohmann::json;

namespace {

const json& require(const json& obj, const char* key, json::value_t type, const std::string& where) {
  if (!obj.is_object() || !obj.contains(key)) throw ValidationError(where + ": missing field '" + key + "'");
  const json& v = obj.at(key);
  const bool ok = type == json::value_t::number_unsigned ? v.is_number_unsigned() : v.type() == type;
  if (!ok) throw ValidationError(where + ": field '" + key + "' has the wrong type");
  return v;
}

Tensor load_file(const fs::path& base, const std::string& rel) {
  const fs::path p = base / rel;
  if (!fs::exists(p)) throw LoadError("missing file: " + p.string());
  return read_tensor(p);
}

}  // namespace

void validate_bundle(const DatasetBundle& b) {
  if (b.volume_shape.size() != 3) throw ValidationError("volume_shape must have 3 entries");
  if (b.mask.shape() != b.volume_shape) {
    throw ValidationError("mask shape " + shape_str(b.mask.shape()) + " != volume_shape " + shape_str(b.volume_shape));
  }
  if (auto geo = known_geometry(b.subject_id)) {
    if (b.volume_shape != geo->volume_shape) {
      throw ValidationError("subject " + b.subject_id + " has volume shape " + shape_str(geo->volume_shape) +
                            ", manifest declares " + shape_str(b.volume_shape));
    }
    if (b.mask.voxel_count() != geo->roi_voxels) {
      throw ValidationError("subject " + b.subject_id + " ROI holds " + std::to_string(geo->roi_voxels) +
                            " voxels, mask has " + std::to_string(b.mask.voxel_count()));
    }
  }
  std::set<std::string> stim_ids;
  const std::size_t dim = b.embedding_dim();
  for (const auto& s : b.stimuli) {
    if (!stim_ids.insert(s.stimulus_id).second) throw ValidationError("duplicate stimulus_id " + s.stimulus_id);
    if (s.target_embedding.size() != dim || dim == 0) {
      throw ValidationError("stimulus " + s.stimulus_id + " embedding dimension " +
                            std::to_string(s.target_embedding.size()) + " != " + std::to_string(dim));
    }
    if (s.reference_captions.empty()) throw ValidationError("stimulus " + s.stimulus_id + " has no captions");
  }
  std::set<std::string> trial_ids;
  std::set<std::string> train_stims;
  for (const TrialSet* set : {&b.train, &b.test}) {
    for (const auto& t : set->trials) {
      if (!trial_ids.insert(t.volume.trial_id).second) throw ValidationError("duplicate trial_id " + t.volume.trial_id);
      if (!stim_ids.count(t.stimulus_id)) {
        throw ValidationError("trial " + t.volume.trial_id + " references unknown stimulus " + t.stimulus_id);
      }
      if (t.volume.data.shape() != b.volume_shape) {
        throw ValidationError("trial " + t.volume.trial_id + " beta shape " + shape_str(t.volume.data.shape()) +
                              " != volume_shape " + shape_str(b.volume_shape));
      }
      if (!t.volume.data.all_finite()) throw DataError("trial " + t.volume.trial_id + " contains NaN/Inf betas");
      if (set == &b.train) train_stims.insert(t.stimulus_id);
    }
  }
  for (const auto& t : b.test.trials) {
    if (train_stims.count(t.stimulus_id)) {
      throw ValidationError("test stimulus " + t.stimulus_id + " also appears in the train split");
    }
  }
}

DatasetBundle load_bundle(const fs::path& manifest_path) {
  std::ifstream in(manifest_path);
  if (!in) throw LoadError("missing manifest: " + manifest_path.string());
  json doc;
  try {
    doc = json::parse(in);
  } catch (const json::exception& e) {
    throw ValidationError(manifest_path.string() + ": invalid JSON: " + e.what());
  }
  const fs::path base = manifest_path.parent_path();
  const std::string where = manifest_path.string();

  DatasetBundle b;
  b.subject_id = require(doc, "subject_id", json::value_t::string, where).get<std::string>();
  const json& shape = require(doc, "volume_shape", json::value_t::array, where);
  if (shape.size() != 3) throw ValidationError(where + ": volume_shape must have 3 entries");
  for (const auto& d : shape) {
    if (!d.is_number_unsigned() || d.get<std::size_t>() == 0) throw ValidationError(where + ": bad volume_shape entry");
    b.volume_shape.push_back(d.get<std::size_t>());
  }
  b.mask = RoiMask(load_file(base, require(doc, "mask_file", json::value_t::string, where).get<std::string>()));

  for (const auto& s : require(doc, "stimuli", json::value_t::array, where)) {
    StimulusRecord rec;
    rec.stimulus_id = require(s, "stimulus_id", json::value_t::string, where + " stimuli[]").get<std::string>();
    const std::string ctx = where + " stimulus " + rec.stimulus_id;
    const Tensor emb = load_file(base, require(s, "embedding_file", json::value_t::string, ctx).get<std::string>());
    if (emb.rank() != 1) throw ValidationError(ctx + ": embedding must be rank 1");
    if (!emb.all_finite()) throw DataError(ctx + ": embedding contains NaN/Inf");
    rec.target_embedding = emb.values();
    for (const auto& c : require(s, "captions", json::value_t::array, ctx)) {
      if (!c.is_string()) throw ValidationError(ctx + ": captions must be strings");
      rec.reference_captions.push_back(c.get<std::string>());
    }
    b.stimuli.push_back(std::move(rec));
  }

  for (const auto& t : require(doc, "trials", json::value_t::array, where)) {
    Trial trial;
    trial.volume.subject_id = b.subject_id;
    trial.volume.trial_id = require(t, "trial_id", json::value_t::string, where + " trials[]").get<std::string>();
    const std::string ctx = where + " trial " + trial.volume.trial_id;
    trial.stimulus_id = require(t, "stimulus_id", json::value_t::string, ctx).get<std::string>();
    const Split split = parse_split(require(t, "split", json::value_t::string, ctx).get<std::string>());
    trial.volume.data = load_file(base, require(t, "beta_file", json::value_t::string, ctx).get<std::string>());
    if (trial.volume.data.shape() != b.volume_shape) {
      throw ValidationError(ctx + ": beta shape " + shape_str(trial.volume.data.shape()) +
                            " does not match volume_shape " + shape_str(b.volume_shape));
    }
    if (!trial.volume.data.all_finite()) throw DataError("NaN/Inf in betas of trial " + trial.volume.trial_id);
    (split == Split::kTrain ? b.train : b.test).trials.push_back(std::move(trial));
  }
  for (TrialSet* set : {&b.train, &b.test}) {
    std::sort(set->trials.begin(), set->trials.end(),
              [](const Trial& a, const Trial& c) { return a.volume.trial_id < c.volume.trial_id; });
  }
  std::sort(b.stimuli.begin(), b.stimuli.end(),
            [](const StimulusRecord& a, const StimulusRecord& c) { return a.stimulus_id < c.stimulus_id; });
  validate_bundle(b);
  return b;
}

fs::path write_bundle(const DatasetBundle& b, const fs::path& dir, DType beta_dtype) {
  validate_bundle(b);
  fs::create_directories(dir);
  json doc;
  doc["subject_id"] = b.subject_id;
  doc["volume_shape"] = b.volume_shape;
  doc["mask_file"] = "mask.vct";
  write_tensor(dir / "mask.vct", b.mask.mask(), DType::kBool);
  doc["trials"] = json::array();
  for (const TrialSet* set : {&b.train, &b.test}) {
    for (const auto& t : set->trials) {
      const std::string rel = "betas/" + t.volume.trial_id + ".vct";
      write_tensor(dir / rel, t.volume.data, beta_dtype);
      doc["trials"].push_back({{"trial_id", t.volume.trial_id},
                               {"stimulus_id", t.stimulus_id},
                               {"split", to_string(set->split)},
                               {"beta_file", rel}});
    }
  }
  doc["stimuli"] = json::array();
  for (const auto& s : b.stimuli) {
    const std::string rel = "embeddings/" + s.stimulus_id + ".vct";
    write_tensor(dir / rel, Tensor::vector(s.target_embedding));
    doc["stimuli"].push_back({{"stimulus_id", s.stimulus_id}, {"embedding_file", rel}, {"captions", s.reference_captions}});
  }
  const fs::path manifest = dir / "manifest.json";
  std::ofstream out(manifest, std::ios::trunc);
  out << doc.dump(2) << "\n";
  if (!out) throw Error("failed writing " + manifest.string());
  return manifest;
}

}  // namespace volcap::dataset
