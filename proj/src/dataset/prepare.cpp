// Copyright 2026 The volcap Authors
// SPDX-License-Identifier: Apache-2.0

#include "volcap/dataset/prepare.hpp"

#include <cmath>
#include <fstream>

#include "json.hpp"
#include "volcap/error.hpp"
#include "volcap/tensor_io.hpp"

namespace volcap::dataset {
namespace fs = std::filesystem;
using nlohmann::json;

namespace {

PreparedSplit assemble(const DatasetBundle& b, std::vector<Sample> samples, bool unit_targets) {
  PreparedSplit out;
  std::vector<Tensor> xs;
  std::vector<Tensor> ys;
  for (auto& s : samples) {
    out.stimulus_ids.push_back(s.stimulus_id);
    out.trial_ids.push_back(s.trial_id);
    std::vector<double> y = b.stimulus(s.stimulus_id).target_embedding;
    if (unit_targets) {
      double n = 0.0;
      for (double v : y) n += v * v;
      n = std::sqrt(n);
      if (n == 0.0) throw DataError("target embedding of " + s.stimulus_id + " has zero norm");
      for (double& v : y) v /= n;
    }
    ys.push_back(Tensor::vector(y));
    xs.push_back(std::move(s.x));
  }
  if (!xs.empty()) {
    out.x = stack(xs);
    out.y = stack(ys);
  }
  return out;
}

}  // namespace

PreparedData prepare(const DatasetBundle& b, const PrepareOptions& opt) {
  if (b.train.trials.empty()) throw ValidationError("prepare: bundle has no training trials");
  PreparedData out;
  out.subject_id = b.subject_id;
  out.volume_shape = b.volume_shape;
  for (const auto& s : b.stimuli) out.captions[s.stimulus_id] = s.reference_captions;

  auto normalize_set = [&](const TrialSet& set) {
    std::vector<Sample> samples;
    for (const auto& t : set.trials) {
      if (opt.mode == NormMode::kZScore) {
        samples.push_back({t.stimulus_id, t.volume.trial_id,
                           Tensor::vector(apply_norm(linearize(t.volume, b.mask), out.stats).values)});
      } else {
        samples.push_back({t.stimulus_id, t.volume.trial_id, apply_norm(t.volume, out.stats).data});
      }
    }
    return samples;
  };

  if (opt.mode == NormMode::kZScore) {
    std::vector<FlatVoxelVector> flat;
    flat.reserve(b.train.trials.size());
    for (const auto& t : b.train.trials) flat.push_back(linearize(t.volume, b.mask));
    out.stats = fit_norm(std::span<const FlatVoxelVector>(flat), NormMode::kZScore);
  } else {
    std::vector<VolumeGrid> vols;
    vols.reserve(b.train.trials.size());
    for (const auto& t : b.train.trials) vols.push_back(t.volume);
    out.stats = fit_norm(std::span<const VolumeGrid>(vols), NormMode::kMinMax, opt.minmax_scope);
  }

  out.train = assemble(b, normalize_set(b.train), opt.l2_normalize_targets);
  auto test = normalize_set(b.test);
  if (opt.average_test_repetitions) test = average_repetitions(test);
  out.test = assemble(b, std::move(test), opt.l2_normalize_targets);
  return out;
}

void write_prepared(const PreparedData& d, const fs::path& dir) {
  fs::create_directories(dir);
  write_tensor(dir / "train_x.vct", d.train.x);
  write_tensor(dir / "train_y.vct", d.train.y);
  write_tensor(dir / "test_x.vct", d.test.x);
  write_tensor(dir / "test_y.vct", d.test.y);
  if (d.stats.mode == NormMode::kZScore) {
    write_tensor(dir / "norm_mean.vct", Tensor::vector(d.stats.per_voxel_mean));
    write_tensor(dir / "norm_std.vct", Tensor::vector(d.stats.per_voxel_std));
  }
  json doc = {{"subject_id", d.subject_id},
              {"volume_shape", d.volume_shape},
              {"mode", to_string(d.stats.mode)},
              {"minmax_scope", to_string(d.stats.scope)},
              {"global_min", d.stats.global_min},
              {"global_max", d.stats.global_max},
              {"fitted_on", d.stats.fitted_on},
              {"train", {{"stimulus_ids", d.train.stimulus_ids}, {"trial_ids", d.train.trial_ids}}},
              {"test", {{"stimulus_ids", d.test.stimulus_ids}, {"trial_ids", d.test.trial_ids}}},
              {"captions", d.captions}};
  std::ofstream out(dir / "prepared.json", std::ios::trunc);
  out << doc.dump(2) << "\n";
  if (!out) throw Error("failed writing " + (dir / "prepared.json").string());
}

PreparedData read_prepared(const fs::path& dir) {
  std::ifstream in(dir / "prepared.json");
  if (!in) throw LoadError("missing file: " + (dir / "prepared.json").string());
  json doc;
  try {
    doc = json::parse(in);
  } catch (const json::exception& e) {
    throw ValidationError((dir / "prepared.json").string() + ": " + e.what());
  }
  PreparedData d;
  d.subject_id = doc.at("subject_id").get<std::string>();
  d.volume_shape = doc.at("volume_shape").get<Shape>();
  d.stats.mode = parse_norm_mode(doc.at("mode").get<std::string>());
  d.stats.scope = parse_minmax_scope(doc.at("minmax_scope").get<std::string>());
  d.stats.global_min = doc.at("global_min").get<double>();
  d.stats.global_max = doc.at("global_max").get<double>();
  d.stats.fitted_on = doc.at("fitted_on").get<std::string>();
  if (d.stats.mode == NormMode::kZScore) {
    d.stats.per_voxel_mean = read_tensor(dir / "norm_mean.vct").values();
    d.stats.per_voxel_std = read_tensor(dir / "norm_std.vct").values();
  }
  d.train = {read_tensor(dir / "train_x.vct"), read_tensor(dir / "train_y.vct"),
             doc.at("train").at("stimulus_ids").get<std::vector<std::string>>(),
             doc.at("train").at("trial_ids").get<std::vector<std::string>>()};
  d.test = {read_tensor(dir / "test_x.vct"), read_tensor(dir / "test_y.vct"),
            doc.at("test").at("stimulus_ids").get<std::vector<std::string>>(),
            doc.at("test").at("trial_ids").get<std::vector<std::string>>()};
  d.captions = doc.at("captions").get<std::map<std::string, std::vector<std::string>>>();
  return d;
}

}  // namespace volcap::dataset
