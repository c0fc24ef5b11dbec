// Copyright 2026 The volcap Authors
// SPDX-License-Identifier: Apache-2.0

#include "volcap/dataset/synth.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <numeric>

#include "volcap/dataset/bundle.hpp"
#include "volcap/error.hpp"
#include "volcap/rng.hpp"
#include "volcap/tensor_io.hpp"

namespace volcap::dataset {
namespace fs = std::filesystem;
using nlohmann::json;

namespace {

std::string numbered(const char* prefix, std::size_t i, int width) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%s%0*zu", prefix, width, i);
  return buf;
}

std::size_t argmax_block(const std::vector<double>& e, std::size_t begin, std::size_t n) {
  return static_cast<std::size_t>(std::max_element(e.begin() + static_cast<std::ptrdiff_t>(begin),
                                                   e.begin() + static_cast<std::ptrdiff_t>(begin + n)) -
                                  (e.begin() + static_cast<std::ptrdiff_t>(begin)));
}

}  // namespace

void SynthConfig::validate() const {
  if (volume_shape.size() != 3 || shape_numel(volume_shape) == 0) throw ConfigError("synth: volume_shape must be 3 positive dims");
  if (n_train_stimuli == 0 || n_test_stimuli == 0) throw ConfigError("synth: need at least one train and one test stimulus");
  if (train_repetitions == 0 || test_repetitions == 0) throw ConfigError("synth: repetitions must be positive");
  if (nouns.empty() || adjectives.empty() || verbs.empty()) throw ConfigError("synth: caption vocabulary is empty");
  if (embedding_dim < nouns.size() + adjectives.size() + verbs.size()) {
    throw ConfigError("synth: embedding_dim must cover the caption vocabulary blocks");
  }
  if (captions_per_stimulus == 0 || captions_per_stimulus > 3) throw ConfigError("synth: captions_per_stimulus must be 1..3");
  const std::size_t total = shape_numel(volume_shape);
  const std::size_t roi = roi_voxels ? roi_voxels : static_cast<std::size_t>(std::llround(roi_density * total));
  if (roi == 0 || roi > total) throw ConfigError("synth: ROI size must be in [1, W*D*H]");
  if (noise_std < 0 || background_std < 0) throw ConfigError("synth: noise must be nonnegative");
}

SynthConfig SynthConfig::from_json(const json& j) {
  SynthConfig c;
  try {
    c.subject_id = j.value("subject_id", c.subject_id);
    c.volume_shape = j.value("volume_shape", c.volume_shape);
    c.roi_density = j.value("roi_density", c.roi_density);
    c.roi_voxels = j.value("roi_voxels", c.roi_voxels);
    c.n_train_stimuli = j.value("n_train_stimuli", c.n_train_stimuli);
    c.n_test_stimuli = j.value("n_test_stimuli", c.n_test_stimuli);
    c.train_repetitions = j.value("train_repetitions", c.train_repetitions);
    c.test_repetitions = j.value("test_repetitions", c.test_repetitions);
    c.embedding_dim = j.value("embedding_dim", c.embedding_dim);
    c.captions_per_stimulus = j.value("captions_per_stimulus", c.captions_per_stimulus);
    c.nouns = j.value("nouns", c.nouns);
    c.adjectives = j.value("adjectives", c.adjectives);
    c.verbs = j.value("verbs", c.verbs);
    const std::string kind = j.value("mapping", std::string("linear"));
    if (kind == "linear") c.mapping = PlantedMapping::kLinear;
    else if (kind == "conv-friendly") c.mapping = PlantedMapping::kConvFriendly;
    else throw ConfigError("synth: unknown mapping '" + kind + "' (expected linear|conv-friendly)");
    c.noise_std = j.value("noise_std", c.noise_std);
    c.background_std = j.value("background_std", c.background_std);
    c.signal_scale = j.value("signal_scale", c.signal_scale);
  } catch (const json::exception& e) {
    throw ConfigError(std::string("synth config: ") + e.what());
  }
  c.validate();
  return c;
}

json SynthConfig::to_json() const {
  return {{"subject_id", subject_id},
          {"volume_shape", volume_shape},
          {"roi_density", roi_density},
          {"roi_voxels", roi_voxels},
          {"n_train_stimuli", n_train_stimuli},
          {"n_test_stimuli", n_test_stimuli},
          {"train_repetitions", train_repetitions},
          {"test_repetitions", test_repetitions},
          {"embedding_dim", embedding_dim},
          {"captions_per_stimulus", captions_per_stimulus},
          {"nouns", nouns},
          {"adjectives", adjectives},
          {"verbs", verbs},
          {"mapping", mapping == PlantedMapping::kLinear ? "linear" : "conv-friendly"},
          {"noise_std", noise_std},
          {"background_std", background_std},
          {"signal_scale", signal_scale}};
}

std::vector<std::string> synth_captions(const SynthConfig& c, const std::vector<double>& e) {
  const std::string& noun = c.nouns[argmax_block(e, 0, c.nouns.size())];
  const std::string& adj = c.adjectives[argmax_block(e, c.nouns.size(), c.adjectives.size())];
  const std::string& verb = c.verbs[argmax_block(e, c.nouns.size() + c.adjectives.size(), c.verbs.size())];
  std::vector<std::string> all = {
      "a " + adj + " " + noun + " " + verb,
      "the " + adj + " " + noun + " is " + verb,
      "a " + noun + " that is " + adj + " and " + verb,
  };
  all.resize(c.captions_per_stimulus);
  return all;
}

SynthResult synth_generate(const SynthConfig& c, std::uint64_t seed) {
  c.validate();
  Rng rng(seed);
  SynthResult res;
  DatasetBundle& b = res.bundle;
  b.subject_id = c.subject_id;
  b.volume_shape = c.volume_shape;
  const std::size_t total = shape_numel(c.volume_shape);
  const std::size_t roi = c.roi_voxels ? c.roi_voxels : static_cast<std::size_t>(std::llround(c.roi_density * total));

  std::vector<std::size_t> cells(total);
  std::iota(cells.begin(), cells.end(), 0);
  rng.shuffle(cells);
  Tensor mask(c.volume_shape, 0.0);
  for (std::size_t i = 0; i < roi; ++i) mask[cells[i]] = 1.0;
  b.mask = RoiMask(mask);
  std::vector<std::size_t> roi_cells;
  roi_cells.reserve(roi);
  for (std::size_t i = 0; i < total; ++i) {
    if (mask[i] != 0.0) roi_cells.push_back(i);
  }

  const std::size_t n_stim = c.n_train_stimuli + c.n_test_stimuli;
  const std::size_t dim = c.embedding_dim;
  for (std::size_t s = 0; s < n_stim; ++s) {
    StimulusRecord rec;
    rec.stimulus_id = numbered("s", s, 5);
    rec.target_embedding.resize(dim);
    for (double& v : rec.target_embedding) v = rng.normal();
    rec.reference_captions = synth_captions(c, rec.target_embedding);
    res.planted.true_captions[rec.stimulus_id] = rec.reference_captions.front();
    b.stimuli.push_back(std::move(rec));
  }

  PlantedTruth& truth = res.planted;
  truth.mapping = c.mapping;
  if (c.mapping == PlantedMapping::kLinear) {
    truth.weights = Tensor({dim, roi});
    const double s = c.signal_scale / std::sqrt(static_cast<double>(dim));
    for (double& w : truth.weights.values()) w = rng.normal() * s;
    truth.offsets = Tensor({roi});
    for (double& o : truth.offsets.values()) o = rng.normal();
  } else {
    // One smooth blob per embedding dimension at a random centre.
    truth.weights = Tensor({dim, total});
    const auto [w, d, h] = std::tuple{c.volume_shape[0], c.volume_shape[1], c.volume_shape[2]};
    const double sigma = std::max(1.0, static_cast<double>(std::min({w, d, h})) / 5.0);
    for (std::size_t k = 0; k < dim; ++k) {
      const double cx = rng.uniform(0, static_cast<double>(w - 1));
      const double cy = rng.uniform(0, static_cast<double>(d - 1));
      const double cz = rng.uniform(0, static_cast<double>(h - 1));
      for (std::size_t x = 0; x < w; ++x)
        for (std::size_t y = 0; y < d; ++y)
          for (std::size_t z = 0; z < h; ++z) {
            const double r2 = std::pow(x - cx, 2) + std::pow(y - cy, 2) + std::pow(z - cz, 2);
            truth.weights[k * total + (x * d + y) * h + z] = c.signal_scale * std::exp(-r2 / (2 * sigma * sigma));
          }
    }
  }

  auto make_volume = [&](const StimulusRecord& stim) {
    Tensor vol(c.volume_shape, 0.0);
    const auto& e = stim.target_embedding;
    if (c.mapping == PlantedMapping::kLinear) {
      for (double& v : vol.values()) v = rng.normal() * c.background_std;
      for (std::size_t j = 0; j < roi; ++j) {
        double acc = truth.offsets[j];
        for (std::size_t k = 0; k < dim; ++k) acc += e[k] * truth.weights[k * roi + j];
        vol[roi_cells[j]] = acc + rng.normal() * c.noise_std;
      }
    } else {
      for (std::size_t i = 0; i < total; ++i) {
        double acc = 0.0;
        for (std::size_t k = 0; k < dim; ++k) acc += e[k] * truth.weights[k * total + i];
        vol[i] = acc + rng.normal() * c.noise_std;
      }
    }
    return vol;
  };

  std::size_t trial_no = 0;
  for (std::size_t s = 0; s < n_stim; ++s) {
    const bool is_train = s < c.n_train_stimuli;
    const std::size_t reps = is_train ? c.train_repetitions : c.test_repetitions;
    for (std::size_t r = 0; r < reps; ++r) {
      Trial t;
      t.stimulus_id = b.stimuli[s].stimulus_id;
      t.volume = {make_volume(b.stimuli[s]), c.subject_id, numbered("t", trial_no++, 6)};
      (is_train ? b.train : b.test).trials.push_back(std::move(t));
    }
  }
  return res;
}

fs::path write_synth(const SynthResult& result, const fs::path& dir) {
  const fs::path manifest = write_bundle(result.bundle, dir);
  const auto& p = result.planted;
  write_tensor(dir / "planted" / "weights.vct", p.weights);
  if (!p.offsets.empty()) write_tensor(dir / "planted" / "offsets.vct", p.offsets);
  json doc = {{"mapping", p.mapping == PlantedMapping::kLinear ? "linear" : "conv-friendly"},
              {"weights_file", "weights.vct"},
              {"true_captions", p.true_captions}};
  if (!p.offsets.empty()) doc["offsets_file"] = "offsets.vct";
  std::ofstream out(dir / "planted" / "planted.json", std::ios::trunc);
  out << doc.dump(2) << "\n";
  return manifest;
}

PlantedTruth load_planted(const fs::path& bundle_dir) {
  const fs::path pdir = bundle_dir / "planted";
  std::ifstream in(pdir / "planted.json");
  if (!in) throw LoadError("missing file: " + (pdir / "planted.json").string());
  const json doc = json::parse(in);
  PlantedTruth p;
  p.mapping = doc.at("mapping") == "linear" ? PlantedMapping::kLinear : PlantedMapping::kConvFriendly;
  p.weights = read_tensor(pdir / doc.at("weights_file").get<std::string>());
  if (doc.contains("offsets_file")) p.offsets = read_tensor(pdir / doc.at("offsets_file").get<std::string>());
  p.true_captions = doc.at("true_captions").get<std::map<std::string, std::string>>();
  return p;
}

}  // namespace volcap::dataset
