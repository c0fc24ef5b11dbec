// Copyright 2026 The volcap Authors
// SPDX-License-Identifier: Apache-2.0

#include "volcap/pipeline/config.hpp"

#include <algorithm>
#include <cstdlib>
#include <fstream>
#include <set>

#include "volcap/error.hpp"
#include "volcap/hash.hpp"

namespace volcap::pipeline {

namespace fs = std::filesystem;
using nlohmann::json;

std::string to_string(MapperKind k) {
  switch (k) {
    case MapperKind::kRidge: return "ridge";
    case MapperKind::kLinear: return "linear";
    case MapperKind::kShallow: return "shallow";
    case MapperKind::kWide: return "wide";
  }
  return "?";
}

MapperKind parse_mapper_kind(const std::string& s) {
  if (s == "ridge") return MapperKind::kRidge;
  if (s == "linear") return MapperKind::kLinear;
  if (s == "shallow") return MapperKind::kShallow;
  if (s == "wide") return MapperKind::kWide;
  throw ConfigError("unknown mapper '" + s + "' (expected ridge|linear|shallow|wide)");
}

std::string display_name(MapperKind k) {
  switch (k) {
    case MapperKind::kRidge: return "Ridge";
    case MapperKind::kLinear: return "Linear";
    case MapperKind::kShallow: return "Shallow CNN";
    case MapperKind::kWide: return "Wide CNN";
  }
  return "?";
}

bool is_volumetric(MapperKind k) { return k == MapperKind::kShallow || k == MapperKind::kWide; }

namespace {

const std::vector<std::string> kTopKeys{"subjects", "data",     "run_dir",  "seed",     "preprocess",
                                        "brain",    "caption",  "decode",   "protocol", "evaluate"};
const std::vector<std::string> kPreprocessKeys{"mode", "minmax_scope", "average_test_repetitions", "l2_normalize_targets"};
const std::vector<std::string> kBrainKeys{"mapper", "lambda", "lambda_grid", "cv_folds", "train", "conv"};
const std::vector<std::string> kCaptionKeys{"mapper", "lm", "freeze_lm", "train"};
const std::vector<std::string> kEvaluateKeys{"encoders", "meteor_stem"};
// Seeds inside sections are derived from the run seed, so they are not settable.
const std::vector<std::string> kTrainKeys{"epochs",   "batch_size", "learning_rate", "weight_decay",
                                          "momentum", "optimizer",  "lr_schedule"};
const std::vector<std::string> kDecodeKeys{"beam_width", "max_len", "length_penalty"};
const std::vector<std::string> kConvKeys{"block_layout", "widths",       "stem_kernel", "stem_stride",
                                         "stem_padding", "stem_pool",    "pad_multiple"};
const std::vector<std::string> kPrefixKeys{"prefix_length", "mapper_layers", "mapper_heads", "mapper_hidden_dim"};
const std::vector<std::string> kLmKeys{"embed_dim", "layers", "heads", "mlp_hidden", "max_positions"};

void check_keys(const json& j, const std::vector<std::string>& allowed, const std::string& where) {
  if (!j.is_object()) throw ConfigError(where + " must be an object");
  for (const auto& [key, value] : j.items()) {
    if (std::find(allowed.begin(), allowed.end(), key) == allowed.end()) {
      std::string list;
      for (const auto& a : allowed) list += (list.empty() ? "" : ", ") + a;
      throw ConfigError("unknown key '" + key + "' in " + where + " (allowed: " + list + ")");
    }
  }
}

fs::path resolve(const fs::path& p, const fs::path& base) {
  if (p.empty() || p.is_absolute() || base.empty()) return p;
  return (base / p).lexically_normal();
}

ag::TrainConfig train_from(const json& j, const std::string& where) {
  check_keys(j, kTrainKeys, where);
  return ag::TrainConfig::from_json(j);
}

json train_to(const ag::TrainConfig& t) {
  json j = t.to_json();
  j.erase("seed");
  return j;
}

}  // namespace

const std::vector<std::string>& run_config_keys() { return kTopKeys; }

caption::TinyLMConfig CaptionStageConfig::lm_config(std::size_t vocab_size, std::uint64_t seed) const {
  json j = lm;
  j["vocab_size"] = vocab_size;
  j["seed"] = seed;
  return caption::TinyLMConfig::from_json(j);
}

caption::PrefixMapperConfig CaptionStageConfig::mapper_config(std::size_t input_dim, std::size_t lm_embed_dim,
                                                              std::uint64_t seed) const {
  json j = mapper;
  j["input_dim"] = input_dim;
  j["lm_embed_dim"] = lm_embed_dim;
  j["seed"] = seed;
  return caption::PrefixMapperConfig::from_json(j);
}

dataset::NormMode RunConfig::norm_mode() const {
  if (preprocess.mode) return *preprocess.mode;
  return is_volumetric(brain.mapper) ? dataset::NormMode::kMinMax : dataset::NormMode::kZScore;
}

void RunConfig::validate() const {
  if (subjects.empty()) throw ConfigError("run config: no subjects");
  std::set<std::string> seen;
  for (const auto& s : subjects) {
    if (s.empty() || s.find_first_of("/\\") != std::string::npos || s == "." || s == "..") {
      throw ConfigError("run config: invalid subject id '" + s + "'");
    }
    if (!seen.insert(s).second) throw ConfigError("run config: duplicate subject '" + s + "'");
    if (!data.count(s)) throw ConfigError("run config: no data manifest for subject '" + s + "'");
  }
  if (run_dir.empty()) throw ConfigError("run config: run_dir is required");
  if (is_volumetric(brain.mapper) != (norm_mode() == dataset::NormMode::kMinMax)) {
    throw ConfigError("run config: " + to_string(brain.mapper) + " mapper needs " +
                      (is_volumetric(brain.mapper) ? "minmax (volumetric)" : "zscore (flat)") + " preprocessing");
  }
  if (brain.lambda && !(*brain.lambda >= 0.0)) throw ConfigError("run config: lambda must be >= 0");
  for (double l : brain.lambda_grid) {
    if (!(l >= 0.0)) throw ConfigError("run config: lambda_grid values must be >= 0");
  }
  if (brain.cv_folds < 2) throw ConfigError("run config: cv_folds must be >= 2");
  brain.train.validate();
  caption.train.validate();
  decode.validate();
  // Placeholder sizes; the real ones come from the data.
  const auto lm_cfg = caption.lm_config(2, 0);
  const auto prefix = caption.mapper_config(1, lm_cfg.embed_dim, 0);
  if (prefix.prefix_length + decode.max_len > lm_cfg.max_positions) {
    throw ConfigError("run config: prefix_length " + std::to_string(prefix.prefix_length) + " + decode.max_len " +
                      std::to_string(decode.max_len) + " exceeds lm.max_positions " +
                      std::to_string(lm_cfg.max_positions));
  }
  if (evaluate.encoders.empty()) throw ConfigError("run config: evaluate.encoders must be 'stub' or a directory");
}

PreprocessStageConfig PreprocessStageConfig::from_json(const json& j) {
  check_keys(j, kPreprocessKeys, "preprocess");
  PreprocessStageConfig c;
  try {
    if (j.contains("mode")) c.mode = dataset::parse_norm_mode(j.at("mode").get<std::string>());
    if (j.contains("minmax_scope")) {
      c.minmax_scope = dataset::parse_minmax_scope(j.at("minmax_scope").get<std::string>());
    }
    c.average_test_repetitions = j.value("average_test_repetitions", true);
    c.l2_normalize_targets = j.value("l2_normalize_targets", false);
  } catch (const json::exception& e) {
    throw ConfigError(std::string("preprocess: ") + e.what());
  }
  return c;
}

json PreprocessStageConfig::to_json() const {
  json j = {{"minmax_scope", dataset::to_string(minmax_scope)}, {"average_test_repetitions", average_test_repetitions},
            {"l2_normalize_targets", l2_normalize_targets}};
  if (mode) j["mode"] = dataset::to_string(*mode);
  return j;
}

BrainStageConfig BrainStageConfig::from_json(const json& j) {
  check_keys(j, kBrainKeys, "brain");
  BrainStageConfig c;
  try {
    if (j.contains("mapper")) c.mapper = parse_mapper_kind(j.at("mapper").get<std::string>());
    if (j.contains("lambda")) {
      const json& l = j.at("lambda");
      if (l.is_string()) {
        if (l.get<std::string>() != "cv") throw ConfigError("brain.lambda must be a number or \"cv\"");
      } else {
        c.lambda = l.get<double>();
      }
    }
    if (j.contains("lambda_grid")) c.lambda_grid = j.at("lambda_grid").get<std::vector<double>>();
    c.cv_folds = j.value("cv_folds", c.cv_folds);
    c.train = train_from(j.value("train", json::object()), "brain.train");
    c.conv = j.value("conv", json::object());
    check_keys(c.conv, kConvKeys, "brain.conv");
  } catch (const json::exception& e) {
    throw ConfigError(std::string("brain: ") + e.what());
  }
  if (c.lambda && !(*c.lambda >= 0.0)) throw ConfigError("brain.lambda must be >= 0");
  for (double l : c.lambda_grid) {
    if (!(l >= 0.0)) throw ConfigError("brain.lambda_grid values must be >= 0");
  }
  if (c.cv_folds < 2) throw ConfigError("brain.cv_folds must be >= 2");
  return c;
}

json BrainStageConfig::to_json() const {
  json j = {{"mapper", pipeline::to_string(mapper)},
            {"lambda_grid", lambda_grid},
            {"cv_folds", cv_folds},
            {"train", train_to(train)},
            {"conv", conv}};
  if (lambda) j["lambda"] = *lambda;
  else j["lambda"] = "cv";
  return j;
}

CaptionStageConfig CaptionStageConfig::from_json(const json& j) {
  check_keys(j, kCaptionKeys, "caption");
  CaptionStageConfig c;
  try {
    c.mapper = j.value("mapper", json::object());
    check_keys(c.mapper, kPrefixKeys, "caption.mapper");
    c.lm = j.value("lm", json::object());
    check_keys(c.lm, kLmKeys, "caption.lm");
    c.freeze_lm = j.value("freeze_lm", c.freeze_lm);
    c.train = train_from(j.value("train", json::object()), "caption.train");
  } catch (const json::exception& e) {
    throw ConfigError(std::string("caption: ") + e.what());
  }
  // Placeholder sizes; the real ones come from the data.
  c.mapper_config(1, c.lm_config(2, 0).embed_dim, 0);
  return c;
}

json CaptionStageConfig::to_json() const {
  return {{"mapper", mapper}, {"lm", lm}, {"freeze_lm", freeze_lm}, {"train", train_to(train)}};
}

EvaluateStageConfig EvaluateStageConfig::from_json(const json& j, const fs::path& base_dir) {
  check_keys(j, kEvaluateKeys, "evaluate");
  EvaluateStageConfig c;
  try {
    c.encoders = j.value("encoders", c.encoders);
    c.meteor_stem = j.value("meteor_stem", c.meteor_stem);
  } catch (const json::exception& e) {
    throw ConfigError(std::string("evaluate: ") + e.what());
  }
  if (c.encoders.empty()) throw ConfigError("evaluate.encoders must be 'stub' or a directory");
  if (c.encoders != "stub") c.encoders = resolve(c.encoders, base_dir).string();
  return c;
}

json EvaluateStageConfig::to_json() const { return {{"encoders", encoders}, {"meteor_stem", meteor_stem}}; }

RunConfig RunConfig::from_json(const json& j, const fs::path& base_dir) {
  check_keys(j, kTopKeys, "run config");
  RunConfig c;
  try {
    if (j.contains("subjects")) c.subjects = j.at("subjects").get<std::vector<std::string>>();
    if (j.contains("data")) {
      check_keys(j.at("data"), c.subjects, "data");
      for (const auto& [subject, path] : j.at("data").items()) {
        c.data[subject] = resolve(path.get<std::string>(), base_dir);
      }
    }
    if (j.contains("run_dir")) c.run_dir = resolve(j.at("run_dir").get<std::string>(), base_dir);
    if (j.contains("seed")) c.seed = j.at("seed").get<std::uint64_t>();
    c.preprocess = PreprocessStageConfig::from_json(j.value("preprocess", json::object()));
    c.brain = BrainStageConfig::from_json(j.value("brain", json::object()));
    c.caption = CaptionStageConfig::from_json(j.value("caption", json::object()));
    const json dec = j.value("decode", json::object());
    check_keys(dec, kDecodeKeys, "decode");
    c.decode = caption::DecodeConfig::from_json(dec);
    if (j.contains("protocol")) c.protocol = metrics::parse_protocol(j.at("protocol").get<std::string>());
    c.evaluate = EvaluateStageConfig::from_json(j.value("evaluate", json::object()), base_dir);
  } catch (const json::exception& e) {
    throw ConfigError(std::string("run config: ") + e.what());
  } catch (const ValidationError& e) {
    throw ConfigError(std::string("run config: ") + e.what());
  }
  c.validate();
  return c;
}

json RunConfig::to_json() const {
  json data_j = json::object();
  for (const auto& [s, p] : data) data_j[s] = p.string();
  return {{"subjects", subjects},
          {"data", data_j},
          {"run_dir", run_dir.string()},
          {"seed", seed},
          {"preprocess", preprocess.to_json()},
          {"brain", brain.to_json()},
          {"caption", caption.to_json()},
          {"decode", decode.to_json()},
          {"protocol", metrics::to_string(protocol)},
          {"evaluate", evaluate.to_json()}};
}

RunConfig load_run_config(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open run config " + path.string());
  json j;
  try {
    j = json::parse(in);
  } catch (const json::exception& e) {
    throw ConfigError(path.string() + ": " + e.what());
  }
  return RunConfig::from_json(j, fs::absolute(path).parent_path());
}

void apply_env_overrides(RunConfig& cfg) {
  const char* env = std::getenv("VOLCAP_SEED");
  if (env == nullptr || *env == '\0') return;
  const std::string s(env);
  std::size_t used = 0;
  unsigned long long v = 0;
  try {
    v = std::stoull(s, &used, 10);
  } catch (const std::exception&) {
    used = 0;
  }
  if (used != s.size() || s.front() == '-') throw ConfigError("VOLCAP_SEED must be a non-negative integer, got '" + s + "'");
  cfg.seed = v;
}

std::uint64_t derive_seed(std::uint64_t seed, std::string_view tag) { return splitmix64(seed ^ fnv1a64(tag)); }

}  // namespace volcap::pipeline
