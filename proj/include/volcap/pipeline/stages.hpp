// Copyright 2026 The volcap Authors
// SPDX-License-Identifier: Apache-2.0

// Per-subject experiment runner. Layout:
//
//   run_dir/<subject>/manifest.json
//   run_dir/<subject>/{preprocess,brain,caption,infer,evaluate,report}/
//
// A stage is skipped ("cached") when its fingerprint (stage config, seed and
// the hashes of every input file) matches the manifest and its recorded
// outputs are unchanged on disk.

#pragma once

#include <filesystem>
#include <functional>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "json.hpp"
#include "volcap/dataset/prepare.hpp"
#include "volcap/pipeline/config.hpp"

namespace volcap::pipeline {

inline constexpr const char* kVersion = "0.1.0";
inline constexpr int kManifestFormat = 1;

enum class Stage { kPreprocess, kTrainBrain, kTrainCaption, kInfer, kEvaluate, kReport };

const std::vector<Stage>& all_stages();
std::string to_string(Stage s);
Stage parse_stage(const std::string& s);
/// Output directory name under the subject directory.
std::string stage_dir_name(Stage s);
const std::vector<Stage>& prerequisites(Stage s);

struct StageRecord {
  std::string fingerprint;
  std::uint64_t seed = 0;
  std::map<std::string, std::string> inputs;   // path -> content hash
  std::map<std::string, std::string> outputs;  // path relative to the stage dir -> content hash
  double seconds = 0.0;

  nlohmann::json to_json() const;
  static StageRecord from_json(const nlohmann::json& j);
};

struct RunManifest {
  std::string subject;
  nlohmann::json config = nlohmann::json::object();
  nlohmann::json versions = nlohmann::json::object();
  std::map<std::string, StageRecord> stages;  // keyed by stage name

  nlohmann::json to_json() const;
  static RunManifest from_json(const nlohmann::json& j);
};

/// Empty manifest when the file does not exist yet.
RunManifest read_manifest(const std::filesystem::path& subject_dir);
/// Written to a temporary file and renamed into place.
void write_manifest(const std::filesystem::path& subject_dir, const RunManifest& manifest);

/// Content hash of every regular file under `dir`, keyed by generic relative path.
std::map<std::string, std::string> hash_tree(const std::filesystem::path& dir);

enum class StageStatus { kRan, kCached };
std::string to_string(StageStatus s);

struct StageOutcome {
  std::string subject;
  Stage stage = Stage::kPreprocess;
  StageStatus status = StageStatus::kRan;
  double seconds = 0.0;
};

std::filesystem::path subject_dir(const RunConfig& cfg, const std::string& subject);

/// Runs one stage for one subject. Throws DependencyError when a prerequisite
/// has not run or its outputs changed since it did.
StageOutcome run_stage(Stage stage, const RunConfig& cfg, const std::string& subject, bool force = false);

/// Every subject, every stage in order (or only `only`).
std::vector<StageOutcome> run_pipeline(const RunConfig& cfg, std::optional<Stage> only = std::nullopt,
                                       bool force = false,
                                       const std::function<void(const StageOutcome&)>& progress = {});

// Stage bodies with explicit inputs; run_stage wires them to the run layout.
// Each writes into `out`, which it creates.

/// `subject` empty: accept whatever subject the bundle declares.
void preprocess_bundle(const std::filesystem::path& manifest, const std::string& subject,
                       const dataset::PrepareOptions& options, const std::filesystem::path& out);
void train_brain(const std::filesystem::path& prepared_dir, const BrainStageConfig& cfg, std::uint64_t seed,
                 const std::filesystem::path& out);
void train_caption(const std::filesystem::path& prepared_dir, const CaptionStageConfig& cfg,
                   const caption::DecodeConfig& decode, std::uint64_t seed, const std::filesystem::path& out);
/// Writes captions_vs_coco.jsonl, captions_vs_model.jsonl (reference = the
/// caption of the true embedding) and captions.jsonl for `protocol`.
void infer_captions(const std::filesystem::path& prepared_dir, const std::filesystem::path& brain_dir,
                    const std::filesystem::path& caption_dir, const caption::DecodeConfig& decode,
                    metrics::Protocol protocol, const std::filesystem::path& out);
void evaluate_captions(const std::filesystem::path& infer_dir, const EvaluateStageConfig& cfg,
                       const std::filesystem::path& out);
void write_subject_report(const std::string& subject, MapperKind mapper, metrics::Protocol protocol,
                          const std::filesystem::path& brain_dir, const std::filesystem::path& evaluate_dir,
                          const std::filesystem::path& out);

/// Lowercase, punctuation removed, single spaces; the caption model's training text.
std::string normalize_caption(const std::string& text);

}  // namespace volcap::pipeline
