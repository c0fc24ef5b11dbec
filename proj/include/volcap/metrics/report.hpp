// Copyright 2026 The volcap Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <filesystem>
#include <span>
#include <string>
#include <vector>

#include "json.hpp"
#include "volcap/encoders/encoders.hpp"
#include "volcap/metrics/scores.hpp"

namespace volcap::metrics {

/// Ground truth for a prediction: the stimulus' COCO captions, or the one
/// caption the captioning module produces from the true image embedding.
enum class Protocol { kVsCoco, kVsModel };

std::string to_string(Protocol p);
Protocol parse_protocol(const std::string& s);

struct EvalPair {
  std::string stimulus_id;
  std::string predicted;
  std::vector<std::string> references;
  Protocol protocol = Protocol::kVsCoco;

  /// >= 1 reference; exactly one under vs_model.
  void validate() const;
  bool operator==(const EvalPair&) const = default;
};

nlohmann::json to_json(const EvalPair& p);
EvalPair eval_pair_from_json(const nlohmann::json& j);

/// One compact JSON object per line, in the given order.
void write_eval_pairs(const std::filesystem::path& path, std::span<const EvalPair> pairs);
std::vector<EvalPair> read_eval_pairs(const std::filesystem::path& path);

/// Text towers behind the Sentence, CLIP-B and CLIP-L rows.
struct TextEncoders {
  const encoders::TextEncoder* sentence = nullptr;
  const encoders::TextEncoder* clip_b = nullptr;
  const encoders::TextEncoder* clip_l = nullptr;
};

struct PairScores {
  double meteor = 0.0;
  double rouge1 = 0.0;
  double rouge_l = 0.0;
  double sentence_pct = 0.0;
  double clip_b_pct = 0.0;
  double clip_l_pct = 0.0;
};

PairScores score_pair(const EvalPair& pair, const TextEncoders& enc, const MeteorOptions& meteor = {});

struct MetricReport {
  Protocol protocol = Protocol::kVsCoco;
  double meteor = 0.0;
  double rouge1 = 0.0;
  double rouge_l = 0.0;
  double sentence_pct = 0.0;
  double clip_b_pct = 0.0;
  double clip_l_pct = 0.0;
  std::size_t n_pairs = 0;
  bool meteor_stemming = false;
  std::string encoder_source;  // "stub" or the store directory

  nlohmann::json to_json() const;
  static MetricReport from_json(const nlohmann::json& j);
  /// Values in table row order.
  std::vector<double> row_values() const;
};

/// Per-metric mean over pairs. Throws ValidationError on an empty list or
/// mixed protocols.
MetricReport build_report(std::span<const EvalPair> pairs, const TextEncoders& enc, const MeteorOptions& meteor = {});

/// Row labels in table order: METEOR, ROUGE-1, ROUGE-L, then the three similarity rows.
const std::vector<std::string>& metric_names();

struct TableColumn {
  std::string group;  // e.g. "fMRI vs COCO"
  std::string name;   // e.g. "Ours", "Wide CNN"
  std::vector<double> values;  // row_values()
};

/// Plain-text table: a group header row, a column header row, then six metric
/// rows. Scores print with three decimals; percentages with
/// `percent_decimals` and a trailing '%'.
std::string render_table(std::span<const TableColumn> columns, int percent_decimals);

std::string protocol_heading(Protocol p);

}  // namespace volcap::metrics
