// Copyright 2026 The volcap Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstddef>
#include <filesystem>
#include <memory>
#include <span>
#include <string>
#include <vector>

#include "json.hpp"
#include "volcap/encoders/encoders.hpp"
#include "volcap/metrics/report.hpp"
#include "volcap/pipeline/config.hpp"

namespace volcap::pipeline {

/// Patch-token target of the comparison baseline: 257 tokens x 1024 dims.
inline constexpr std::size_t kBaselineTokens = 257;
inline constexpr std::size_t kBaselineDim = 1024;

/// (tokens * dim) / ours_dim. Throws ValidationError on a zero argument.
double dimensional_efficiency(std::size_t tokens, std::size_t dim, std::size_t ours_dim);
/// One line stating the ratio against the baseline target.
std::string efficiency_line(std::size_t ours_dim);

/// Sentence / CLIP-B / CLIP-L text encoders for evaluation.
struct EncoderSet {
  std::unique_ptr<encoders::TextEncoder> sentence;
  std::unique_ptr<encoders::TextEncoder> clip_b;
  std::unique_ptr<encoders::TextEncoder> clip_l;
  std::string source;  // "stub" or the directory

  metrics::TextEncoders view() const { return {sentence.get(), clip_b.get(), clip_l.get()}; }
};

/// "stub": deterministic hash encoders (768 / 512 / 768 dims). Otherwise a
/// directory with sentence/, clip_b/ and clip_l/ text stores.
EncoderSet load_text_encoders(const std::string& spec);

struct SubjectReport {
  std::string subject;
  MapperKind mapper = MapperKind::kWide;
  metrics::Protocol protocol = metrics::Protocol::kVsCoco;  // the configured one
  metrics::MetricReport vs_coco;
  metrics::MetricReport vs_model;
  std::size_t parameter_count = 0;
  std::size_t embedding_dim = 0;

  const metrics::MetricReport& primary() const { return protocol == metrics::Protocol::kVsCoco ? vs_coco : vs_model; }
  nlohmann::json to_json() const;
  static SubjectReport from_json(const nlohmann::json& j);
};

/// Both protocols side by side, one "Ours" column each, 1-decimal percentages.
std::string render_subject_table(const SubjectReport& r);

SubjectReport read_subject_report(const std::filesystem::path& path);

/// Accepts report.json files, subject directories (<dir>/report/report.json)
/// and run directories (every subject directory below them).
std::vector<SubjectReport> collect_reports(std::span<const std::filesystem::path> paths);

struct AblationTable {
  metrics::Protocol protocol = metrics::Protocol::kVsCoco;
  std::vector<metrics::TableColumn> columns;  // Ridge, Linear, Shallow CNN, Wide CNN (those present)
  std::vector<std::vector<std::string>> subjects;  // per column
  std::string text;
};

/// Per-mapper mean over subjects of the configured protocol's metrics, in the
/// mapping-network comparison layout (2-decimal percentages). All reports must
/// share one protocol.
AblationTable ablation_report(std::span<const SubjectReport> reports);

}  // namespace volcap::pipeline
