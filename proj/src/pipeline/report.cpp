// Copyright 2026 The volcap Authors
// SPDX-License-Identifier: Apache-2.0

#include "volcap/pipeline/report.hpp"

#include <algorithm>
#include <cstdio>
#include <fstream>
#include <map>
#include <set>

#include "volcap/error.hpp"
#include "volcap/hash.hpp"

namespace volcap::pipeline {

namespace fs = std::filesystem;
using nlohmann::json;

double dimensional_efficiency(std::size_t tokens, std::size_t dim, std::size_t ours_dim) {
  if (ours_dim == 0) throw ValidationError("dimensional efficiency: our embedding dimension is zero");
  if (tokens == 0 || dim == 0) throw ValidationError("dimensional efficiency: baseline dimensions must be positive");
  return static_cast<double>(tokens) * static_cast<double>(dim) / static_cast<double>(ours_dim);
}

std::string efficiency_line(std::size_t ours_dim) {
  const double r = dimensional_efficiency(kBaselineTokens, kBaselineDim, ours_dim);
  char buf[160];
  std::snprintf(buf, sizeof buf, "Target embedding: %zu dims vs %zux%zu baseline (1/%.2f of the space)", ours_dim,
                kBaselineTokens, kBaselineDim, r);
  return buf;
}

EncoderSet load_text_encoders(const std::string& spec) {
  EncoderSet s;
  s.source = spec;
  if (spec == "stub") {
    s.sentence = std::make_unique<encoders::StubTextEncoder>(768, fnv1a64("sentence"));
    s.clip_b = std::make_unique<encoders::StubTextEncoder>(512, fnv1a64("clip_b"));
    s.clip_l = std::make_unique<encoders::StubTextEncoder>(768, fnv1a64("clip_l"));
    return s;
  }
  const fs::path dir(spec);
  s.sentence = std::make_unique<encoders::PrecomputedTextEncoder>(encoders::load_text_store(dir / "sentence"));
  s.clip_b = std::make_unique<encoders::PrecomputedTextEncoder>(encoders::load_text_store(dir / "clip_b"));
  s.clip_l = std::make_unique<encoders::PrecomputedTextEncoder>(encoders::load_text_store(dir / "clip_l"));
  return s;
}

json SubjectReport::to_json() const {
  return {{"subject", subject},
          {"mapper", pipeline::to_string(mapper)},
          {"protocol", metrics::to_string(protocol)},
          {"metrics", {{"vs_coco", vs_coco.to_json()}, {"vs_model", vs_model.to_json()}}},
          {"brain", {{"parameter_count", parameter_count}, {"embedding_dim", embedding_dim}}},
          {"dimensional_efficiency",
           {{"baseline", {kBaselineTokens, kBaselineDim}},
            {"ours", embedding_dim},
            {"ratio", embedding_dim ? dimensional_efficiency(kBaselineTokens, kBaselineDim, embedding_dim) : 0.0}}}};
}

SubjectReport SubjectReport::from_json(const json& j) {
  SubjectReport r;
  r.subject = j.at("subject").get<std::string>();
  r.mapper = parse_mapper_kind(j.at("mapper").get<std::string>());
  r.protocol = metrics::parse_protocol(j.at("protocol").get<std::string>());
  r.vs_coco = metrics::MetricReport::from_json(j.at("metrics").at("vs_coco"));
  r.vs_model = metrics::MetricReport::from_json(j.at("metrics").at("vs_model"));
  r.parameter_count = j.at("brain").at("parameter_count").get<std::size_t>();
  r.embedding_dim = j.at("brain").at("embedding_dim").get<std::size_t>();
  return r;
}

std::string render_subject_table(const SubjectReport& r) {
  const std::vector<metrics::TableColumn> cols{
      {metrics::protocol_heading(metrics::Protocol::kVsCoco), "Ours", r.vs_coco.row_values()},
      {metrics::protocol_heading(metrics::Protocol::kVsModel), "Ours", r.vs_model.row_values()}};
  return metrics::render_table(cols, 1);
}

SubjectReport read_subject_report(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw LoadError("missing report: " + path.string());
  try {
    return SubjectReport::from_json(json::parse(in));
  } catch (const json::exception& e) {
    throw ValidationError(path.string() + ": " + e.what());
  } catch (const ConfigError& e) {
    throw ValidationError(path.string() + ": " + e.what());
  }
}

std::vector<SubjectReport> collect_reports(std::span<const fs::path> paths) {
  std::vector<SubjectReport> out;
  for (const auto& p : paths) {
    if (fs::is_regular_file(p)) {
      out.push_back(read_subject_report(p));
      continue;
    }
    if (fs::is_regular_file(p / "report" / "report.json")) {
      out.push_back(read_subject_report(p / "report" / "report.json"));
      continue;
    }
    std::vector<fs::path> found;
    if (fs::is_directory(p)) {
      for (const auto& e : fs::directory_iterator(p)) {
        if (e.is_directory() && fs::is_regular_file(e.path() / "report" / "report.json")) {
          found.push_back(e.path() / "report" / "report.json");
        }
      }
    }
    if (found.empty()) throw LoadError("no report.json under " + p.string() + " (run the report stage first)");
    std::sort(found.begin(), found.end());
    for (const auto& f : found) out.push_back(read_subject_report(f));
  }
  return out;
}

AblationTable ablation_report(std::span<const SubjectReport> reports) {
  if (reports.empty()) throw ValidationError("ablation report: no runs given");
  AblationTable t;
  t.protocol = reports.front().protocol;
  std::map<MapperKind, std::vector<const SubjectReport*>> groups;
  for (const auto& r : reports) {
    if (r.protocol != t.protocol) {
      throw ValidationError("ablation report: protocol mismatch (" + metrics::to_string(t.protocol) + " vs " +
                            metrics::to_string(r.protocol) + " for " + r.subject + ")");
    }
    auto& g = groups[r.mapper];
    for (const auto* other : g) {
      if (other->subject == r.subject) {
        throw ValidationError("ablation report: two " + to_string(r.mapper) + " reports for subject " + r.subject);
      }
    }
    g.push_back(&r);
  }
  for (const auto& [kind, members] : groups) {
    std::vector<double> mean(metrics::metric_names().size(), 0.0);
    std::vector<std::string> subjects;
    for (const auto* r : members) {
      const auto v = r->primary().row_values();
      for (std::size_t i = 0; i < mean.size(); ++i) mean[i] += v[i];
      subjects.push_back(r->subject);
    }
    for (double& m : mean) m /= static_cast<double>(members.size());
    t.columns.push_back({metrics::protocol_heading(t.protocol), display_name(kind), mean});
    t.subjects.push_back(std::move(subjects));
  }
  t.text = metrics::render_table(t.columns, 2);
  std::set<std::size_t> dims;
  for (const auto& r : reports) dims.insert(r.embedding_dim);
  if (dims.size() == 1 && *dims.begin() > 0) t.text += "\n" + efficiency_line(*dims.begin());
  return t;
}

}  // namespace volcap::pipeline
