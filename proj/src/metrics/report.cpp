// Copyright 2026 The volcap Authors
// SPDX-License-Identifier: Apache-2.0

#include "volcap/metrics/report.hpp"

#include <algorithm>
#include <cstdio>
#include <fstream>
#include <sstream>

#include "volcap/error.hpp"

namespace volcap::metrics {
namespace {

std::string fixed(double v, int decimals) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.*f", decimals, v);
  return buf;
}

std::string pad_right(const std::string& s, std::size_t width) {
  return s.size() >= width ? s : s + std::string(width - s.size(), ' ');
}

}  // namespace

std::string to_string(Protocol p) { return p == Protocol::kVsCoco ? "vs_coco" : "vs_model"; }

Protocol parse_protocol(const std::string& s) {
  if (s == "vs_coco") return Protocol::kVsCoco;
  if (s == "vs_model") return Protocol::kVsModel;
  throw ValidationError("unknown protocol '" + s + "' (expected vs_coco|vs_model)");
}

std::string protocol_heading(Protocol p) { return p == Protocol::kVsCoco ? "fMRI vs COCO" : "fMRI vs Model"; }

void EvalPair::validate() const {
  if (references.empty()) throw ValidationError("pair " + stimulus_id + " has no references");
  if (protocol == Protocol::kVsModel && references.size() != 1) {
    throw ValidationError("pair " + stimulus_id + ": vs_model takes exactly one reference, got " +
                          std::to_string(references.size()));
  }
}

nlohmann::json to_json(const EvalPair& p) {
  nlohmann::json j;
  j["stimulus_id"] = p.stimulus_id;
  j["predicted"] = p.predicted;
  j["references"] = p.references;
  j["protocol"] = to_string(p.protocol);
  return j;
}

EvalPair eval_pair_from_json(const nlohmann::json& j) {
  EvalPair p;
  try {
    p.stimulus_id = j.at("stimulus_id").get<std::string>();
    p.predicted = j.at("predicted").get<std::string>();
    p.references = j.at("references").get<std::vector<std::string>>();
    p.protocol = parse_protocol(j.at("protocol").get<std::string>());
  } catch (const nlohmann::json::exception& e) {
    throw ValidationError(std::string("malformed caption record: ") + e.what());
  }
  p.validate();
  return p;
}

void write_eval_pairs(const std::filesystem::path& path, std::span<const EvalPair> pairs) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw LoadError("cannot write " + path.string());
  for (const auto& p : pairs) out << to_json(p).dump() << '\n';
}

std::vector<EvalPair> read_eval_pairs(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw LoadError("cannot open " + path.string());
  std::vector<EvalPair> out;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    nlohmann::json j;
    try {
      j = nlohmann::json::parse(line);
    } catch (const nlohmann::json::exception& e) {
      throw ValidationError(path.string() + ":" + std::to_string(lineno) + ": " + e.what());
    }
    out.push_back(eval_pair_from_json(j));
  }
  return out;
}

PairScores score_pair(const EvalPair& pair, const TextEncoders& enc, const MeteorOptions& meteor) {
  pair.validate();
  if (!enc.sentence || !enc.clip_b || !enc.clip_l) throw ConfigError("score_pair: all three text encoders are required");
  PairScores s;
  s.meteor = meteor_score(pair.predicted, pair.references, meteor);
  s.rouge1 = rouge_n(pair.predicted, pair.references, 1);
  s.rouge_l = rouge_l(pair.predicted, pair.references);
  s.sentence_pct = embedding_text_similarity(pair.predicted, pair.references, *enc.sentence);
  s.clip_b_pct = embedding_text_similarity(pair.predicted, pair.references, *enc.clip_b);
  s.clip_l_pct = embedding_text_similarity(pair.predicted, pair.references, *enc.clip_l);
  return s;
}

MetricReport build_report(std::span<const EvalPair> pairs, const TextEncoders& enc, const MeteorOptions& meteor) {
  if (pairs.empty()) throw ValidationError("build_report: no caption pairs");
  MetricReport r;
  r.protocol = pairs.front().protocol;
  r.meteor_stemming = meteor.stem;
  for (const auto& p : pairs) {
    if (p.protocol != r.protocol) {
      throw ValidationError("build_report: mixed protocols (" + to_string(r.protocol) + " and " + to_string(p.protocol) +
                            ")");
    }
    const PairScores s = score_pair(p, enc, meteor);
    r.meteor += s.meteor;
    r.rouge1 += s.rouge1;
    r.rouge_l += s.rouge_l;
    r.sentence_pct += s.sentence_pct;
    r.clip_b_pct += s.clip_b_pct;
    r.clip_l_pct += s.clip_l_pct;
  }
  const double n = static_cast<double>(pairs.size());
  r.meteor /= n;
  r.rouge1 /= n;
  r.rouge_l /= n;
  r.sentence_pct /= n;
  r.clip_b_pct /= n;
  r.clip_l_pct /= n;
  r.n_pairs = pairs.size();
  return r;
}

nlohmann::json MetricReport::to_json() const {
  nlohmann::json j;
  j["protocol"] = to_string(protocol);
  j["n_pairs"] = n_pairs;
  j["meteor"] = meteor;
  j["rouge1"] = rouge1;
  j["rougeL"] = rouge_l;
  j["sentence_pct"] = sentence_pct;
  j["clip_b_pct"] = clip_b_pct;
  j["clip_l_pct"] = clip_l_pct;
  j["meteor_stages"] = meteor_stemming ? "exact+stem" : "exact";
  j["encoders"] = encoder_source;
  return j;
}

MetricReport MetricReport::from_json(const nlohmann::json& j) {
  MetricReport r;
  try {
    r.protocol = parse_protocol(j.at("protocol").get<std::string>());
    r.n_pairs = j.at("n_pairs").get<std::size_t>();
    r.meteor = j.at("meteor").get<double>();
    r.rouge1 = j.at("rouge1").get<double>();
    r.rouge_l = j.at("rougeL").get<double>();
    r.sentence_pct = j.at("sentence_pct").get<double>();
    r.clip_b_pct = j.at("clip_b_pct").get<double>();
    r.clip_l_pct = j.at("clip_l_pct").get<double>();
    r.meteor_stemming = j.value("meteor_stages", "exact") == "exact+stem";
    r.encoder_source = j.value("encoders", "");
  } catch (const nlohmann::json::exception& e) {
    throw ValidationError(std::string("malformed metric report: ") + e.what());
  }
  return r;
}

std::vector<double> MetricReport::row_values() const {
  return {meteor, rouge1, rouge_l, sentence_pct, clip_b_pct, clip_l_pct};
}

const std::vector<std::string>& metric_names() {
  static const std::vector<std::string> names{"METEOR", "ROUGE-1", "ROUGE-L", "Sentence", "CLIP-B", "CLIP-L"};
  return names;
}

std::string render_table(std::span<const TableColumn> columns, int percent_decimals) {
  if (columns.empty()) throw ValidationError("render_table: no columns");
  const auto& names = metric_names();
  std::vector<std::vector<std::string>> cells(names.size());
  for (const auto& c : columns) {
    if (c.values.size() != names.size()) throw DimensionError("render_table: column " + c.name + " needs six values");
    for (std::size_t r = 0; r < names.size(); ++r) {
      cells[r].push_back(r < 3 ? fixed(c.values[r], 3) : fixed(c.values[r], percent_decimals) + "%");
    }
  }
  std::size_t label_w = std::string("Metrics").size();
  for (const auto& n : names) label_w = std::max(label_w, n.size());
  std::vector<std::size_t> width(columns.size());
  for (std::size_t c = 0; c < columns.size(); ++c) {
    width[c] = columns[c].name.size();
    for (const auto& row : cells) width[c] = std::max(width[c], row[c].size());
  }
  // Consecutive columns with the same group share one spanning header; the
  // last column of a group widens when the label is longer than the span.
  for (std::size_t c = 0; c < columns.size();) {
    std::size_t e = c;
    std::size_t span = 0;
    while (e < columns.size() && columns[e].group == columns[c].group) span += width[e++] + 3;
    if (columns[c].group.size() + 3 > span) width[e - 1] += columns[c].group.size() + 3 - span;
    c = e;
  }
  std::ostringstream out;
  out << std::string(label_w, ' ');
  for (std::size_t c = 0; c < columns.size();) {
    std::size_t e = c;
    std::size_t span = 0;
    while (e < columns.size() && columns[e].group == columns[c].group) span += width[e++] + 3;
    out << " | " << pad_right(columns[c].group, span - 3);
    c = e;
  }
  out << '\n' << pad_right("Metrics", label_w);
  for (std::size_t c = 0; c < columns.size(); ++c) out << " | " << pad_right(columns[c].name, width[c]);
  out << '\n';
  for (std::size_t r = 0; r < names.size(); ++r) {
    out << pad_right(names[r], label_w);
    for (std::size_t c = 0; c < columns.size(); ++c) out << " | " << pad_right(cells[r][c], width[c]);
    out << '\n';
  }
  std::string s = out.str();
  // Trailing spaces carry no layout.
  std::string trimmed;
  std::istringstream lines(s);
  for (std::string line; std::getline(lines, line);) {
    line.erase(line.find_last_not_of(' ') + 1);
    trimmed += line + '\n';
  }
  return trimmed;
}

}  // namespace volcap::metrics
