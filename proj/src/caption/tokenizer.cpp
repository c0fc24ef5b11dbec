// Copyright 2026 The volcap Authors
// SPDX-License-Identifier: Apache-2.0

#include "volcap/caption/tokenizer.hpp"

#include <algorithm>
#include <fstream>
#include <set>
#include <sstream>

#include "json.hpp"
#include "volcap/error.hpp"

namespace volcap::caption {

std::vector<std::string> split_whitespace(const std::string& text) {
  std::istringstream in(text);
  std::vector<std::string> out;
  for (std::string w; in >> w;) out.push_back(w);
  return out;
}

WhitespaceTokenizer::WhitespaceTokenizer(std::vector<std::string> words) {
  words_.push_back(kEos);
  for (auto& w : words) {
    if (w == kEos || ids_.count(w)) continue;
    if (w.empty() || split_whitespace(w).size() != 1) throw ConfigError("tokenizer: invalid vocabulary word '" + w + "'");
    ids_[w] = static_cast<int>(words_.size());
    words_.push_back(std::move(w));
  }
}

WhitespaceTokenizer WhitespaceTokenizer::from_corpus(std::span<const std::string> texts) {
  std::set<std::string> vocab;
  for (const auto& t : texts) {
    for (auto& w : split_whitespace(t)) vocab.insert(std::move(w));
  }
  return WhitespaceTokenizer(std::vector<std::string>(vocab.begin(), vocab.end()));
}

std::vector<int> WhitespaceTokenizer::encode(const std::string& text) const {
  std::vector<int> out;
  for (const auto& w : split_whitespace(text)) {
    auto it = ids_.find(w);
    if (it == ids_.end()) throw ValidationError("tokenizer: word '" + w + "' is not in the vocabulary");
    out.push_back(it->second);
  }
  return out;
}

std::vector<int> WhitespaceTokenizer::encode_with_eos(const std::string& text) const {
  auto ids = encode(text);
  ids.push_back(eos_id());
  return ids;
}

std::string WhitespaceTokenizer::decode(std::span<const int> ids) const {
  std::string out;
  for (int id : ids) {
    if (id == eos_id()) break;
    if (id < 0 || static_cast<std::size_t>(id) >= words_.size()) {
      throw DimensionError("tokenizer: id " + std::to_string(id) + " outside vocabulary of " +
                           std::to_string(words_.size()));
    }
    if (!out.empty()) out += ' ';
    out += words_[static_cast<std::size_t>(id)];
  }
  return out;
}

void WhitespaceTokenizer::save(const std::filesystem::path& path) const {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  nlohmann::json j = {{"kind", "whitespace"}, {"words", words_}};
  std::ofstream(path) << j.dump(2) << "\n";
}

WhitespaceTokenizer WhitespaceTokenizer::load(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw LoadError("missing file: " + path.string());
  try {
    const auto j = nlohmann::json::parse(in);
    auto words = j.at("words").get<std::vector<std::string>>();
    if (words.empty() || words.front() != kEos) throw ValidationError("tokenizer file must start with " + std::string(kEos));
    return WhitespaceTokenizer(std::vector<std::string>(words.begin() + 1, words.end()));
  } catch (const nlohmann::json::exception& e) {
    throw ValidationError("tokenizer file " + path.string() + ": " + e.what());
  }
}

}  // namespace volcap::caption
