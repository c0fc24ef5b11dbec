// Copyright 2026 The volcap Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <filesystem>
#include <map>
#include <span>
#include <string>
#include <vector>

namespace volcap::caption {

class Tokenizer {
 public:
  virtual ~Tokenizer() = default;
  /// Token ids without the end-of-sequence marker.
  virtual std::vector<int> encode(const std::string& text) const = 0;
  /// Stops at the first end-of-sequence id.
  virtual std::string decode(std::span<const int> ids) const = 0;
  virtual std::size_t vocab_size() const = 0;
  virtual int eos_id() const = 0;
};

/// Closed vocabulary over whitespace-separated words. Id 0 is "<eos>".
/// Words are case-sensitive and kept verbatim, so decode(encode(s)) only
/// normalizes whitespace.
class WhitespaceTokenizer : public Tokenizer {
 public:
  static constexpr const char* kEos = "<eos>";

  WhitespaceTokenizer() : WhitespaceTokenizer(std::vector<std::string>{}) {}
  explicit WhitespaceTokenizer(std::vector<std::string> words);
  /// Vocabulary of every word in `texts`, sorted.
  static WhitespaceTokenizer from_corpus(std::span<const std::string> texts);

  std::vector<int> encode(const std::string& text) const override;
  std::string decode(std::span<const int> ids) const override;
  std::size_t vocab_size() const override { return words_.size(); }
  int eos_id() const override { return 0; }
  const std::vector<std::string>& words() const { return words_; }

  /// encode() plus the end-of-sequence id.
  std::vector<int> encode_with_eos(const std::string& text) const;

  void save(const std::filesystem::path& path) const;
  static WhitespaceTokenizer load(const std::filesystem::path& path);

 private:
  std::vector<std::string> words_;
  std::map<std::string, int> ids_;
};

std::vector<std::string> split_whitespace(const std::string& text);

}  // namespace volcap::caption
