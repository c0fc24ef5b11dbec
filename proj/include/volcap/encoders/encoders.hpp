// Copyright 2026 The volcap Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <string>
#include <string_view>
#include <vector>

namespace volcap::encoders {

/// stimulus_id -> target embedding.
class VisionEncoder {
 public:
  virtual ~VisionEncoder() = default;
  virtual std::size_t output_dim() const = 0;
  virtual std::vector<double> encode(const std::string& stimulus_id) const = 0;
};

/// text -> vector.
class TextEncoder {
 public:
  virtual ~TextEncoder() = default;
  virtual std::size_t output_dim() const = 0;
  virtual std::vector<double> encode(const std::string& text) const = 0;
};

/// Unit-norm Gaussian direction keyed by (input, seed): FNV-1a over the input
/// seeds a splitmix64 counter stream.
std::vector<double> stub_encode(std::string_view input, std::size_t dim, std::uint64_t seed);

class StubVisionEncoder final : public VisionEncoder {
 public:
  StubVisionEncoder(std::size_t dim, std::uint64_t seed);
  std::size_t output_dim() const override { return dim_; }
  std::vector<double> encode(const std::string& stimulus_id) const override;

 private:
  std::size_t dim_;
  std::uint64_t seed_;
};

class StubTextEncoder final : public TextEncoder {
 public:
  StubTextEncoder(std::size_t dim, std::uint64_t seed);
  std::size_t output_dim() const override { return dim_; }
  std::vector<double> encode(const std::string& text) const override;

 private:
  std::size_t dim_;
  std::uint64_t seed_;
};

/// Vectors read from `<dir>/<stimulus_id>.vct` (or `<dir>/embeddings/`).
class PrecomputedVisionEncoder final : public VisionEncoder {
 public:
  explicit PrecomputedVisionEncoder(std::map<std::string, std::vector<double>> table);
  std::size_t output_dim() const override { return dim_; }
  std::vector<double> encode(const std::string& stimulus_id) const override;
  const std::map<std::string, std::vector<double>>& table() const { return table_; }

 private:
  std::map<std::string, std::vector<double>> table_;
  std::size_t dim_ = 0;
};

/// Exact-string lookup through `<dir>/text_index.json` ({text: file}).
class PrecomputedTextEncoder final : public TextEncoder {
 public:
  explicit PrecomputedTextEncoder(std::map<std::string, std::vector<double>> table);
  std::size_t output_dim() const override { return dim_; }
  std::vector<double> encode(const std::string& text) const override;

 private:
  std::map<std::string, std::vector<double>> table_;
  std::size_t dim_ = 0;
};

PrecomputedVisionEncoder load_vision_store(const std::filesystem::path& dir);
PrecomputedTextEncoder load_text_store(const std::filesystem::path& dir);

void write_vision_store(const std::filesystem::path& dir, const std::map<std::string, std::vector<double>>& table);
/// Tensor files are named by position (text_000000.vct, ...).
void write_text_store(const std::filesystem::path& dir, const std::map<std::string, std::vector<double>>& table);

/// Wiring-time check; throws DimensionError naming `consumer`.
void require_dim(std::size_t actual, std::size_t expected, const std::string& consumer);

void l2_normalize(std::vector<double>& v);

}  // namespace volcap::encoders
