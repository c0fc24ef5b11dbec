// Copyright 2026 The volcap Authors
// SPDX-License-Identifier: Apache-2.0

#include "volcap/encoders/encoders.hpp"

#include <cmath>
#include <fstream>
#include <numbers>

#include "json.hpp"
#include "volcap/error.hpp"
#include "volcap/hash.hpp"
#include "volcap/tensor_io.hpp"

namespace volcap::encoders {
namespace {

namespace fs = std::filesystem;

// Top 53 bits as a double in (0, 1).
double unit_open(std::uint64_t bits) { return (static_cast<double>(bits >> 11) + 0.5) * 0x1.0p-53; }

std::size_t table_dim(const std::map<std::string, std::vector<double>>& table, const std::string& what) {
  if (table.empty()) throw ValidationError(what + ": empty store");
  const std::size_t dim = table.begin()->second.size();
  for (const auto& [key, v] : table) {
    if (v.size() != dim) {
      throw ValidationError(what + ": entry '" + key + "' has dim " + std::to_string(v.size()) + ", expected " +
                            std::to_string(dim));
    }
  }
  if (dim == 0) throw ValidationError(what + ": zero-dimensional embeddings");
  return dim;
}

std::vector<double> read_vector(const fs::path& p) {
  const Tensor t = read_tensor(p);
  if (t.rank() != 1 && !(t.rank() == 2 && t.dim(0) == 1)) {
    throw ValidationError("embedding file " + p.string() + " has shape " + shape_str(t.shape()) + "; expected a vector");
  }
  return t.values();
}

}  // namespace

std::vector<double> stub_encode(std::string_view input, std::size_t dim, std::uint64_t seed) {
  if (dim == 0) throw ConfigError("stub_encode: dim must be >= 1");
  const std::uint64_t key = fnv1a64(input, splitmix64(seed) ^ kFnvOffset);
  std::vector<double> v(dim);
  std::uint64_t counter = 0;
  for (std::size_t i = 0; i < dim; i += 2) {
    const double u1 = unit_open(splitmix64(key + counter++));
    const double u2 = unit_open(splitmix64(key + counter++));
    const double r = std::sqrt(-2.0 * std::log(u1));
    v[i] = r * std::cos(2.0 * std::numbers::pi * u2);
    if (i + 1 < dim) v[i + 1] = r * std::sin(2.0 * std::numbers::pi * u2);
  }
  l2_normalize(v);
  return v;
}

StubVisionEncoder::StubVisionEncoder(std::size_t dim, std::uint64_t seed) : dim_(dim), seed_(seed) {
  if (dim == 0) throw ConfigError("stub vision encoder: dim must be >= 1");
}

std::vector<double> StubVisionEncoder::encode(const std::string& stimulus_id) const {
  return stub_encode(stimulus_id, dim_, seed_);
}

StubTextEncoder::StubTextEncoder(std::size_t dim, std::uint64_t seed) : dim_(dim), seed_(seed) {
  if (dim == 0) throw ConfigError("stub text encoder: dim must be >= 1");
}

std::vector<double> StubTextEncoder::encode(const std::string& text) const { return stub_encode(text, dim_, seed_); }

PrecomputedVisionEncoder::PrecomputedVisionEncoder(std::map<std::string, std::vector<double>> table)
    : table_(std::move(table)), dim_(table_dim(table_, "vision store")) {}

std::vector<double> PrecomputedVisionEncoder::encode(const std::string& stimulus_id) const {
  const auto it = table_.find(stimulus_id);
  if (it == table_.end()) throw MissingKeyError("vision store has no embedding for stimulus '" + stimulus_id + "'");
  return it->second;
}

PrecomputedTextEncoder::PrecomputedTextEncoder(std::map<std::string, std::vector<double>> table)
    : table_(std::move(table)), dim_(table_dim(table_, "text store")) {}

std::vector<double> PrecomputedTextEncoder::encode(const std::string& text) const {
  const auto it = table_.find(text);
  if (it == table_.end()) throw MissingKeyError("text store has no embedding for \"" + text + "\"");
  return it->second;
}

PrecomputedVisionEncoder load_vision_store(const fs::path& dir) {
  fs::path root = dir;
  if (fs::is_directory(dir / "embeddings")) root = dir / "embeddings";
  if (!fs::is_directory(root)) throw LoadError("vision store " + dir.string() + " is not a directory");
  std::map<std::string, std::vector<double>> table;
  for (const auto& entry : fs::directory_iterator(root)) {
    if (entry.path().extension() != ".vct") continue;
    table[entry.path().stem().string()] = read_vector(entry.path());
  }
  return PrecomputedVisionEncoder(std::move(table));
}

PrecomputedTextEncoder load_text_store(const fs::path& dir) {
  const fs::path index = dir / "text_index.json";
  std::ifstream in(index);
  if (!in) throw LoadError("cannot open " + index.string());
  nlohmann::json j;
  try {
    in >> j;
  } catch (const nlohmann::json::exception& e) {
    throw LoadError(index.string() + ": " + e.what());
  }
  if (!j.is_object()) throw LoadError(index.string() + ": expected an object mapping text to tensor files");
  std::map<std::string, std::vector<double>> table;
  for (const auto& [text, file] : j.items()) table[text] = read_vector(dir / file.get<std::string>());
  return PrecomputedTextEncoder(std::move(table));
}

void write_vision_store(const fs::path& dir, const std::map<std::string, std::vector<double>>& table) {
  table_dim(table, "vision store");
  fs::create_directories(dir);
  for (const auto& [id, v] : table) write_tensor(dir / (id + ".vct"), Tensor::vector(v));
}

void write_text_store(const fs::path& dir, const std::map<std::string, std::vector<double>>& table) {
  table_dim(table, "text store");
  fs::create_directories(dir);
  nlohmann::json index = nlohmann::json::object();
  std::size_t i = 0;
  for (const auto& [text, v] : table) {
    char name[32];
    std::snprintf(name, sizeof name, "text_%06zu.vct", i++);
    write_tensor(dir / name, Tensor::vector(v));
    index[text] = name;
  }
  std::ofstream(dir / "text_index.json") << index.dump(2) << '\n';
}

void require_dim(std::size_t actual, std::size_t expected, const std::string& consumer) {
  if (actual != expected) {
    throw DimensionError(consumer + " expects dimension " + std::to_string(expected) + " but the encoder produces " +
                         std::to_string(actual));
  }
}

void l2_normalize(std::vector<double>& v) {
  double s = 0.0;
  for (double x : v) s += x * x;
  const double n = std::sqrt(s);
  if (n == 0.0) throw NumericError("cannot normalize a zero vector");
  for (double& x : v) x /= n;
}

}  // namespace volcap::encoders
