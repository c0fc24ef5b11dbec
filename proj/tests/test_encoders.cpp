// Copyright 2026 The volcap Authors
// SPDX-License-Identifier: Apache-2.0

#include <cmath>
#include <filesystem>

#include "doctest.h"
#include "volcap/encoders/encoders.hpp"
#include "volcap/error.hpp"
#include "volcap/metrics/scores.hpp"
#include "volcap/rng.hpp"
#include "volcap/tensor_io.hpp"

using namespace volcap;
using namespace volcap::encoders;

namespace {

std::filesystem::path fresh_dir(const std::string& name) {
  const auto d = std::filesystem::temp_directory_path() / name;
  std::filesystem::remove_all(d);
  std::filesystem::create_directories(d);
  return d;
}

double norm(const std::vector<double>& v) {
  double s = 0.0;
  for (double x : v) s += x * x;
  return std::sqrt(s);
}

}  // namespace

TEST_CASE("stub encoder is a pure unit-norm function of its inputs") {
  const auto a = stub_encode("stim-001", 1536, 7);
  CHECK(a == stub_encode("stim-001", 1536, 7));
  CHECK(a != stub_encode("stim-001", 1536, 8));
  CHECK(std::abs(norm(a) - 1.0) < 1e-6);
  CHECK(stub_encode("x", 1, 0) == std::vector<double>{stub_encode("x", 1, 0)[0]});
  CHECK(std::abs(std::abs(stub_encode("x", 1, 0)[0]) - 1.0) < 1e-12);
  CHECK(std::abs(norm(stub_encode("", 3, 0)) - 1.0) < 1e-6);
  CHECK_THROWS_AS(stub_encode("x", 0, 0), ConfigError);
  CHECK(StubVisionEncoder(16, 2).encode("s") == stub_encode("s", 16, 2));
  CHECK(StubTextEncoder(16, 2).output_dim() == 16);
}

TEST_CASE("distinct stub inputs are nearly orthogonal") {
  Rng rng(3);
  double worst = 0.0;
  for (int i = 0; i < 100; ++i) {
    const std::string a = "stim-" + std::to_string(rng.below(1000000));
    std::string b = "stim-" + std::to_string(rng.below(1000000));
    if (a == b) b += "x";
    worst = std::max(worst, std::abs(metrics::cosine(stub_encode(a, 1536, 1), stub_encode(b, 1536, 1))));
  }
  CHECK(worst < 0.2);
}

TEST_CASE("vision store round-trips bit-exactly") {
  const auto dir = fresh_dir("volcap_test_vision_store");
  std::map<std::string, std::vector<double>> table;
  for (int i = 0; i < 10; ++i) table["stim" + std::to_string(i)] = stub_encode(std::to_string(i), 1536, 5);
  table["stim3"][0] = 0.1 + 0.2;  // a value with no short decimal form
  write_vision_store(dir / "embeddings", table);
  const auto enc = load_vision_store(dir);
  CHECK(enc.output_dim() == 1536);
  for (const auto& [k, v] : table) CHECK(enc.encode(k) == v);
  CHECK_THROWS_AS(enc.encode("stim99"), MissingKeyError);

  write_tensor(dir / "embeddings" / "odd.vct", Tensor::vector({1.0, 2.0}));
  CHECK_THROWS_AS(load_vision_store(dir), ValidationError);
  CHECK_THROWS_AS(load_vision_store(dir / "nope"), LoadError);
}

TEST_CASE("text store looks up exact strings") {
  const auto dir = fresh_dir("volcap_test_text_store");
  const std::map<std::string, std::vector<double>> table{{"a dog", {1.0, 0.0}}, {"A dog", {0.0, 1.0}}};
  write_text_store(dir, table);
  const auto enc = load_text_store(dir);
  CHECK(enc.output_dim() == 2);
  CHECK(enc.encode("a dog") == std::vector<double>{1.0, 0.0});
  CHECK(enc.encode("A dog") == std::vector<double>{0.0, 1.0});
  try {
    enc.encode("a cat");
    FAIL("expected a missing key");
  } catch (const MissingKeyError& e) {
    CHECK(std::string(e.what()).find("a cat") != std::string::npos);
  }
}

TEST_CASE("dimension checks happen at wiring time") {
  CHECK_NOTHROW(require_dim(1536, 1536, "brain mapper"));
  CHECK_THROWS_AS(require_dim(768, 1536, "brain mapper"), DimensionError);
  std::vector<double> z(3, 0.0);
  CHECK_THROWS_AS(l2_normalize(z), NumericError);
}
