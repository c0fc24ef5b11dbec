// Copyright 2026 The volcap Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <span>
#include <string>
#include <vector>

#include "volcap/encoders/encoders.hpp"

namespace volcap::metrics {

using Tokens = std::vector<std::string>;

struct MeteorOptions {
  double alpha = 0.9;
  double beta = 3.0;
  double gamma = 0.5;
  bool stem = false;  // second matching stage on Porter stems
};

struct Alignment {
  std::vector<std::pair<std::size_t, std::size_t>> pairs;  // (pred index, ref index), sorted by pred index
  std::size_t chunks = 0;
};

/// Maximum-cardinality unigram alignment with the fewest chunks. Exact
/// matches are fixed first; the stem stage only links words left over.
Alignment meteor_align(const Tokens& pred, const Tokens& ref, bool stem);

double meteor_single(const Tokens& pred, const Tokens& ref, const MeteorOptions& opts = {});
double meteor_score(const std::string& pred, std::span<const std::string> refs, const MeteorOptions& opts = {});

/// Clipped n-gram F1.
double rouge_n_single(const Tokens& pred, const Tokens& ref, std::size_t n);
double rouge_n(const std::string& pred, std::span<const std::string> refs, std::size_t n = 1);

std::size_t lcs_length(const Tokens& a, const Tokens& b);

/// F = (1 + beta^2) P R / (R + beta^2 P) with P = LCS/|pred|, R = LCS/|ref|.
constexpr double kRougeLBeta = 1.2;
double rouge_l_single(const Tokens& pred, const Tokens& ref, double beta = kRougeLBeta);
double rouge_l(const std::string& pred, std::span<const std::string> refs, double beta = kRougeLBeta);

double cosine(std::span<const double> a, std::span<const double> b);

/// 100 * cosine of the two encodings. Throws NumericError naming the string
/// whose embedding has zero norm.
double embedding_text_similarity(const std::string& pred, const std::string& ref, const encoders::TextEncoder& enc);

/// Max over references.
double embedding_text_similarity(const std::string& pred, std::span<const std::string> refs,
                                 const encoders::TextEncoder& enc);

}  // namespace volcap::metrics
