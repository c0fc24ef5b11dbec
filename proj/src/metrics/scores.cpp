// Copyright 2026 The volcap Authors
// SPDX-License-Identifier: Apache-2.0

#include "volcap/metrics/scores.hpp"

#include <algorithm>
#include <cmath>
#include <map>

#include "volcap/error.hpp"
#include "volcap/metrics/text.hpp"

namespace volcap::metrics {
namespace {

std::size_t count_chunks(std::vector<std::pair<std::size_t, std::size_t>> pairs) {
  if (pairs.empty()) return 0;
  std::sort(pairs.begin(), pairs.end());
  std::size_t chunks = 1;
  for (std::size_t i = 1; i < pairs.size(); ++i) {
    if (pairs[i].first != pairs[i - 1].first + 1 || pairs[i].second != pairs[i - 1].second + 1) ++chunks;
  }
  return chunks;
}

// Branch and bound over pred positions: each one either links to a free
// candidate ref position or stays unmatched. Without fixed pairs the chunk
// count of a partial alignment can only grow, which gives a second bound.
class AlignSearch {
 public:
  AlignSearch(std::vector<std::vector<std::size_t>> cand, std::vector<std::pair<std::size_t, std::size_t>> fixed,
              std::size_t ref_len)
      : cand_(std::move(cand)), fixed_(std::move(fixed)), used_(ref_len, false) {
    for (const auto& pr : fixed_) used_[pr.second] = true;
    remaining_.assign(cand_.size() + 1, 0);
    for (std::size_t i = cand_.size(); i-- > 0;) remaining_[i] = remaining_[i + 1] + (cand_[i].empty() ? 0 : 1);
  }

  std::vector<std::pair<std::size_t, std::size_t>> solve() {
    best_ = fixed_;
    best_chunks_ = count_chunks(best_);
    current_ = fixed_;
    dfs(0, 0);
    std::sort(best_.begin(), best_.end());
    return best_;
  }

 private:
  std::vector<std::vector<std::size_t>> cand_;
  std::vector<std::pair<std::size_t, std::size_t>> fixed_;
  std::vector<bool> used_;
  std::vector<std::size_t> remaining_;
  std::vector<std::pair<std::size_t, std::size_t>> current_;
  std::vector<std::pair<std::size_t, std::size_t>> best_;
  std::size_t best_chunks_ = 0;

  void dfs(std::size_t i, std::size_t partial_chunks) {
    const std::size_t reachable = current_.size() + remaining_[i];
    if (reachable < best_.size()) return;
    if (fixed_.empty() && reachable == best_.size() && !best_.empty() && partial_chunks >= best_chunks_) return;
    if (i == cand_.size()) {
      const std::size_t c = count_chunks(current_);
      if (current_.size() > best_.size() || (current_.size() == best_.size() && c < best_chunks_)) {
        best_ = current_;
        best_chunks_ = c;
      }
      return;
    }
    for (std::size_t r : cand_[i]) {
      if (used_[r]) continue;
      const bool extends = !current_.empty() && current_.back().first + 1 == i && current_.back().second + 1 == r;
      used_[r] = true;
      current_.emplace_back(i, r);
      dfs(i + 1, partial_chunks + (extends ? 0 : 1));
      current_.pop_back();
      used_[r] = false;
    }
    dfs(i + 1, partial_chunks);
  }
};

std::vector<std::pair<std::size_t, std::size_t>> align_stage(const Tokens& pred, const Tokens& ref,
                                                             const std::vector<std::pair<std::size_t, std::size_t>>& fixed,
                                                             const std::vector<std::string>& pred_keys,
                                                             const std::vector<std::string>& ref_keys) {
  std::vector<bool> pred_done(pred.size(), false);
  for (const auto& pr : fixed) pred_done[pr.first] = true;
  std::vector<std::vector<std::size_t>> cand(pred.size());
  for (std::size_t i = 0; i < pred.size(); ++i) {
    if (pred_done[i]) continue;
    for (std::size_t j = 0; j < ref.size(); ++j)
      if (pred_keys[i] == ref_keys[j]) cand[i].push_back(j);
  }
  return AlignSearch(std::move(cand), fixed, ref.size()).solve();
}

Tokens stems(const Tokens& t) {
  Tokens out;
  out.reserve(t.size());
  for (const auto& w : t) out.push_back(porter_stem(w));
  return out;
}

template <typename F>
double max_over_refs(const std::string& pred, std::span<const std::string> refs, F&& single) {
  if (refs.empty()) throw ValidationError("metric needs at least one reference");
  const Tokens p = tokenize(pred);
  if (p.empty()) return 0.0;
  double best = 0.0;
  for (const auto& r : refs) best = std::max(best, single(p, tokenize(r)));
  return best;
}

}  // namespace

Alignment meteor_align(const Tokens& pred, const Tokens& ref, bool stem) {
  Alignment a;
  a.pairs = align_stage(pred, ref, {}, pred, ref);
  if (stem) a.pairs = align_stage(pred, ref, a.pairs, stems(pred), stems(ref));
  a.chunks = count_chunks(a.pairs);
  return a;
}

double meteor_single(const Tokens& pred, const Tokens& ref, const MeteorOptions& opts) {
  if (pred.empty() || ref.empty()) return 0.0;
  const Alignment a = meteor_align(pred, ref, opts.stem);
  const double m = static_cast<double>(a.pairs.size());
  if (m == 0.0) return 0.0;
  const double p = m / static_cast<double>(pred.size());
  const double r = m / static_cast<double>(ref.size());
  const double fmean = p * r / (opts.alpha * p + (1.0 - opts.alpha) * r);
  const double penalty = opts.gamma * std::pow(static_cast<double>(a.chunks) / m, opts.beta);
  return fmean * (1.0 - penalty);
}

double meteor_score(const std::string& pred, std::span<const std::string> refs, const MeteorOptions& opts) {
  return max_over_refs(pred, refs, [&](const Tokens& p, const Tokens& r) { return meteor_single(p, r, opts); });
}

double rouge_n_single(const Tokens& pred, const Tokens& ref, std::size_t n) {
  if (n == 0) throw ConfigError("rouge_n: n must be >= 1");
  if (pred.size() < n || ref.size() < n) return 0.0;
  auto grams = [n](const Tokens& t) {
    std::map<std::vector<std::string>, std::size_t> counts;
    for (std::size_t i = 0; i + n <= t.size(); ++i) ++counts[Tokens(t.begin() + i, t.begin() + i + n)];
    return counts;
  };
  const auto pc = grams(pred);
  const auto rc = grams(ref);
  std::size_t overlap = 0;
  for (const auto& [g, c] : pc) {
    const auto it = rc.find(g);
    if (it != rc.end()) overlap += std::min(c, it->second);
  }
  if (overlap == 0) return 0.0;
  const double p = static_cast<double>(overlap) / static_cast<double>(pred.size() - n + 1);
  const double r = static_cast<double>(overlap) / static_cast<double>(ref.size() - n + 1);
  return 2.0 * p * r / (p + r);
}

double rouge_n(const std::string& pred, std::span<const std::string> refs, std::size_t n) {
  return max_over_refs(pred, refs, [n](const Tokens& p, const Tokens& r) { return rouge_n_single(p, r, n); });
}

std::size_t lcs_length(const Tokens& a, const Tokens& b) {
  std::vector<std::size_t> prev(b.size() + 1, 0), cur(b.size() + 1, 0);
  for (std::size_t i = 1; i <= a.size(); ++i) {
    for (std::size_t j = 1; j <= b.size(); ++j) {
      cur[j] = a[i - 1] == b[j - 1] ? prev[j - 1] + 1 : std::max(prev[j], cur[j - 1]);
    }
    std::swap(prev, cur);
  }
  return prev[b.size()];
}

double rouge_l_single(const Tokens& pred, const Tokens& ref, double beta) {
  if (pred.empty() || ref.empty()) return 0.0;
  const double lcs = static_cast<double>(lcs_length(pred, ref));
  if (lcs == 0.0) return 0.0;
  const double p = lcs / static_cast<double>(pred.size());
  const double r = lcs / static_cast<double>(ref.size());
  const double b2 = beta * beta;
  return (1.0 + b2) * p * r / (r + b2 * p);
}

double rouge_l(const std::string& pred, std::span<const std::string> refs, double beta) {
  return max_over_refs(pred, refs, [beta](const Tokens& p, const Tokens& r) { return rouge_l_single(p, r, beta); });
}

double cosine(std::span<const double> a, std::span<const double> b) {
  if (a.size() != b.size()) throw DimensionError("cosine: length mismatch");
  double ab = 0.0, aa = 0.0, bb = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    ab += a[i] * b[i];
    aa += a[i] * a[i];
    bb += b[i] * b[i];
  }
  if (aa == 0.0 || bb == 0.0) throw NumericError("cosine: zero-norm vector");
  return std::clamp(ab / (std::sqrt(aa) * std::sqrt(bb)), -1.0, 1.0);
}

double embedding_text_similarity(const std::string& pred, const std::string& ref, const encoders::TextEncoder& enc) {
  const auto a = enc.encode(pred);
  const auto b = enc.encode(ref);
  auto zero = [](const std::vector<double>& v) { return std::all_of(v.begin(), v.end(), [](double x) { return x == 0.0; }); };
  if (zero(a)) throw NumericError("text encoder returned a zero vector for \"" + pred + "\"");
  if (zero(b)) throw NumericError("text encoder returned a zero vector for \"" + ref + "\"");
  return 100.0 * cosine(a, b);
}

double embedding_text_similarity(const std::string& pred, std::span<const std::string> refs,
                                 const encoders::TextEncoder& enc) {
  if (refs.empty()) throw ValidationError("similarity needs at least one reference");
  double best = -100.0;
  for (const auto& r : refs) best = std::max(best, embedding_text_similarity(pred, r, enc));
  return best;
}

}  // namespace volcap::metrics
