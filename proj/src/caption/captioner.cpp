// Copyright 2026 The volcap Authors
// SPDX-License-Identifier: Apache-2.0

#include "volcap/caption/captioner.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <limits>
#include <numeric>
#include <sstream>

#include "volcap/autograd/ops.hpp"
#include "volcap/error.hpp"

namespace volcap::caption {

using ag::Var;
using nlohmann::json;

Var caption_loss(const Var& prefix, std::span<const int> tokens, const DifferentiableLM& lm) {
  if (tokens.empty()) throw DataError("caption_loss: empty caption");
  if (prefix.shape().size() != 2 || prefix.dim(0) == 0) throw DimensionError("caption_loss: prefix must be K x d, K >= 1");
  for (int t : tokens) {
    if (t < 0 || static_cast<std::size_t>(t) >= lm.vocab_size()) {
      throw DimensionError("caption_loss: token id " + std::to_string(t) + " outside vocabulary of " +
                           std::to_string(lm.vocab_size()));
    }
  }
  const std::size_t k = prefix.dim(0), n = tokens.size();
  const Var logits = lm.forward_logits(prefix, tokens.first(n - 1));
  return ag::cross_entropy(ag::slice_rows(logits, k - 1, n), tokens);
}

double sequence_log_prob(const Tensor& prefix, std::span<const int> tokens, const DecoderLM& lm) {
  double total = 0.0;
  for (std::size_t i = 0; i < tokens.size(); ++i) {
    const auto lp = ag::log_softmax(lm.next_logits(prefix, tokens.first(i)));
    total += lp.at(static_cast<std::size_t>(tokens[i]));
  }
  return total;
}

CaptionTrainHistory train_captioner(PrefixMapper& mapper, DifferentiableLM& lm, std::span<const CaptionPair> pairs,
                                    const ag::TrainConfig& cfg, bool freeze_lm) {
  cfg.validate();
  if (pairs.empty()) throw DataError("train_captioner: no training pairs");
  std::vector<Var> params = mapper.parameters();
  const std::vector<Var> lm_params = lm.lm_parameters();
  if (!freeze_lm) params.insert(params.end(), lm_params.begin(), lm_params.end());
  ag::Optimizer opt(params, cfg);

  const std::size_t n = pairs.size();
  const std::size_t bs = std::min(cfg.batch_size, n);
  const std::size_t batches = (n + bs - 1) / bs;
  const std::size_t total = cfg.epochs * batches;
  Rng rng(cfg.seed);
  std::vector<std::size_t> order(n);
  CaptionTrainHistory hist;
  std::size_t step = 0;
  for (std::size_t epoch = 0; epoch < cfg.epochs; ++epoch) {
    std::iota(order.begin(), order.end(), std::size_t{0});
    rng.shuffle(order);
    double epoch_sum = 0.0;
    for (std::size_t b = 0; b < batches; ++b) {
      const std::size_t lo = b * bs, hi = std::min(n, lo + bs);
      const double lr = ag::scheduled_lr(cfg, step, total);
      opt.zero_grad();
      Var batch_loss;
      for (std::size_t i = lo; i < hi; ++i) {
        const CaptionPair& p = pairs[order[i]];
        Var l = caption_loss(mapper.forward(p.embedding), p.tokens, lm);
        batch_loss = batch_loss.defined() ? ag::add(batch_loss, l) : l;
      }
      batch_loss = ag::scale(batch_loss, 1.0 / static_cast<double>(hi - lo));
      const double value = batch_loss.item();
      if (!std::isfinite(value)) {
        std::ostringstream lr_text;
        lr_text << lr;
        throw NumericError("non-finite caption loss at epoch " + std::to_string(epoch) + ", batch " +
                           std::to_string(b) + " (learning rate " + lr_text.str() + ")");
      }
      ag::backward(batch_loss);
      opt.step(lr);
      if (freeze_lm) {
        for (auto p : lm_params) p.zero_grad();
      }
      epoch_sum += value * static_cast<double>(hi - lo);
      ++step;
    }
    hist.epoch_loss.push_back(epoch_sum / static_cast<double>(n));
  }
  return hist;
}

void DecodeConfig::validate() const {
  if (beam_width == 0) throw ConfigError("decode: beam width must be >= 1");
  if (max_len == 0) throw ConfigError("decode: max length must be >= 1");
  if (!(length_penalty >= 0.0) || !std::isfinite(length_penalty)) {
    throw ConfigError("decode: length penalty must be a finite value >= 0");
  }
}

DecodeConfig DecodeConfig::from_json(const json& j) {
  DecodeConfig c;
  try {
    c.beam_width = j.value("beam_width", c.beam_width);
    c.max_len = j.value("max_len", c.max_len);
    c.length_penalty = j.value("length_penalty", c.length_penalty);
  } catch (const json::exception& e) {
    throw ConfigError(std::string("decode config: ") + e.what());
  }
  c.validate();
  return c;
}

json DecodeConfig::to_json() const {
  return {{"beam_width", beam_width}, {"max_len", max_len}, {"length_penalty", length_penalty}};
}

namespace {

double normalized(double log_prob, std::size_t len, double alpha) {
  if (alpha == 0.0 || len == 0) return log_prob;
  return log_prob / std::pow(static_cast<double>(len), alpha);
}

void check_prefix(const Tensor& prefix, const DecoderLM& lm) {
  if (prefix.rank() != 2 || prefix.dim(1) != lm.embed_dim()) {
    throw DimensionError("prefix must be K x " + std::to_string(lm.embed_dim()) + " to match the language model, got " +
                         shape_str(prefix.shape()));
  }
}

// Ranking among finished results: score, then shorter, then lexicographic ids.
bool better(const BeamHypothesis& a, const BeamHypothesis& b) {
  if (a.score != b.score) return a.score > b.score;
  if (a.tokens.size() != b.tokens.size()) return a.tokens.size() < b.tokens.size();
  return a.tokens < b.tokens;
}

}  // namespace

BeamHypothesis beam_search(const Tensor& prefix, const DecoderLM& lm, const DecodeConfig& cfg, std::optional<int> eos) {
  cfg.validate();
  check_prefix(prefix, lm);
  struct Candidate {
    double log_prob;
    std::size_t parent;
    int token;
  };
  std::vector<BeamHypothesis> alive{BeamHypothesis{}};
  std::vector<BeamHypothesis> done;
  for (std::size_t step = 0; step < cfg.max_len && !alive.empty(); ++step) {
    std::vector<Candidate> cands;
    for (std::size_t r = 0; r < alive.size(); ++r) {
      const auto lp = ag::log_softmax(lm.next_logits(prefix, alive[r].tokens));
      if (lp.size() != lm.vocab_size()) throw DimensionError("language model returned the wrong number of logits");
      for (std::size_t v = 0; v < lp.size(); ++v) {
        const double total = alive[r].log_prob + lp[v];
        if (total > -std::numeric_limits<double>::infinity()) cands.push_back({total, r, static_cast<int>(v)});
      }
    }
    const std::size_t keep = std::min(cfg.beam_width, cands.size());
    std::partial_sort(cands.begin(), cands.begin() + static_cast<std::ptrdiff_t>(keep), cands.end(),
                      [](const Candidate& a, const Candidate& b) {
                        if (a.log_prob != b.log_prob) return a.log_prob > b.log_prob;
                        if (a.parent != b.parent) return a.parent < b.parent;
                        return a.token < b.token;
                      });
    std::vector<BeamHypothesis> next;
    for (std::size_t i = 0; i < keep; ++i) {
      BeamHypothesis h;
      h.tokens = alive[cands[i].parent].tokens;
      h.tokens.push_back(cands[i].token);
      h.log_prob = cands[i].log_prob;
      h.score = normalized(h.log_prob, h.tokens.size(), cfg.length_penalty);
      if (eos && cands[i].token == *eos) {
        h.finished = true;
        done.push_back(std::move(h));
      } else {
        next.push_back(std::move(h));
      }
    }
    alive = std::move(next);
  }
  for (auto& h : alive) done.push_back(std::move(h));
  if (done.empty()) return BeamHypothesis{};
  return *std::min_element(done.begin(), done.end(), better);
}

BeamHypothesis greedy_decode(const Tensor& prefix, const DecoderLM& lm, std::size_t max_len, std::optional<int> eos) {
  check_prefix(prefix, lm);
  BeamHypothesis h;
  for (std::size_t step = 0; step < max_len; ++step) {
    const auto lp = ag::log_softmax(lm.next_logits(prefix, h.tokens));
    const auto best = static_cast<std::size_t>(std::max_element(lp.begin(), lp.end()) - lp.begin());
    h.tokens.push_back(static_cast<int>(best));
    h.log_prob += lp[best];
    if (eos && static_cast<int>(best) == *eos) {
      h.finished = true;
      break;
    }
  }
  h.score = h.log_prob;
  return h;
}

CaptionRecord generate_caption(std::span<const double> embedding, const PrefixMapper& mapper, const DecoderLM& lm,
                               const Tokenizer& tokenizer, const DecodeConfig& cfg) {
  const Tensor prefix = encode_prefix(mapper, embedding);
  const BeamHypothesis best = beam_search(prefix, lm, cfg, tokenizer.eos_id());
  CaptionRecord rec;
  rec.tokens = best.tokens;
  rec.text = tokenizer.decode(best.tokens);
  return rec;
}

CaptionRecord CaptionModel::caption(std::span<const double> embedding, const std::string& stimulus_id) const {
  CaptionRecord rec = generate_caption(embedding, *mapper, *lm, tokenizer, decode);
  rec.stimulus_id = stimulus_id;
  return rec;
}

void save_caption_model(const CaptionModel& model, const std::filesystem::path& dir) {
  std::filesystem::create_directories(dir);
  const json cfg = {{"prefix_mapper", model.mapper->config().to_json()},
                    {"lm", model.lm_config},
                    {"decode", model.decode.to_json()},
                    {"tokenizer", "tokenizer.json"}};
  std::ofstream(dir / "config.json") << cfg.dump(2) << "\n";
  model.tokenizer.save(dir / "tokenizer.json");
  ag::save_state(*model.mapper, dir / "mapper");
  if (const auto* tiny = dynamic_cast<const TinyLM*>(model.lm.get())) ag::save_state(*tiny, dir / "lm");
}

CaptionModel load_caption_model(const std::filesystem::path& dir) {
  std::ifstream in(dir / "config.json");
  if (!in) throw LoadError("missing file: " + (dir / "config.json").string());
  json cfg;
  try {
    cfg = json::parse(in);
  } catch (const json::exception& e) {
    throw LoadError("unreadable caption checkpoint config: " + std::string(e.what()));
  }
  CaptionModel m;
  m.mapper = std::make_unique<PrefixMapper>(PrefixMapperConfig::from_json(cfg.at("prefix_mapper")));
  ag::load_state(*m.mapper, dir / "mapper");
  m.decode = DecodeConfig::from_json(cfg.value("decode", json::object()));
  m.tokenizer = WhitespaceTokenizer::load(dir / "tokenizer.json");
  m.lm_config = cfg.at("lm");
  const std::string kind = m.lm_config.value("kind", "");
  if (kind == "tiny") {
    auto lm = std::make_unique<TinyLM>(TinyLMConfig::from_json(m.lm_config));
    ag::load_state(*lm, dir / "lm");
    m.lm = std::move(lm);
  } else if (kind == "process") {
    m.lm = std::make_unique<ProcessLM>(m.lm_config.at("command").get<std::vector<std::string>>(),
                                       m.lm_config.at("vocab_size").get<std::size_t>(),
                                       m.lm_config.at("embed_dim").get<std::size_t>());
  } else {
    throw ValidationError("unknown language model kind '" + kind + "' in " + (dir / "config.json").string());
  }
  if (m.lm->embed_dim() != m.mapper->config().lm_embed_dim) {
    throw DimensionError("prefix width " + std::to_string(m.mapper->config().lm_embed_dim) +
                         " does not match the language model embedding width " + std::to_string(m.lm->embed_dim()));
  }
  if (m.lm->vocab_size() != m.tokenizer.vocab_size()) {
    throw DimensionError("tokenizer vocabulary " + std::to_string(m.tokenizer.vocab_size()) +
                         " does not match the language model vocabulary " + std::to_string(m.lm->vocab_size()));
  }
  return m;
}

}  // namespace volcap::caption
