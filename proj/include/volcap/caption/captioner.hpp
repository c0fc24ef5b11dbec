// Copyright 2026 The volcap Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <filesystem>
#include <memory>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "json.hpp"
#include "volcap/autograd/optim.hpp"
#include "volcap/caption/lm.hpp"
#include "volcap/caption/prefix_mapper.hpp"
#include "volcap/caption/tokenizer.hpp"

namespace volcap::caption {

struct CaptionRecord {
  std::string stimulus_id;
  std::string text;
  /// Ends with the end-of-sequence id when the decoder emitted one.
  std::vector<int> tokens;
};

/// One training example: a target embedding and its caption ids (ending in EOS).
struct CaptionPair {
  std::string stimulus_id;
  std::vector<double> embedding;
  std::vector<int> tokens;
};

/// Mean next-token cross-entropy over the caption positions. The LM sees
/// prefix ++ tokens[0 .. n-2]; the row before each caption token predicts it.
ag::Var caption_loss(const ag::Var& prefix, std::span<const int> tokens, const DifferentiableLM& lm);

/// Sum of log-softmax scores of `tokens` under `lm`, one call per position.
double sequence_log_prob(const Tensor& prefix, std::span<const int> tokens, const DecoderLM& lm);

struct CaptionTrainHistory {
  std::vector<double> epoch_loss;
};

/// Minibatch training of the prefix mapper (and the LM unless frozen) on the
/// mean caption loss. A frozen LM keeps bit-identical parameters.
CaptionTrainHistory train_captioner(PrefixMapper& mapper, DifferentiableLM& lm, std::span<const CaptionPair> pairs,
                                    const ag::TrainConfig& cfg, bool freeze_lm = true);

struct DecodeConfig {
  std::size_t beam_width = 5;
  std::size_t max_len = 40;
  /// Finished hypotheses are ranked by log_prob / length^length_penalty.
  double length_penalty = 0.7;

  void validate() const;
  static DecodeConfig from_json(const nlohmann::json& j);
  nlohmann::json to_json() const;
};

struct BeamHypothesis {
  std::vector<int> tokens;
  double log_prob = 0.0;
  double score = 0.0;
  bool finished = false;
};

/// Length-capped beam search. Each step expands every live hypothesis, keeps
/// the top `beam_width` candidates by log-probability (ties: earlier parent,
/// then lower token id), and retires candidates ending in `eos`. Hypotheses
/// still live at max_len compete with the finished ones. Length counts the
/// end-of-sequence token.
BeamHypothesis beam_search(const Tensor& prefix, const DecoderLM& lm, const DecodeConfig& cfg,
                           std::optional<int> eos);

/// Argmax decoding, lower token id on ties.
BeamHypothesis greedy_decode(const Tensor& prefix, const DecoderLM& lm, std::size_t max_len, std::optional<int> eos);

CaptionRecord generate_caption(std::span<const double> embedding, const PrefixMapper& mapper, const DecoderLM& lm,
                               const Tokenizer& tokenizer, const DecodeConfig& cfg);

/// A prefix mapper, its language model and tokenizer, as stored on disk.
struct CaptionModel {
  std::unique_ptr<PrefixMapper> mapper;
  std::unique_ptr<DecoderLM> lm;
  WhitespaceTokenizer tokenizer;
  DecodeConfig decode;
  /// {"kind": "tiny", ...TinyLMConfig} or {"kind": "process", "command": [...],
  ///  "vocab_size": V, "embed_dim": d}.
  nlohmann::json lm_config;

  CaptionRecord caption(std::span<const double> embedding, const std::string& stimulus_id = {}) const;
};

void save_caption_model(const CaptionModel& model, const std::filesystem::path& dir);
CaptionModel load_caption_model(const std::filesystem::path& dir);

}  // namespace volcap::caption
