// Copyright 2026 The volcap Authors
// SPDX-License-Identifier: Apache-2.0

#include <cmath>
#include <filesystem>
#include <numbers>

#include "doctest.h"
#include "support/fixtures.hpp"
#include "support/gradcheck.hpp"
#include "support/toy_lms.hpp"
#include "volcap/caption/captioner.hpp"
#include "volcap/error.hpp"

using namespace volcap;
using namespace volcap::caption;
using testing::randn;

namespace {

PrefixMapperConfig tiny_mapper_config(std::size_t input_dim, std::size_t k, std::size_t d) {
  PrefixMapperConfig c;
  c.input_dim = input_dim;
  c.prefix_length = k;
  c.lm_embed_dim = d;
  c.mapper_layers = 1;
  c.mapper_heads = 2;
  c.mapper_hidden_dim = 2 * d;
  c.seed = 3;
  return c;
}

TinyLMConfig tiny_lm_config(std::size_t vocab, std::size_t d) {
  TinyLMConfig c;
  c.vocab_size = vocab;
  c.embed_dim = d;
  c.layers = 1;
  c.heads = 2;
  c.mlp_hidden = 2 * d;
  c.max_positions = 16;
  c.seed = 4;
  return c;
}

std::vector<double> row(const Tensor& t) { return t.values(); }

// Eight embeddings, each tied to its own three-word caption.
struct ToyCorpus {
  WhitespaceTokenizer tok;
  std::vector<CaptionPair> pairs;
  std::vector<std::string> texts;
};

ToyCorpus toy_corpus(std::size_t dim) {
  const std::vector<std::string> texts{"red dog runs",   "blue cat sits", "small train stops", "green pizza waits",
                                       "red cat stops",  "blue dog waits", "small pizza runs",  "green train sits"};
  ToyCorpus c{WhitespaceTokenizer::from_corpus(texts), {}, texts};
  Rng rng(17);
  for (std::size_t i = 0; i < texts.size(); ++i) {
    c.pairs.push_back({"s" + std::to_string(i), randn({dim}, rng).values(), c.tok.encode_with_eos(texts[i])});
  }
  return c;
}

}  // namespace

TEST_CASE("whitespace tokenizer") {
  const WhitespaceTokenizer tok({"a", "dog", "sits"});
  CHECK(tok.vocab_size() == 4);
  CHECK(tok.eos_id() == 0);
  const auto ids = tok.encode("  a dog\t sits ");
  CHECK(ids == std::vector<int>{1, 2, 3});
  CHECK(tok.decode(ids) == "a dog sits");
  CHECK(tok.decode(tok.encode_with_eos("dog")) == "dog");
  CHECK_THROWS_AS(tok.encode("a cat"), ValidationError);
  const std::vector<int> bad{9};
  CHECK_THROWS_AS(tok.decode(bad), DimensionError);

  const auto path = std::filesystem::temp_directory_path() / "volcap_test_caption_tok.json";
  tok.save(path);
  CHECK(WhitespaceTokenizer::load(path).words() == tok.words());
}

TEST_CASE("prefix has shape K x d_lm") {
  PrefixMapperConfig cfg;
  cfg.input_dim = 16;
  const PrefixMapper mapper(cfg);
  Rng rng(1);
  const auto e = randn({16}, rng).values();
  const Tensor p = encode_prefix(mapper, e);
  CHECK(p.shape() == Shape{10, 768});
  CHECK(p.all_finite());
  CHECK(encode_prefix(mapper, e) == p);
  auto twice = e;
  for (double& v : twice) v *= 2.0;
  CHECK_FALSE(encode_prefix(mapper, twice) == p);
  CHECK_THROWS_AS(encode_prefix(mapper, std::vector<double>(15, 0.0)), DimensionError);
}

TEST_CASE("prefix mapper config validation") {
  auto c = tiny_mapper_config(4, 0, 8);
  CHECK_THROWS_AS(c.validate(), ConfigError);
  c = tiny_mapper_config(4, 2, 9);
  CHECK_THROWS_AS(c.validate(), ConfigError);
}

TEST_CASE("uniform logits give ln V per token") {
  const testing::FixedLM lm(std::vector<double>(4, 0.0), 6);
  Rng rng(2);
  const std::vector<int> caption{1, 3, 0};
  const double loss = caption_loss(ag::constant(randn({5, 6}, rng)), caption, lm).item();
  CHECK(std::abs(loss - std::log(4.0)) < 1e-9);
}

TEST_CASE("a certain LM has zero loss") {
  const std::vector<int> caption{2, 1, 0};
  const testing::OracleLM lm(4, 6, caption);
  Rng rng(2);
  CHECK(caption_loss(ag::constant(randn({3, 6}, rng)), caption, lm).item() == 0.0);
}

TEST_CASE("loss ignores prefix positions") {
  Rng rng(3);
  const testing::FixedLM lm(randn({5}, rng).values(), 4);
  const std::vector<int> caption{4, 2, 2, 0};
  const double a = caption_loss(ag::constant(randn({3, 4}, rng)), caption, lm).item();
  const double b = caption_loss(ag::constant(randn({6, 4}, rng)), caption, lm).item();
  CHECK(a == doctest::Approx(b).epsilon(1e-14));
}

TEST_CASE("caption loss errors") {
  const testing::FixedLM lm(std::vector<double>(4, 0.0), 6);
  const ag::Var p = ag::constant(Tensor({2, 6}));
  CHECK_THROWS_AS(caption_loss(p, std::vector<int>{1, 4}, lm), DimensionError);
  CHECK_THROWS_AS(caption_loss(p, std::vector<int>{}, lm), DataError);
  TinyLM tiny(tiny_lm_config(5, 8));
  CHECK_THROWS_AS(caption_loss(p, std::vector<int>{1, 0}, tiny), DimensionError);
}

TEST_CASE("caption loss gradient matches finite differences") {
  const PrefixMapper mapper(tiny_mapper_config(6, 2, 8));
  const TinyLM lm(tiny_lm_config(7, 8));
  Rng rng(5);
  const auto e = randn({6}, rng).values();
  const std::vector<int> caption{3, 5, 1, 0};
  auto ps = mapper.named_parameters();
  for (auto& p : lm.named_parameters()) ps.push_back({"lm." + p.name, p.var});
  const auto res = testing::grad_check(ps, [&] { return caption_loss(mapper.forward(e), caption, lm); });
  CHECK(res.max_rel_error < 1e-5);
}

TEST_CASE("TinyLM logits are causal") {
  const TinyLM lm(tiny_lm_config(6, 8));
  Rng rng(6);
  const Tensor prefix = randn({2, 8}, rng);
  const std::vector<int> a{1, 2, 3}, b{1, 2, 5};
  ag::NoGradGuard guard;
  const auto la = lm.forward_logits(ag::constant(prefix), a).value();
  const auto lb = lm.forward_logits(ag::constant(prefix), b).value();
  // Rows up to the one that sees token 2 agree.
  for (std::size_t i = 0; i < 4 * 6; ++i) CHECK(la[i] == lb[i]);
  CHECK_FALSE(la == lb);
  CHECK_THROWS_AS(lm.next_logits(randn({2, 7}, rng), a), DimensionError);
}

TEST_CASE("beam width 1 equals greedy decoding") {
  for (std::uint64_t seed = 0; seed < 30; ++seed) {
    const testing::TabulatedLM lm(6, seed);
    DecodeConfig cfg{1, 6, 0.7};
    const Tensor prefix({1, 4});
    const auto beam = beam_search(prefix, lm, cfg, 0);
    const auto greedy = greedy_decode(prefix, lm, 6, 0);
    CHECK(beam.tokens == greedy.tokens);
  }
  const TinyLM tiny(tiny_lm_config(6, 8));
  Rng rng(7);
  const Tensor prefix = randn({3, 8}, rng);
  CHECK(beam_search(prefix, tiny, {1, 8, 0.7}, 0).tokens == greedy_decode(prefix, tiny, 8, 0).tokens);
}

TEST_CASE("a wide enough beam is exact") {
  for (std::size_t v : {2, 3, 5, 6}) {
    for (std::size_t len : {1, 2, 3, 4}) {
      if (std::pow(v, len) > 1300) continue;
      const testing::TabulatedLM lm(v, 100 * v + len, 2.0);
      const auto [best, best_lp] = testing::exhaustive_best(lm, len);
      DecodeConfig cfg;
      cfg.max_len = len;
      cfg.length_penalty = 0.0;
      cfg.beam_width = static_cast<std::size_t>(std::pow(v, len));
      const auto got = beam_search(Tensor({1, 4}), lm, cfg, std::nullopt);
      CHECK(got.tokens == best);
      CHECK(got.log_prob == doctest::Approx(best_lp).epsilon(1e-12));
      // |V|^(L-1) already keeps every live prefix.
      cfg.beam_width = static_cast<std::size_t>(std::pow(v, len - 1));
      CHECK(beam_search(Tensor({1, 4}), lm, cfg, std::nullopt).tokens == best);
    }
  }
}

// A wider beam is not guaranteed to score higher: at width 2 the greedy path
// 2 2 <eos> is pruned at step 2 by the second root's children. The claim only
// holds once the beam stops pruning.
TEST_CASE("beam width monotonicity: a counterexample and the exact regime") {
  const testing::TabulatedLM lm(5, 50);
  const auto b1 = beam_search(Tensor({1, 4}), lm, {1, 4, 0.0}, 0);
  const auto b2 = beam_search(Tensor({1, 4}), lm, {2, 4, 0.0}, 0);
  CHECK(b1.tokens == std::vector<int>{2, 2, 0});
  CHECK(b2.score < b1.score);

  for (std::uint64_t seed = 0; seed < 25; ++seed) {
    const testing::TabulatedLM t(4, seed);
    const double optimum = testing::exhaustive_best(t, 4).second;
    double prev = -std::numeric_limits<double>::infinity();
    for (std::size_t b = 1; b <= 70; ++b) {
      const auto h = beam_search(Tensor({1, 4}), t, {b, 4, 0.0}, std::nullopt);
      CHECK(h.score <= optimum + 1e-12);
      if (b >= 64) CHECK(h.score >= prev);  // 4^3: every live prefix is kept
      prev = h.score;
    }
    CHECK(prev == doctest::Approx(optimum).epsilon(1e-12));
  }
}

TEST_CASE("reported log-probability matches independent rescoring") {
  for (std::uint64_t seed = 0; seed < 20; ++seed) {
    const testing::TabulatedLM lm(7, seed);
    const auto h = beam_search(Tensor({1, 4}), lm, {4, 6, 0.7}, 0);
    double lp = 0.0;
    std::vector<int> ctx;
    for (int t : h.tokens) {
      lp += testing::log_prob_of(lm.logits(ctx), t);
      ctx.push_back(t);
    }
    CHECK(std::abs(h.log_prob - lp) < 1e-5);
    const double len = static_cast<double>(h.tokens.size());
    CHECK(h.score == doctest::Approx(lp / std::pow(len, 0.7)).epsilon(1e-9));
  }
}

TEST_CASE("certain end-of-sequence gives the empty caption") {
  std::vector<double> logits(5, -std::numeric_limits<double>::infinity());
  logits[0] = 0.0;
  const testing::FixedLM lm(logits, 4);
  const auto h = beam_search(Tensor({2, 4}), lm, {}, 0);
  CHECK(h.tokens == std::vector<int>{0});
  CHECK(h.finished);
  const WhitespaceTokenizer tok({"a", "b", "c", "d"});
  CHECK(tok.decode(h.tokens).empty());
}

TEST_CASE("without an end token the beam returns max_len tokens") {
  const testing::TabulatedLM lm(4, 9);
  const auto h = beam_search(Tensor({1, 4}), lm, {3, 5, 0.7}, std::nullopt);
  CHECK(h.tokens.size() == 5);
  CHECK_FALSE(h.finished);
}

TEST_CASE("decode config validation") {
  CHECK_THROWS_AS((DecodeConfig{0, 5, 0.7}).validate(), ConfigError);
  CHECK_THROWS_AS((DecodeConfig{1, 0, 0.7}).validate(), ConfigError);
  CHECK_THROWS_AS(beam_search(Tensor({1, 3}), testing::TabulatedLM(4, 1), {}, 0), DimensionError);
}

TEST_CASE("training memorizes a toy corpus and decodes it back") {
  const auto corpus = toy_corpus(8);
  PrefixMapper mapper(tiny_mapper_config(8, 2, 16));
  TinyLM lm(tiny_lm_config(corpus.tok.vocab_size(), 16));
  ag::TrainConfig tc;
  tc.epochs = 150;
  tc.batch_size = 8;
  tc.learning_rate = 1e-2;
  tc.weight_decay = 0.0;
  const auto hist = train_captioner(mapper, lm, corpus.pairs, tc, false);
  CHECK(hist.epoch_loss.back() < hist.epoch_loss.front());
  for (std::size_t i = 0; i < corpus.pairs.size(); ++i) {
    const Tensor prefix = encode_prefix(mapper, corpus.pairs[i].embedding);
    const auto g = greedy_decode(prefix, lm, 10, corpus.tok.eos_id());
    CHECK(corpus.tok.decode(g.tokens) == corpus.texts[i]);
    const auto rec = generate_caption(corpus.pairs[i].embedding, mapper, lm, corpus.tok, DecodeConfig{5, 10, 0.7});
    CHECK(rec.text == corpus.texts[i]);
    CHECK(generate_caption(corpus.pairs[i].embedding, mapper, lm, corpus.tok, DecodeConfig{5, 10, 0.7}).text == rec.text);
  }
  const std::vector<double> zeros(8, 0.0);
  CHECK(generate_caption(zeros, mapper, lm, corpus.tok, {5, 10, 0.7}).text ==
        generate_caption(zeros, mapper, lm, corpus.tok, {5, 10, 0.7}).text);
}

TEST_CASE("a frozen LM keeps bit-identical parameters") {
  const auto corpus = toy_corpus(8);
  PrefixMapper mapper(tiny_mapper_config(8, 2, 16));
  TinyLM lm(tiny_lm_config(corpus.tok.vocab_size(), 16));
  const auto before = lm.state();
  const auto mapper_before = mapper.state();
  ag::TrainConfig tc;
  tc.epochs = 3;
  tc.batch_size = 4;
  tc.learning_rate = 1e-2;
  train_captioner(mapper, lm, corpus.pairs, tc, true);
  CHECK(lm.state() == before);
  CHECK_FALSE(mapper.state() == mapper_before);
}

TEST_CASE("zero learning rate keeps the caption loss constant") {
  const auto corpus = toy_corpus(8);
  PrefixMapper mapper(tiny_mapper_config(8, 2, 16));
  TinyLM lm(tiny_lm_config(corpus.tok.vocab_size(), 16));
  ag::TrainConfig tc;
  tc.epochs = 4;
  tc.batch_size = 3;
  tc.learning_rate = 0.0;
  const auto h = train_captioner(mapper, lm, corpus.pairs, tc, false);
  for (double v : h.epoch_loss) CHECK(std::abs(v - h.epoch_loss[0]) < 1e-12);
}

TEST_CASE("non-finite caption loss aborts") {
  auto corpus = toy_corpus(8);
  corpus.pairs[2].embedding[0] = std::nan("");
  PrefixMapper mapper(tiny_mapper_config(8, 2, 16));
  TinyLM lm(tiny_lm_config(corpus.tok.vocab_size(), 16));
  ag::TrainConfig tc;
  tc.batch_size = 8;
  CHECK_THROWS_AS(train_captioner(mapper, lm, corpus.pairs, tc, true), NumericError);
}

TEST_CASE("caption checkpoints round-trip") {
  const auto corpus = toy_corpus(8);
  CaptionModel model;
  model.mapper = std::make_unique<PrefixMapper>(tiny_mapper_config(8, 2, 16));
  auto lm_cfg = tiny_lm_config(corpus.tok.vocab_size(), 16);
  model.lm = std::make_unique<TinyLM>(lm_cfg);
  model.lm_config = lm_cfg.to_json();
  model.lm_config["kind"] = "tiny";
  model.tokenizer = corpus.tok;
  model.decode = {3, 6, 0.5};
  const auto dir = std::filesystem::temp_directory_path() / "volcap_test_caption_ckpt";
  std::filesystem::remove_all(dir);
  save_caption_model(model, dir);
  const CaptionModel back = load_caption_model(dir);
  CHECK(back.decode.beam_width == 3);
  for (const auto& p : corpus.pairs) {
    const auto a = model.caption(p.embedding, p.stimulus_id);
    const auto b = back.caption(p.embedding, p.stimulus_id);
    CHECK(a.tokens == b.tokens);
    CHECK(a.text == b.text);
  }
}

TEST_CASE("out-of-process LM matches the in-process model") {
  TinyLMConfig cfg;
  cfg.vocab_size = 9;
  cfg.embed_dim = 8;
  cfg.seed = 12;
  cfg.heads = 2;
  cfg.layers = 1;
  cfg.mlp_hidden = 16;
  const TinyLM local(cfg);
  ProcessLM remote({VOLCAP_FAKE_LM_SERVER, "9", "8", "12"}, 9, 8);
  Rng rng(8);
  const Tensor prefix = randn({3, 8}, rng);
  for (const std::vector<int>& ctx : {std::vector<int>{}, {1}, {4, 2, 7}}) {
    CHECK(remote.next_logits(prefix, ctx) == local.next_logits(prefix, ctx));
  }
  const DecodeConfig dc{3, 6, 0.7};
  CHECK(beam_search(prefix, remote, dc, 0).tokens == beam_search(prefix, local, dc, 0).tokens);
  CHECK_THROWS_AS(remote.next_logits(randn({3, 5}, rng), std::vector<int>{}), DimensionError);

  ProcessLM wrong_vocab({VOLCAP_FAKE_LM_SERVER, "9", "8", "12"}, 10, 8);
  CHECK_THROWS_AS(wrong_vocab.next_logits(prefix, std::vector<int>{}), DimensionError);
}

TEST_CASE("a missing LM host is a dependency error") {
  CHECK_THROWS_AS(ProcessLM({"/nonexistent/lm-host"}, 4, 4), DependencyError);
}
