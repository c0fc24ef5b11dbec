// Copyright 2026 The volcap Authors
// SPDX-License-Identifier: Apache-2.0

// Acceptance checks. One PASS/FAIL line per criterion; exit status 1 if any fail.

#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <functional>
#include <sstream>
#include <string>
#include <vector>

#include "json.hpp"
#include "support/fixtures.hpp"
#include "support/gradcheck.hpp"
#include "support/ridge_oracle.hpp"
#include "support/toy_lms.hpp"
#include "volcap/brain/ridge.hpp"
#include "volcap/brain/train.hpp"
#include "volcap/caption/captioner.hpp"
#include "volcap/dataset/bundle.hpp"
#include "volcap/dataset/normalize.hpp"
#include "volcap/dataset/prepare.hpp"
#include "volcap/dataset/synth.hpp"
#include "volcap/metrics/scores.hpp"
#include "volcap/pipeline/report.hpp"
#include "volcap/pipeline/stages.hpp"

using namespace volcap;
namespace fs = std::filesystem;
using nlohmann::json;
using testing::randn;

namespace {

struct Outcome {
  bool pass = false;
  std::string detail;
};

std::string fmt(const char* f, double a, double b = 0.0) {
  char buf[200];
  std::snprintf(buf, sizeof buf, f, a, b);
  return buf;
}

fs::path scratch(const std::string& name) {
  const auto d = fs::temp_directory_path() / ("volcap_acceptance_" + name);
  fs::remove_all(d);
  fs::create_directories(d);
  return d;
}

Outcome ridge_vs_gd() {
  Rng rng(20);
  const Tensor x = randn({50, 20}, rng);
  const Tensor y = randn({50, 8}, rng);
  const auto model = brain::ridge_fit(x, y, 1.0);
  testing::Mat w;
  std::vector<double> b;
  testing::ridge_gd(testing::to_rows(x), testing::to_rows(y), 1.0, 4000, w, b);
  double err = 0.0;
  for (std::size_t a = 0; a < 20; ++a)
    for (std::size_t j = 0; j < 8; ++j) err = std::max(err, std::abs(model.weights[a * 8 + j] - w[a][j]));
  for (std::size_t j = 0; j < 8; ++j) err = std::max(err, std::abs(model.bias[j] - b[j]));
  return {err < 1e-4, fmt("max elementwise diff %.2e (< 1e-4)", err)};
}

Outcome normal_residual() {
  Rng rng(5);
  double worst = 0.0;
  for (int trial = 0; trial < 20; ++trial) {
    const std::size_t n = 10 + rng.below(30), v = 5 + rng.below(40), e = 1 + rng.below(6);
    const Tensor x = randn({n, v}, rng), y = randn({n, e}, rng);
    for (double lambda : {0.01, 1.0, 100.0}) {
      const auto m = brain::ridge_fit(x, y, lambda);
      worst = std::max(worst, testing::normal_residual(testing::center(testing::to_rows(x)),
                                                       testing::center(testing::to_rows(y)), m.weights, lambda));
    }
  }
  return {worst < 1e-6, fmt("max relative residual %.2e over 60 fits (< 1e-6)", worst)};
}

Outcome conv_gradcheck() {
  auto m = brain::build_conv_mapper(testing::tiny_conv_config());
  Rng rng(7);
  const Tensor x = randn({8, 16, 16, 16}, rng);
  const Tensor y = randn({8, 8}, rng);
  std::vector<std::vector<ag::NamedParam>> stages;
  for (std::size_t s = 0; s < m->stage_count(); ++s) stages.push_back(m->stage_parameters(s));
  const auto r = testing::grad_check_staged(
      stages, ag::constant(m->pad_input(x)),
      [&](const ag::Var& a, std::size_t first, std::size_t last) { return m->forward_stages(a, first, last); },
      [&](const ag::Var& out) { return ag::mse_loss(out, y); }, testing::FdOptions{1e-5, 1e-4, 4, true});
  const bool ok = r.max_rel_error < 1e-5 && r.unresolved_kinks == 0 && r.checked == m->parameter_count();
  return {ok, fmt("max relative error %.2e over %.0f parameters (< 1e-5)", r.max_rel_error,
                  static_cast<double>(r.checked))};
}

Outcome overfit() {
  dataset::SynthConfig cfg;
  cfg.volume_shape = {16, 16, 16};
  cfg.mapping = dataset::PlantedMapping::kConvFriendly;
  cfg.embedding_dim = 10;
  cfg.n_train_stimuli = 16;
  const auto synth = dataset::synth_generate(cfg, 21);
  dataset::PrepareOptions po;
  po.mode = dataset::NormMode::kMinMax;
  const auto data = dataset::prepare(synth.bundle, po);
  auto m = brain::build_conv_mapper(testing::tiny_conv_config(10, 3));
  ag::TrainConfig tc;
  tc.epochs = 300;
  tc.batch_size = 16;
  tc.learning_rate = 1e-2;
  tc.weight_decay = 0.0;
  brain::train_mapper(*m, data.train.x, data.train.y, tc);
  // Recompute the training objective by hand on the final weights.
  m->set_training(true);
  ag::NoGradGuard guard;
  const Tensor pred = m->forward(data.train.x).value();
  double mse = 0.0;
  for (std::size_t i = 0; i < pred.size(); ++i) mse += (pred[i] - data.train.y[i]) * (pred[i] - data.train.y[i]);
  mse /= static_cast<double>(pred.size());
  return {mse < 1e-2, fmt("train MSE %.2e after 300 epochs on %.0f samples (< 1e-2)", mse,
                          static_cast<double>(data.train.x.dim(0)))};
}

Outcome beam_exhaustive() {
  int exact = 0, greedy_match = 0;
  for (std::uint64_t i = 0; i < 25; ++i) {
    const testing::TabulatedLM lm(5, 2026 + i, 2.0);
    const auto [best, best_lp] = testing::exhaustive_best(lm, 4);
    const Tensor prefix({1, 4});
    const auto beam = caption::beam_search(prefix, lm, {5, 4, 0.0}, std::nullopt);
    if (beam.tokens == best) ++exact;
    const auto b1 = caption::beam_search(prefix, lm, {1, 4, 0.0}, std::nullopt);
    if (b1.tokens == caption::greedy_decode(prefix, lm, 4, std::nullopt).tokens) ++greedy_match;
  }
  return {exact == 25 && greedy_match == 25,
          fmt("width 5 exact on %.0f/25 LMs, width 1 = greedy on %.0f/25", exact, greedy_match)};
}

Outcome memorization() {
  const std::vector<std::string> texts{"red dog runs",   "blue cat sits", "small train stops", "green pizza waits",
                                       "red cat stops",  "blue dog waits", "small pizza runs",  "green train sits"};
  const auto tok = caption::WhitespaceTokenizer::from_corpus(texts);
  std::vector<caption::CaptionPair> pairs;
  Rng rng(17);
  for (std::size_t i = 0; i < texts.size(); ++i) {
    pairs.push_back({"s" + std::to_string(i), randn({8}, rng).values(), tok.encode_with_eos(texts[i])});
  }
  caption::PrefixMapperConfig mc;
  mc.input_dim = 8;
  mc.prefix_length = 2;
  mc.lm_embed_dim = 16;
  mc.mapper_layers = 1;
  mc.mapper_heads = 2;
  mc.mapper_hidden_dim = 32;
  mc.seed = 3;
  caption::TinyLMConfig lc;
  lc.vocab_size = tok.vocab_size();
  lc.embed_dim = 16;
  lc.layers = 1;
  lc.heads = 2;
  lc.mlp_hidden = 32;
  lc.max_positions = 16;
  lc.seed = 4;
  caption::PrefixMapper mapper(mc);
  caption::TinyLM lm(lc);
  ag::TrainConfig tc;
  tc.epochs = 150;
  tc.batch_size = 8;
  tc.learning_rate = 1e-2;
  tc.weight_decay = 0.0;
  caption::train_captioner(mapper, lm, pairs, tc, false);
  int hits = 0;
  for (std::size_t i = 0; i < pairs.size(); ++i) {
    if (caption::generate_caption(pairs[i].embedding, mapper, lm, tok, {5, 10, 0.7}).text == texts[i]) ++hits;
  }
  return {hits == 8, fmt("%.0f/8 training captions reconstructed", hits)};
}

Outcome uniform_loss() {
  const testing::FixedLM lm(std::vector<double>(4, 0.0), 6);
  Rng rng(2);
  const std::vector<int> caption{1, 3, 0};
  const double loss = caption::caption_loss(ag::constant(randn({5, 6}, rng)), caption, lm).item();
  const double err = std::abs(loss - std::log(4.0));
  return {err < 1e-9, fmt("|loss - ln 4| = %.2e (< 1e-9)", err)};
}

Outcome metric_fixtures() {
  const double r1 = metrics::rouge_n("a b c", std::vector<std::string>{"a b d"});
  const double rl = metrics::rouge_l("a b c d", std::vector<std::string>{"a c b d"});
  const double me = metrics::meteor_score("a b c d", std::vector<std::string>{"a b c d"});
  const double e1 = std::abs(r1 - 2.0 / 3.0), e2 = std::abs(rl - 0.75), e3 = std::abs(me - (1.0 - 0.5 / 64.0));
  const double worst = std::max({e1, e2, e3});
  char buf[200];
  std::snprintf(buf, sizeof buf, "ROUGE-1 %.6f, ROUGE-L %.6f, METEOR %.6f (max error %.1e, < 1e-4)", r1, rl, me, worst);
  return {worst < 1e-4, buf};
}

Outcome efficiency() {
  const double r = pipeline::dimensional_efficiency(257, 1024, 1536);
  return {std::abs(r - 171.33) <= 0.01, fmt("(257 x 1024) / 1536 = %.4f (171.33 +- 0.01)", r)};
}

Outcome sub1_shapes() {
  const auto dir = scratch("sub1");
  dataset::SynthConfig cfg;
  cfg.subject_id = "sub1";
  cfg.volume_shape = {81, 104, 83};
  cfg.roi_voxels = 15724;
  cfg.n_train_stimuli = 1;
  cfg.n_test_stimuli = 1;
  cfg.test_repetitions = 1;
  cfg.embedding_dim = 10;
  const auto manifest = dataset::write_synth(dataset::synth_generate(cfg, 1), dir);
  const auto bundle = dataset::load_bundle(manifest);
  const auto& vol = bundle.train.trials.at(0).volume;
  const auto flat = dataset::linearize(vol, bundle.mask);
  const bool ok = flat.values.size() == 15724 && vol.data.shape() == Shape{81, 104, 83};
  fs::remove_all(dir);
  return {ok, fmt("FlatVoxelVector %.0f, VolumeGrid ", static_cast<double>(flat.values.size())) +
                  shape_str(vol.data.shape())};
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

Outcome determinism() {
  const auto root = scratch("determinism");
  dataset::SynthConfig sc;
  sc.subject_id = "syn1";
  sc.volume_shape = {12, 12, 12};
  sc.mapping = dataset::PlantedMapping::kConvFriendly;
  sc.embedding_dim = 16;
  const auto manifest = dataset::write_synth(dataset::synth_generate(sc, 3), root / "data");
  json j = {{"subjects", {"syn1"}},
            {"data", {{"syn1", manifest.string()}}},
            {"run_dir", "runs/one"},
            {"seed", 11},
            {"brain",
             {{"mapper", "shallow"},
              {"conv", {{"widths", {2, 4, 8, 16}}, {"pad_multiple", 16}}},
              {"train", {{"epochs", 10}, {"batch_size", 8}, {"learning_rate", 0.01}}}}},
            {"caption",
             {{"mapper", {{"prefix_length", 2}, {"mapper_layers", 1}, {"mapper_heads", 2}, {"mapper_hidden_dim", 32}}},
              {"lm", {{"embed_dim", 16}, {"layers", 1}, {"heads", 2}, {"mlp_hidden", 32}, {"max_positions", 24}}},
              {"freeze_lm", false},
              {"train", {{"epochs", 30}, {"batch_size", 8}, {"learning_rate", 0.01}}}}},
            {"decode", {{"max_len", 12}}}};
  auto a = pipeline::RunConfig::from_json(j, root);
  j["run_dir"] = "runs/two";
  auto b = pipeline::RunConfig::from_json(j, root);
  pipeline::run_pipeline(a);
  pipeline::run_pipeline(b);
  const auto ca = slurp(pipeline::subject_dir(a, "syn1") / "infer" / "captions.jsonl");
  const auto cb = slurp(pipeline::subject_dir(b, "syn1") / "infer" / "captions.jsonl");
  const bool ok = !ca.empty() && ca == cb;
  fs::remove_all(root);
  return {ok, fmt("captions.jsonl %.0f vs %.0f bytes, ", static_cast<double>(ca.size()), static_cast<double>(cb.size())) +
                  (ca == cb ? "identical" : "different")};
}

struct Criterion {
  std::string name;
  double budget_seconds;  // 0: no runtime bound
  std::function<Outcome()> run;
};

}  // namespace

int main() {
  const std::vector<Criterion> criteria{
      {"ridge matches gradient descent (50x20x8)", 5.0, ridge_vs_gd},
      {"normal-equation residual (20 problems, 3 lambdas)", 0.0, normal_residual},
      {"conv mapper gradient check (widths 2/4/8/16, 16^3, E=8)", 120.0, conv_gradcheck},
      {"overfit 16 volumetric samples", 300.0, overfit},
      {"beam width 5 = exhaustive, width 1 = greedy (25 LMs, |V|=5, L=4)", 0.0, beam_exhaustive},
      {"captioner memorizes an 8-pair corpus", 0.0, memorization},
      {"uniform-logit caption loss = ln 4", 0.0, uniform_loss},
      {"metric fixtures", 0.0, metric_fixtures},
      {"dimensional efficiency 171.33", 0.0, efficiency},
      {"sub1 shape conformance", 0.0, sub1_shapes},
      {"two full runs give byte-identical captions.jsonl", 0.0, determinism},
  };
  int failed = 0;
  for (const auto& c : criteria) {
    const auto t0 = std::chrono::steady_clock::now();
    Outcome o;
    try {
      o = c.run();
    } catch (const std::exception& e) {
      o = {false, std::string("threw: ") + e.what()};
    }
    const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    if (c.budget_seconds > 0 && secs >= c.budget_seconds) {
      o.pass = false;
      o.detail += fmt("; over the %.0f s budget", c.budget_seconds);
    }
    if (!o.pass) ++failed;
    std::string timing = c.budget_seconds > 0 ? fmt(" [%.2f s, budget %.0f s]", secs, c.budget_seconds)
                                              : fmt(" [%.2f s]", secs);
    std::printf("%s %s: %s%s\n", o.pass ? "PASS" : "FAIL", c.name.c_str(), o.detail.c_str(), timing.c_str());
    std::fflush(stdout);
  }
  std::printf("%zu/%zu criteria passed\n", criteria.size() - static_cast<std::size_t>(failed), criteria.size());
  return failed == 0 ? 0 : 1;
}
