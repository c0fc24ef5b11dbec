// Copyright 2026 The volcap Authors
// SPDX-License-Identifier: Apache-2.0

#include "volcap/pipeline/stages.hpp"

#include <algorithm>
#include <chrono>
#include <fstream>
#include <memory>
#include <set>

#include "volcap/brain/ridge.hpp"
#include "volcap/brain/train.hpp"
#include "volcap/dataset/bundle.hpp"
#include "volcap/dataset/prepare.hpp"
#include "volcap/encoders/encoders.hpp"
#include "volcap/error.hpp"
#include "volcap/hash.hpp"
#include "volcap/metrics/text.hpp"
#include "volcap/pipeline/report.hpp"
#include "volcap/tensor_io.hpp"

namespace volcap::pipeline {

namespace fs = std::filesystem;
using nlohmann::json;

const std::vector<Stage>& all_stages() {
  static const std::vector<Stage> kAll{Stage::kPreprocess, Stage::kTrainBrain, Stage::kTrainCaption,
                                       Stage::kInfer,      Stage::kEvaluate,   Stage::kReport};
  return kAll;
}

std::string to_string(Stage s) {
  switch (s) {
    case Stage::kPreprocess: return "preprocess";
    case Stage::kTrainBrain: return "train-brain";
    case Stage::kTrainCaption: return "train-caption";
    case Stage::kInfer: return "infer";
    case Stage::kEvaluate: return "evaluate";
    case Stage::kReport: return "report";
  }
  return "?";
}

Stage parse_stage(const std::string& s) {
  for (Stage st : all_stages()) {
    if (to_string(st) == s) return st;
  }
  throw ConfigError("unknown stage '" + s +
                    "' (expected preprocess|train-brain|train-caption|infer|evaluate|report)");
}

std::string stage_dir_name(Stage s) {
  switch (s) {
    case Stage::kTrainBrain: return "brain";
    case Stage::kTrainCaption: return "caption";
    default: return to_string(s);
  }
}

// The two trainers only share the prepared data, matching the separate training
// of the brain and captioning modules.
const std::vector<Stage>& prerequisites(Stage s) {
  static const std::vector<Stage> kNone;
  static const std::vector<Stage> kPre{Stage::kPreprocess};
  static const std::vector<Stage> kInferDeps{Stage::kPreprocess, Stage::kTrainBrain, Stage::kTrainCaption};
  static const std::vector<Stage> kEvalDeps{Stage::kInfer};
  static const std::vector<Stage> kReportDeps{Stage::kTrainBrain, Stage::kEvaluate};
  switch (s) {
    case Stage::kPreprocess: return kNone;
    case Stage::kTrainBrain:
    case Stage::kTrainCaption: return kPre;
    case Stage::kInfer: return kInferDeps;
    case Stage::kEvaluate: return kEvalDeps;
    case Stage::kReport: return kReportDeps;
  }
  return kNone;
}

json StageRecord::to_json() const {
  return {{"fingerprint", fingerprint}, {"seed", seed},       {"inputs", inputs},
          {"outputs", outputs},         {"seconds", seconds}};
}

StageRecord StageRecord::from_json(const json& j) {
  StageRecord r;
  r.fingerprint = j.at("fingerprint").get<std::string>();
  r.seed = j.at("seed").get<std::uint64_t>();
  r.inputs = j.at("inputs").get<std::map<std::string, std::string>>();
  r.outputs = j.at("outputs").get<std::map<std::string, std::string>>();
  r.seconds = j.value("seconds", 0.0);
  return r;
}

json RunManifest::to_json() const {
  json st = json::object();
  for (const auto& [name, rec] : stages) st[name] = rec.to_json();
  return {{"subject", subject}, {"config", config}, {"versions", versions}, {"stages", st}};
}

RunManifest RunManifest::from_json(const json& j) {
  RunManifest m;
  m.subject = j.at("subject").get<std::string>();
  m.config = j.value("config", json::object());
  m.versions = j.value("versions", json::object());
  for (const auto& [name, rec] : j.at("stages").items()) m.stages[name] = StageRecord::from_json(rec);
  return m;
}

RunManifest read_manifest(const fs::path& dir) {
  const fs::path path = dir / "manifest.json";
  if (!fs::exists(path)) return {};
  std::ifstream in(path);
  try {
    return RunManifest::from_json(json::parse(in));
  } catch (const json::exception& e) {
    throw ValidationError("corrupt run manifest " + path.string() + ": " + e.what());
  }
}

void write_manifest(const fs::path& dir, const RunManifest& m) {
  fs::create_directories(dir);
  const fs::path tmp = dir / "manifest.json.tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    out << m.to_json().dump(2) << "\n";
    if (!out) throw Error("failed writing " + tmp.string());
  }
  fs::rename(tmp, dir / "manifest.json");
}

std::map<std::string, std::string> hash_tree(const fs::path& dir) {
  std::map<std::string, std::string> out;
  if (!fs::is_directory(dir)) return out;
  for (const auto& e : fs::recursive_directory_iterator(dir)) {
    if (e.is_regular_file()) out[fs::relative(e.path(), dir).generic_string()] = file_hash(e.path());
  }
  return out;
}

std::string to_string(StageStatus s) { return s == StageStatus::kRan ? "ran" : "cached"; }

fs::path subject_dir(const RunConfig& cfg, const std::string& subject) { return cfg.run_dir / subject; }

std::string normalize_caption(const std::string& text) {
  std::string out;
  for (const auto& w : metrics::tokenize(text)) out += (out.empty() ? "" : " ") + w;
  return out;
}

namespace {

using Clock = std::chrono::steady_clock;

struct StageContext {
  const RunConfig& cfg;
  std::string subject;
  fs::path root;  // subject dir
  fs::path out;   // staging directory for this stage's outputs
  std::uint64_t seed;

  fs::path dir(Stage s) const { return root / stage_dir_name(s); }
};

void write_json(const fs::path& path, const json& j) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  out << j.dump(2) << "\n";
  if (!out) throw Error("failed writing " + path.string());
}

// One row per stimulus; repeated training trials share a target.
std::vector<std::pair<std::string, std::vector<double>>> unique_targets(const dataset::PreparedSplit& s) {
  std::vector<std::pair<std::string, std::vector<double>>> out;
  std::set<std::string> seen;
  const std::size_t e = s.y.dim(1);
  for (std::size_t i = 0; i < s.stimulus_ids.size(); ++i) {
    if (!seen.insert(s.stimulus_ids[i]).second) continue;
    const auto* row = s.y.data() + i * e;
    out.emplace_back(s.stimulus_ids[i], std::vector<double>(row, row + e));
  }
  return out;
}

fs::path captions_file(const fs::path& infer_dir, metrics::Protocol p) {
  return infer_dir / ("captions_" + metrics::to_string(p) + ".jsonl");
}

metrics::MetricReport read_metric_report(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw LoadError("missing file: " + path.string());
  try {
    return metrics::MetricReport::from_json(json::parse(in));
  } catch (const json::exception& e) {
    throw ValidationError(path.string() + ": " + e.what());
  }
}

}  // namespace

void preprocess_bundle(const fs::path& manifest, const std::string& subject, const dataset::PrepareOptions& opt,
                       const fs::path& out) {
  const auto bundle = dataset::load_bundle(manifest);
  if (!subject.empty() && bundle.subject_id != subject) {
    throw ValidationError("bundle " + manifest.string() + " is for subject '" + bundle.subject_id +
                          "', configured as '" + subject + "'");
  }
  const auto prepared = dataset::prepare(bundle, opt);
  if (prepared.test.stimulus_ids.empty()) throw DataError("subject " + bundle.subject_id + " has no test trials");
  dataset::write_prepared(prepared, out);
}

void train_brain(const fs::path& prepared_dir, const BrainStageConfig& b, std::uint64_t seed, const fs::path& out) {
  const auto d = dataset::read_prepared(prepared_dir);
  fs::create_directories(out);
  const std::size_t e_dim = d.train.y.dim(1);
  json history = {{"mapper", to_string(b.mapper)}};
  brain::BrainModel model;
  if (b.mapper == MapperKind::kRidge) {
    double lambda = 0.0;
    if (b.lambda) {
      lambda = *b.lambda;
    } else {
      const auto grid = b.lambda_grid.empty() ? brain::default_lambda_grid() : b.lambda_grid;
      const auto cv = brain::ridge_cv(d.train.x, d.train.y, grid, b.cv_folds);
      lambda = cv.best_lambda;
      history["cv"] = {{"lambdas", cv.lambdas}, {"mse", cv.cv_mse}, {"folds", b.cv_folds}};
    }
    history["lambda"] = lambda;
    model = brain::BrainModel(brain::ridge_fit(d.train.x, d.train.y, lambda));
  } else {
    ag::TrainConfig tc = b.train;
    tc.seed = derive_seed(seed, "train");
    std::unique_ptr<brain::Mapper> mapper;
    if (b.mapper == MapperKind::kLinear) {
      mapper = std::make_unique<brain::LinearMapper>(d.train.x.dim(1), e_dim, derive_seed(seed, "init"));
    } else {
      auto base = b.mapper == MapperKind::kShallow ? brain::ConvMapperConfig::shallow(d.volume_shape, e_dim)
                                                   : brain::ConvMapperConfig::wide(d.volume_shape, e_dim);
      json j = base.to_json();
      j.update(b.conv);
      j["seed"] = derive_seed(seed, "init");
      mapper = brain::build_conv_mapper(brain::ConvMapperConfig::from_json(j));
    }
    const auto hist = brain::train_mapper(*mapper, d.train.x, d.train.y, tc);
    if (auto* conv = dynamic_cast<brain::ConvMapper*>(mapper.get())) {
      brain::recalibrate_norms(*conv, d.train.x, tc.batch_size);
    }
    history["epoch_loss"] = hist.epoch_loss;
    history["train"] = tc.to_json();
    model = brain::BrainModel(std::move(mapper));
  }
  history["parameter_count"] = model.parameter_count();
  brain::save_brain_model(model, out / "model");
  write_json(out / "history.json", history);
}

void train_caption(const fs::path& prepared_dir, const CaptionStageConfig& cc, const caption::DecodeConfig& decode,
                   std::uint64_t seed, const fs::path& out) {
  const auto d = dataset::read_prepared(prepared_dir);
  fs::create_directories(out);
  const auto targets = unique_targets(d.train);
  std::vector<std::string> corpus;
  std::vector<std::pair<std::size_t, std::string>> texts;  // (target index, caption)
  for (std::size_t i = 0; i < targets.size(); ++i) {
    const auto it = d.captions.find(targets[i].first);
    if (it == d.captions.end()) continue;
    for (const auto& cap : it->second) {
      std::string norm = normalize_caption(cap);
      if (norm.empty()) continue;
      corpus.push_back(norm);
      texts.emplace_back(i, std::move(norm));
    }
  }
  if (texts.empty()) throw DataError("subject " + d.subject_id + ": no training captions");

  caption::CaptionModel model;
  model.tokenizer = caption::WhitespaceTokenizer::from_corpus(corpus);
  std::vector<caption::CaptionPair> pairs;
  for (const auto& [i, text] : texts) {
    pairs.push_back({targets[i].first, targets[i].second, model.tokenizer.encode_with_eos(text)});
  }
  const auto lm_cfg = cc.lm_config(model.tokenizer.vocab_size(), derive_seed(seed, "lm"));
  auto lm = std::make_unique<caption::TinyLM>(lm_cfg);
  model.mapper = std::make_unique<caption::PrefixMapper>(
      cc.mapper_config(d.train.y.dim(1), lm_cfg.embed_dim, derive_seed(seed, "mapper")));
  ag::TrainConfig tc = cc.train;
  tc.seed = derive_seed(seed, "train");
  const auto hist = caption::train_captioner(*model.mapper, *lm, pairs, tc, cc.freeze_lm);
  model.lm_config = lm_cfg.to_json();
  model.lm_config["kind"] = "tiny";
  model.lm = std::move(lm);
  model.decode = decode;
  caption::save_caption_model(model, out / "model");
  write_json(out / "history.json", {{"epoch_loss", hist.epoch_loss},
                                      {"pairs", pairs.size()},
                                      {"vocab_size", model.tokenizer.vocab_size()},
                                      {"freeze_lm", cc.freeze_lm},
                                      {"train", tc.to_json()}});
}

void infer_captions(const fs::path& prepared_dir, const fs::path& brain_dir, const fs::path& caption_dir,
                    const caption::DecodeConfig& decode, metrics::Protocol protocol, const fs::path& out) {
  const auto d = dataset::read_prepared(prepared_dir);
  const auto brain_model = brain::load_brain_model(brain_dir / "model");
  auto cap = caption::load_caption_model(caption_dir / "model");
  cap.decode = decode;
  fs::create_directories(out);
  encoders::require_dim(brain_model.output_dim(), cap.mapper->config().input_dim, "caption mapper input");

  const Tensor pred = brain_model.predict(d.test.x);
  write_tensor(out / "predicted_embeddings.vct", pred);
  const std::size_t e = pred.dim(1);
  std::vector<metrics::EvalPair> vs_coco, vs_model;
  for (std::size_t i = 0; i < d.test.stimulus_ids.size(); ++i) {
    const std::string& stim = d.test.stimulus_ids[i];
    const std::vector<double> p(pred.data() + i * e, pred.data() + (i + 1) * e);
    const std::vector<double> t(d.test.y.data() + i * e, d.test.y.data() + (i + 1) * e);
    const std::string predicted = cap.caption(p, stim).text;
    const auto refs = d.captions.find(stim);
    if (refs == d.captions.end() || refs->second.empty()) {
      throw DataError("test stimulus " + stim + " has no reference captions");
    }
    vs_coco.push_back({stim, predicted, refs->second, metrics::Protocol::kVsCoco});
    vs_model.push_back({stim, predicted, {cap.caption(t, stim).text}, metrics::Protocol::kVsModel});
  }
  metrics::write_eval_pairs(captions_file(out, metrics::Protocol::kVsCoco), vs_coco);
  metrics::write_eval_pairs(captions_file(out, metrics::Protocol::kVsModel), vs_model);
  metrics::write_eval_pairs(out / "captions.jsonl",
                            protocol == metrics::Protocol::kVsCoco ? vs_coco : vs_model);
}

void evaluate_captions(const fs::path& infer_dir, const EvaluateStageConfig& cfg, const fs::path& out) {
  const auto enc = load_text_encoders(cfg.encoders);
  metrics::MeteorOptions mo;
  mo.stem = cfg.meteor_stem;
  fs::create_directories(out);
  for (auto p : {metrics::Protocol::kVsCoco, metrics::Protocol::kVsModel}) {
    const auto pairs = metrics::read_eval_pairs(captions_file(infer_dir, p));
    auto report = metrics::build_report(pairs, enc.view(), mo);
    report.encoder_source = enc.source;
    write_json(out / ("report_" + metrics::to_string(p) + ".json"), report.to_json());
  }
}

void write_subject_report(const std::string& subject, MapperKind mapper, metrics::Protocol protocol,
                          const fs::path& brain_dir, const fs::path& evaluate_dir, const fs::path& out) {
  const auto brain_model = brain::load_brain_model(brain_dir / "model");
  SubjectReport r;
  r.subject = subject;
  r.mapper = mapper;
  r.protocol = protocol;
  r.vs_coco = read_metric_report(evaluate_dir / "report_vs_coco.json");
  r.vs_model = read_metric_report(evaluate_dir / "report_vs_model.json");
  fs::create_directories(out);
  r.parameter_count = brain_model.parameter_count();
  r.embedding_dim = brain_model.output_dim();
  write_json(out / "report.json", r.to_json());
  std::ofstream table(out / "table1.txt", std::ios::binary | std::ios::trunc);
  table << render_subject_table(r) << "\n" << efficiency_line(r.embedding_dim) << "\n";
  if (!table) throw Error("failed writing table1.txt");
}

namespace {

// --- scheduling ---------------------------------------------------------------

json stage_config(Stage s, const RunConfig& cfg) {
  const json all = cfg.to_json();
  switch (s) {
    case Stage::kPreprocess:
      return {{"mode", dataset::to_string(cfg.norm_mode())}, {"preprocess", all.at("preprocess")}};
    case Stage::kTrainBrain: return all.at("brain");
    // The saved decode settings are only defaults; infer applies the configured ones.
    case Stage::kTrainCaption: return all.at("caption");
    case Stage::kInfer: return {{"decode", all.at("decode")}, {"protocol", all.at("protocol")}};
    case Stage::kEvaluate: return all.at("evaluate");
    case Stage::kReport: return {{"protocol", all.at("protocol")}, {"mapper", all.at("brain").at("mapper")}};
  }
  return {};
}

std::map<std::string, std::string> stage_inputs(Stage s, const StageContext& c) {
  std::map<std::string, std::string> in;
  auto add_tree = [&](const std::string& prefix, const fs::path& dir) {
    for (auto& [rel, h] : hash_tree(dir)) in[prefix + "/" + rel] = h;
  };
  if (s == Stage::kPreprocess) {
    const fs::path manifest = c.cfg.data.at(c.subject);
    if (!fs::exists(manifest)) throw LoadError("data manifest for " + c.subject + " not found: " + manifest.string());
    add_tree("data", manifest.parent_path());
  }
  if (s == Stage::kEvaluate && c.cfg.evaluate.encoders != "stub") {
    if (!fs::is_directory(c.cfg.evaluate.encoders)) {
      throw LoadError("encoder directory not found: " + c.cfg.evaluate.encoders);
    }
    add_tree("encoders", c.cfg.evaluate.encoders);
  }
  for (Stage p : prerequisites(s)) add_tree(stage_dir_name(p), c.dir(p));
  return in;
}

void check_prerequisites(Stage s, const StageContext& c, const RunManifest& m) {
  std::vector<std::string> missing;
  for (Stage p : prerequisites(s)) {
    const auto it = m.stages.find(to_string(p));
    if (it == m.stages.end()) {
      missing.push_back(to_string(p));
      continue;
    }
    const auto actual = hash_tree(c.dir(p));
    if (actual != it->second.outputs) {
      std::string what = "outputs changed since it ran";
      for (const auto& [rel, h] : it->second.outputs) {
        const auto a = actual.find(rel);
        if (a == actual.end()) {
          what = stage_dir_name(p) + "/" + rel + " is missing";
          break;
        }
        if (a->second != h) {
          what = stage_dir_name(p) + "/" + rel + " was modified";
          break;
        }
      }
      throw DependencyError("stage " + to_string(s) + " for " + c.subject + ": prerequisite " + to_string(p) + " " +
                            what + "; rerun " + to_string(p) + " first");
    }
  }
  if (!missing.empty()) {
    std::string list;
    for (const auto& x : missing) list += (list.empty() ? "" : ", ") + x;
    throw DependencyError("stage " + to_string(s) + " for " + c.subject + " needs " + list +
                          " to run first (volcap run --stage " + missing.front() + ")");
  }
}

void run_body(Stage s, const StageContext& c) {
  const RunConfig& cfg = c.cfg;
  switch (s) {
    case Stage::kPreprocess: {
      dataset::PrepareOptions opt;
      opt.mode = cfg.norm_mode();
      opt.minmax_scope = cfg.preprocess.minmax_scope;
      opt.average_test_repetitions = cfg.preprocess.average_test_repetitions;
      opt.l2_normalize_targets = cfg.preprocess.l2_normalize_targets;
      return preprocess_bundle(cfg.data.at(c.subject), c.subject, opt, c.out);
    }
    case Stage::kTrainBrain: return train_brain(c.dir(Stage::kPreprocess), cfg.brain, c.seed, c.out);
    case Stage::kTrainCaption:
      return train_caption(c.dir(Stage::kPreprocess), cfg.caption, cfg.decode, c.seed, c.out);
    case Stage::kInfer:
      return infer_captions(c.dir(Stage::kPreprocess), c.dir(Stage::kTrainBrain), c.dir(Stage::kTrainCaption),
                            cfg.decode, cfg.protocol, c.out);
    case Stage::kEvaluate: return evaluate_captions(c.dir(Stage::kInfer), cfg.evaluate, c.out);
    case Stage::kReport:
      return write_subject_report(c.subject, cfg.brain.mapper, cfg.protocol, c.dir(Stage::kTrainBrain),
                                  c.dir(Stage::kEvaluate), c.out);
  }
}

}  // namespace

StageOutcome run_stage(Stage stage, const RunConfig& cfg, const std::string& subject, bool force) {
  if (std::find(cfg.subjects.begin(), cfg.subjects.end(), subject) == cfg.subjects.end()) {
    throw ConfigError("subject '" + subject + "' is not in the run config");
  }
  const fs::path root = subject_dir(cfg, subject);
  const fs::path final_dir = root / stage_dir_name(stage);
  StageContext ctx{cfg, subject, root, root / (stage_dir_name(stage) + ".tmp"),
                   derive_seed(cfg.seed, subject + "/" + to_string(stage))};

  RunManifest m = read_manifest(root);
  check_prerequisites(stage, ctx, m);
  StageRecord rec;
  rec.seed = ctx.seed;
  rec.inputs = stage_inputs(stage, ctx);
  const json fp = {{"stage", to_string(stage)}, {"version", kVersion},      {"config", stage_config(stage, cfg)},
                   {"seed", rec.seed},          {"inputs", rec.inputs}};
  rec.fingerprint = hex64(fnv1a64(fp.dump()));

  StageOutcome outcome{subject, stage, StageStatus::kCached, 0.0};
  const auto prev = m.stages.find(to_string(stage));
  if (!force && prev != m.stages.end() && prev->second.fingerprint == rec.fingerprint &&
      hash_tree(final_dir) == prev->second.outputs) {
    return outcome;
  }

  const auto t0 = Clock::now();
  fs::remove_all(ctx.out);
  fs::create_directories(ctx.out);
  try {
    run_body(stage, ctx);
  } catch (...) {
    fs::remove_all(ctx.out);
    throw;
  }
  fs::remove_all(final_dir);
  fs::rename(ctx.out, final_dir);
  rec.outputs = hash_tree(final_dir);
  rec.seconds = std::chrono::duration<double>(Clock::now() - t0).count();

  m.subject = subject;
  m.config = cfg.to_json();
  m.versions = {{"volcap", kVersion}, {"manifest_format", kManifestFormat}};
  m.stages[to_string(stage)] = rec;
  write_manifest(root, m);

  outcome.status = StageStatus::kRan;
  outcome.seconds = rec.seconds;
  return outcome;
}

std::vector<StageOutcome> run_pipeline(const RunConfig& cfg, std::optional<Stage> only, bool force,
                                       const std::function<void(const StageOutcome&)>& progress) {
  std::vector<StageOutcome> out;
  for (const auto& subject : cfg.subjects) {
    for (Stage s : all_stages()) {
      if (only && *only != s) continue;
      out.push_back(run_stage(s, cfg, subject, force));
      if (progress) progress(out.back());
    }
  }
  return out;
}

}  // namespace volcap::pipeline
