// Copyright 2026 The volcap Authors
// SPDX-License-Identifier: Apache-2.0

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <set>
#include <sstream>

#include "doctest.h"
#include "json.hpp"
#include "volcap/dataset/synth.hpp"
#include "volcap/error.hpp"
#include "volcap/pipeline/report.hpp"
#include "volcap/pipeline/stages.hpp"

using namespace volcap;
using namespace volcap::pipeline;
namespace fs = std::filesystem;
using nlohmann::json;

namespace {

fs::path fresh_dir(const std::string& name) {
  const auto d = fs::temp_directory_path() / ("volcap_test_pipeline_" + name);
  fs::remove_all(d);
  fs::create_directories(d);
  return d;
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

fs::path make_bundle(const fs::path& root, const std::string& subject, std::uint64_t seed) {
  dataset::SynthConfig sc;
  sc.subject_id = subject;
  sc.volume_shape = {12, 12, 12};
  sc.n_train_stimuli = 16;
  sc.n_test_stimuli = 4;
  sc.embedding_dim = 16;
  return dataset::write_synth(dataset::synth_generate(sc, seed), root / "data" / subject);
}

json base_config(const fs::path& root, const std::vector<std::string>& subjects, const std::string& run_dir) {
  json data = json::object();
  for (std::size_t i = 0; i < subjects.size(); ++i) {
    data[subjects[i]] = make_bundle(root, subjects[i], 100 + i).string();
  }
  return {{"subjects", subjects},
          {"data", data},
          {"run_dir", run_dir},
          {"seed", 5},
          {"brain", {{"mapper", "ridge"}}},
          {"caption",
           {{"mapper", {{"prefix_length", 2}, {"mapper_layers", 1}, {"mapper_heads", 2}, {"mapper_hidden_dim", 32}}},
            {"lm", {{"embed_dim", 16}, {"layers", 1}, {"heads", 2}, {"mlp_hidden", 32}, {"max_positions", 24}}},
            {"freeze_lm", false},
            {"train", {{"epochs", 30}, {"batch_size", 8}, {"learning_rate", 0.01}}}}},
          {"decode", {{"max_len", 12}}}};
}

RunConfig config_at(const json& j, const fs::path& root) {
  auto cfg = RunConfig::from_json(j, root);
  cfg.validate();
  return cfg;
}

std::set<StageStatus> statuses(const std::vector<StageOutcome>& v) {
  std::set<StageStatus> s;
  for (const auto& o : v) s.insert(o.status);
  return s;
}

metrics::MetricReport flat_report(double v, metrics::Protocol p = metrics::Protocol::kVsCoco) {
  metrics::MetricReport r;
  r.protocol = p;
  r.meteor = r.rouge1 = r.rouge_l = v;
  r.sentence_pct = r.clip_b_pct = r.clip_l_pct = v;
  r.n_pairs = 4;
  return r;
}

SubjectReport subject_report(const std::string& subject, MapperKind mapper, double v,
                             metrics::Protocol p = metrics::Protocol::kVsCoco) {
  SubjectReport r;
  r.subject = subject;
  r.mapper = mapper;
  r.protocol = p;
  r.vs_coco = flat_report(v, metrics::Protocol::kVsCoco);
  r.vs_model = flat_report(v / 2, metrics::Protocol::kVsModel);
  r.parameter_count = 10;
  r.embedding_dim = 1536;
  return r;
}

}  // namespace

TEST_CASE("six stages end to end, then cached") {
  const auto root = fresh_dir("e2e");
  const auto cfg = config_at(base_config(root, {"syn1"}, "runs/a"), root);
  const auto first = run_pipeline(cfg);
  REQUIRE(first.size() == 6);
  CHECK(statuses(first) == std::set<StageStatus>{StageStatus::kRan});

  const auto sd = subject_dir(cfg, "syn1");
  CHECK(sd == root / "runs/a/syn1");
  CHECK(fs::is_regular_file(sd / "manifest.json"));
  CHECK(fs::is_regular_file(sd / "infer" / "captions.jsonl"));
  CHECK(fs::is_regular_file(sd / "report" / "report.json"));
  CHECK(fs::is_regular_file(sd / "report" / "table1.txt"));

  std::ifstream captions(sd / "infer" / "captions.jsonl");
  std::string line;
  std::size_t n = 0;
  while (std::getline(captions, line)) {
    const auto j = json::parse(line);
    CHECK(j.contains("predicted"));
    ++n;
  }
  CHECK(n == 4);

  const auto rep = read_subject_report(sd / "report" / "report.json");
  CHECK(rep.subject == "syn1");
  CHECK(rep.mapper == MapperKind::kRidge);
  CHECK(rep.embedding_dim == 16);
  CHECK(rep.vs_coco.n_pairs > 0);
  CHECK(rep.vs_model.n_pairs == 4);

  const auto second = run_pipeline(cfg);
  CHECK(statuses(second) == std::set<StageStatus>{StageStatus::kCached});

  const auto forced = run_pipeline(cfg, Stage::kEvaluate, true);
  REQUIRE(forced.size() == 1);
  CHECK(forced[0].status == StageStatus::kRan);
  // evaluate reran with identical output, so report stays valid
  CHECK(run_stage(Stage::kReport, cfg, "syn1").status == StageStatus::kCached);
}

TEST_CASE("dependency errors and tamper detection") {
  const auto root = fresh_dir("deps");
  auto j = base_config(root, {"syn1"}, "runs/d");
  const auto cfg = config_at(j, root);
  CHECK_THROWS_AS(run_stage(Stage::kEvaluate, cfg, "syn1"), DependencyError);
  CHECK_THROWS_AS(run_stage(Stage::kTrainBrain, cfg, "syn1"), DependencyError);

  run_pipeline(cfg);
  const auto sd = subject_dir(cfg, "syn1");
  {
    std::ofstream f(sd / "brain" / "history.json", std::ios::app);
    f << " ";
  }
  CHECK_THROWS_AS(run_stage(Stage::kInfer, cfg, "syn1"), DependencyError);
  try {
    run_stage(Stage::kInfer, cfg, "syn1");
  } catch (const DependencyError& e) {
    CHECK(std::string(e.what()).find("history.json") != std::string::npos);
  }

  // A full run repairs the tampered stage; the caption model is untouched.
  const auto repaired = run_pipeline(cfg);
  CHECK(repaired[0].status == StageStatus::kCached);
  CHECK(repaired[1].status == StageStatus::kRan);
  CHECK(repaired[2].status == StageStatus::kCached);

  fs::remove_all(sd / "infer");
  CHECK_THROWS_AS(run_stage(Stage::kEvaluate, cfg, "syn1"), DependencyError);
}

TEST_CASE("changing the seed invalidates seeded stages") {
  const auto root = fresh_dir("seed");
  auto j = base_config(root, {"syn1"}, "runs/s");
  run_pipeline(config_at(j, root));
  j["seed"] = 6;
  const auto out = run_pipeline(config_at(j, root));
  CHECK(out[0].status == StageStatus::kRan);  // the stage seed is part of every fingerprint
  CHECK(out[2].status == StageStatus::kRan);
}

TEST_CASE("identical configs give byte-identical captions") {
  const auto root = fresh_dir("repro");
  auto j = base_config(root, {"syn1"}, "runs/one");
  const auto a = config_at(j, root);
  j["run_dir"] = "runs/two";
  const auto b = config_at(j, root);
  run_pipeline(a);
  run_pipeline(b);
  const auto ca = slurp(subject_dir(a, "syn1") / "infer" / "captions.jsonl");
  const auto cb = slurp(subject_dir(b, "syn1") / "infer" / "captions.jsonl");
  CHECK(!ca.empty());
  CHECK(ca == cb);
}

TEST_CASE("run config is strict") {
  const auto root = fresh_dir("strict");
  auto j = base_config(root, {"syn1"}, "runs/x");
  CHECK_NOTHROW(config_at(j, root));

  auto bad = j;
  bad["lerning_rate"] = 1;
  CHECK_THROWS_AS(RunConfig::from_json(bad, root), ConfigError);
  bad = j;
  bad["caption"]["train"]["epoch"] = 3;
  CHECK_THROWS_AS(RunConfig::from_json(bad, root), ConfigError);
  bad = j;
  bad["brain"]["mapper"] = "deep";
  CHECK_THROWS_AS(RunConfig::from_json(bad, root), ConfigError);
  bad = j;
  bad["decode"]["max_len"] = 30;  // prefix 2 + 30 > 24 positions
  CHECK_THROWS_AS(config_at(bad, root), ConfigError);
  bad = j;
  bad["subjects"] = {"syn1", "syn9"};
  CHECK_THROWS_AS(config_at(bad, root), ConfigError);

  // relative paths resolve against the config's directory
  const auto cfg = config_at(j, root);
  CHECK(cfg.run_dir == root / "runs/x");

  // round trip
  const auto again = RunConfig::from_json(cfg.to_json(), root);
  CHECK(again.to_json() == cfg.to_json());
}

TEST_CASE("normalization follows the mapper unless overridden") {
  const auto root = fresh_dir("norm");
  auto j = base_config(root, {"syn1"}, "runs/n");
  CHECK(config_at(j, root).norm_mode() == dataset::NormMode::kZScore);
  j["brain"]["mapper"] = "shallow";
  CHECK(config_at(j, root).norm_mode() == dataset::NormMode::kMinMax);
  j["preprocess"] = {{"mode", "zscore"}};
  CHECK_THROWS_AS(config_at(j, root), ConfigError);
}

TEST_CASE("VOLCAP_SEED overrides the configured seed") {
  RunConfig cfg;
  cfg.seed = 3;
  ::setenv("VOLCAP_SEED", "41", 1);
  apply_env_overrides(cfg);
  CHECK(cfg.seed == 41);
  ::setenv("VOLCAP_SEED", "4x", 1);
  CHECK_THROWS_AS(apply_env_overrides(cfg), ConfigError);
  ::unsetenv("VOLCAP_SEED");
  cfg.seed = 3;
  apply_env_overrides(cfg);
  CHECK(cfg.seed == 3);
}

TEST_CASE("derived seeds differ per tag and are stable") {
  CHECK(derive_seed(5, "syn1/train-brain") == derive_seed(5, "syn1/train-brain"));
  CHECK(derive_seed(5, "syn1/train-brain") != derive_seed(5, "syn1/train-caption"));
  CHECK(derive_seed(5, "syn1/train-brain") != derive_seed(6, "syn1/train-brain"));
}

TEST_CASE("stage graph") {
  CHECK(prerequisites(Stage::kPreprocess).empty());
  CHECK(prerequisites(Stage::kInfer) == std::vector<Stage>{Stage::kPreprocess, Stage::kTrainBrain, Stage::kTrainCaption});
  for (const auto s : all_stages()) {
    CHECK(parse_stage(to_string(s)) == s);
    for (const auto p : prerequisites(s)) CHECK(static_cast<int>(p) < static_cast<int>(s));
  }
  CHECK_THROWS_AS(parse_stage("deploy"), ConfigError);
}

TEST_CASE("manifest round trip") {
  const auto d = fresh_dir("manifest");
  RunManifest m;
  m.subject = "syn1";
  m.config = {{"seed", 1}};
  m.versions = {{"volcap", kVersion}};
  StageRecord r;
  r.fingerprint = "abc";
  r.seed = 99;
  r.inputs = {{"x", "1"}};
  r.outputs = {{"y", "2"}};
  r.seconds = 0.5;
  m.stages["preprocess"] = r;
  write_manifest(d, m);
  const auto back = read_manifest(d);
  CHECK(back.to_json() == m.to_json());
  CHECK(read_manifest(d / "nowhere").stages.empty());
}

TEST_CASE("published schema lists the accepted keys") {
  const auto path = fs::path(VOLCAP_SOURCE_DIR) / "schemas" / "run_config.schema.json";
  std::ifstream in(path);
  REQUIRE(in);
  const auto schema = json::parse(in);
  std::set<std::string> published;
  for (const auto& [k, v] : schema.at("properties").items()) published.insert(k);
  const auto& keys = run_config_keys();
  CHECK(published == std::set<std::string>(keys.begin(), keys.end()));
  CHECK(schema.at("additionalProperties") == false);
}

TEST_CASE("dimensional efficiency") {
  CHECK(dimensional_efficiency(257, 1024, 1536) == doctest::Approx(263168.0 / 1536.0).epsilon(1e-12));
  CHECK(dimensional_efficiency(257, 1024, 1536) == doctest::Approx(171.3333333333).epsilon(1e-9));
  CHECK(dimensional_efficiency(1, 7, 7) == 1.0);
  CHECK(dimensional_efficiency(2, 8, 4) == 4.0);
  CHECK_THROWS_AS(dimensional_efficiency(257, 1024, 0), ValidationError);
  CHECK_THROWS_AS(dimensional_efficiency(0, 1024, 16), ValidationError);
  CHECK(efficiency_line(1536).find("171.33") != std::string::npos);
}

TEST_CASE("ablation table: columns, means and checks") {
  std::vector<SubjectReport> three{subject_report("s1", MapperKind::kWide, 0.3),
                                   subject_report("s1", MapperKind::kRidge, 0.1),
                                   subject_report("s1", MapperKind::kShallow, 0.2)};
  const auto t = ablation_report(three);
  REQUIRE(t.columns.size() == 3);
  CHECK(t.columns[0].name == "Ridge");
  CHECK(t.columns[1].name == "Shallow CNN");
  CHECK(t.columns[2].name == "Wide CNN");
  for (const auto& c : t.columns) CHECK(c.values.size() == metrics::metric_names().size());
  CHECK(t.text.find("171.33") != std::string::npos);

  const std::vector<SubjectReport> one{subject_report("s1", MapperKind::kWide, 0.3)};
  CHECK(ablation_report(one).columns.size() == 1);

  const std::vector<SubjectReport> two{subject_report("s1", MapperKind::kWide, 0.2),
                                       subject_report("s2", MapperKind::kWide, 0.4)};
  const auto m = ablation_report(two);
  REQUIRE(m.columns.size() == 1);
  for (double v : m.columns[0].values) CHECK(v == doctest::Approx(0.3));
  CHECK(m.subjects[0] == std::vector<std::string>{"s1", "s2"});

  std::vector<SubjectReport> mixed{subject_report("s1", MapperKind::kWide, 0.2),
                                   subject_report("s2", MapperKind::kRidge, 0.4, metrics::Protocol::kVsModel)};
  CHECK_THROWS_AS(ablation_report(mixed), ValidationError);
  std::vector<SubjectReport> dup{subject_report("s1", MapperKind::kWide, 0.2),
                                 subject_report("s1", MapperKind::kWide, 0.4)};
  CHECK_THROWS_AS(ablation_report(dup), ValidationError);

  // the vs_model protocol selects the other metric block
  std::vector<SubjectReport> vm{subject_report("s1", MapperKind::kWide, 0.2, metrics::Protocol::kVsModel)};
  CHECK(ablation_report(vm).columns[0].values[0] == doctest::Approx(0.1));
}

TEST_CASE("ablation over real runs") {
  const auto root = fresh_dir("ablation");
  auto j = base_config(root, {"syn1", "syn2"}, "runs/ridge");
  run_pipeline(config_at(j, root));
  j["run_dir"] = "runs/linear";
  j["brain"]["mapper"] = "linear";
  j["brain"]["train"] = {{"epochs", 20}, {"batch_size", 8}, {"learning_rate", 0.01}};
  run_pipeline(config_at(j, root));

  const std::vector<fs::path> runs{root / "runs/ridge", root / "runs/linear"};
  const auto reports = collect_reports(runs);
  CHECK(reports.size() == 4);
  const auto t = ablation_report(reports);
  REQUIRE(t.columns.size() == 2);
  CHECK(t.columns[0].name == "Ridge");
  CHECK(t.columns[1].name == "Linear");
  CHECK(t.subjects[0] == std::vector<std::string>{"syn1", "syn2"});

  // mean over subjects matches the per-subject reports
  const auto r1 = read_subject_report(root / "runs/ridge/syn1/report/report.json").vs_coco.row_values();
  const auto r2 = read_subject_report(root / "runs/ridge/syn2/report/report.json").vs_coco.row_values();
  for (std::size_t i = 0; i < r1.size(); ++i) CHECK(t.columns[0].values[i] == doctest::Approx((r1[i] + r2[i]) / 2));

  const std::vector<fs::path> missing{root / "runs/none"};
  CHECK_THROWS_AS(collect_reports(missing), LoadError);
}
