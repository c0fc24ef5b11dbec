// Copyright 2026 The volcap Authors
// SPDX-License-Identifier: Apache-2.0

// volcap: command-line front end for the fMRI captioning pipeline.
//
// Exit codes: 0 success, 1 unexpected failure, 2 invalid config/data,
// 3 missing prerequisite stage, 4 numeric failure.

#include <algorithm>
#include <cstdio>
#include <fstream>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "json.hpp"
#include "volcap/brain/train.hpp"
#include "volcap/dataset/synth.hpp"
#include "volcap/error.hpp"
#include "volcap/pipeline/report.hpp"
#include "volcap/pipeline/stages.hpp"
#include "volcap/tensor_io.hpp"

namespace fs = std::filesystem;
using nlohmann::json;
using namespace volcap;
using namespace volcap::pipeline;

namespace {

constexpr int kExitUnexpected = 1;
constexpr int kExitValidation = 2;
constexpr int kExitDependency = 3;
constexpr int kExitNumeric = 4;

json read_json_file(const std::string& path) {
  if (path.empty()) return json::object();
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open " + path);
  try {
    return json::parse(in);
  } catch (const json::exception& e) {
    throw ConfigError(path + ": " + e.what());
  }
}

std::uint64_t seed_or_env(std::optional<std::uint64_t> flag) {
  RunConfig probe;
  probe.seed = flag.value_or(0);
  if (!flag) apply_env_overrides(probe);
  return probe.seed;
}

int fail(const std::exception& e, int code) {
  std::fprintf(stderr, "volcap: %s\n", e.what());
  return code;
}

void print_outcome(const StageOutcome& o) {
  std::printf("%-6s %-14s %-7s %.2fs\n", o.subject.c_str(), to_string(o.stage).c_str(), to_string(o.status).c_str(),
              o.seconds);
  std::fflush(stdout);
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"volcap: fMRI to caption pipeline"};
  app.require_subcommand(1);

  // synth
  auto* synth = app.add_subcommand("synth", "Generate a seeded synthetic dataset bundle");
  std::string synth_config, synth_out, synth_subject;
  std::optional<std::uint64_t> synth_seed;
  synth->add_option("--config", synth_config, "Synth config JSON");
  synth->add_option("--seed", synth_seed, "Seed (default: VOLCAP_SEED or 0)");
  synth->add_option("--subject", synth_subject, "Subject id override");
  synth->add_option("--out", synth_out, "Output bundle directory")->required();

  // preprocess
  auto* pre = app.add_subcommand("preprocess", "Load a bundle, normalize, write prepared tensors");
  std::string pre_data, pre_out, pre_mode = "zscore", pre_scope = "global";
  bool pre_no_average = false, pre_l2 = false;
  pre->add_option("--manifest,--data", pre_data, "Bundle manifest.json")->required();
  pre->add_option("--out", pre_out, "Output directory")->required();
  pre->add_option("--mode", pre_mode, "zscore | minmax")->capture_default_str();
  pre->add_option("--scope", pre_scope, "minmax scope: global | per_volume")->capture_default_str();
  pre->add_flag("--no-average", pre_no_average, "Keep test repetitions separate");
  pre->add_flag("--l2-targets", pre_l2, "Scale target embeddings to unit norm");

  // train-brain
  auto* tb = app.add_subcommand("train-brain", "Fit the fMRI -> embedding mapper");
  std::string tb_prepared, tb_out, tb_config, tb_mapper, tb_lambda;
  std::optional<std::uint64_t> tb_seed;
  tb->add_option("--data,--prepared", tb_prepared, "Prepared data directory")->required();
  tb->add_option("--out", tb_out, "Output directory")->required();
  tb->add_option("--train-config,--config", tb_config, "Brain section JSON (mapper, lambda, train, conv)");
  tb->add_option("--mapper", tb_mapper, "ridge | linear | shallow | wide");
  tb->add_option("--lambda", tb_lambda, "Ridge penalty or 'cv'");
  tb->add_option("--seed", tb_seed, "Seed (default: VOLCAP_SEED or 0)");

  // predict-embeddings
  auto* pe = app.add_subcommand("predict-embeddings", "Predict target embeddings with a trained mapper");
  std::string pe_model, pe_prepared, pe_split = "test", pe_out;
  pe->add_option("--model", pe_model, "train-brain output directory")->required();
  pe->add_option("--data,--prepared", pe_prepared, "Prepared data directory")->required();
  pe->add_option("--split", pe_split, "train | test")->capture_default_str();
  pe->add_option("--out", pe_out, "Output .vct file")->required();

  // train-caption
  auto* tc = app.add_subcommand("train-caption", "Train the prefix mapper (and tiny LM) on target embeddings");
  std::string tc_prepared, tc_out, tc_config;
  std::optional<std::uint64_t> tc_seed;
  tc->add_option("--pairs,--prepared", tc_prepared, "Prepared data directory")->required();
  tc->add_option("--out", tc_out, "Output directory")->required();
  tc->add_option("--config", tc_config, "Caption section JSON (mapper, lm, freeze_lm, train)");
  tc->add_option("--seed", tc_seed, "Seed (default: VOLCAP_SEED or 0)");

  // infer
  auto* inf = app.add_subcommand("infer", "Caption the test split from predicted embeddings");
  std::string inf_prepared, inf_brain, inf_caption, inf_out, inf_protocol = "vs_coco";
  caption::DecodeConfig inf_decode;
  inf->add_option("--data,--prepared", inf_prepared, "Prepared data directory")->required();
  inf->add_option("--brain-model,--brain", inf_brain, "train-brain output directory")->required();
  inf->add_option("--caption-model,--caption", inf_caption, "train-caption output directory")->required();
  inf->add_option("--out", inf_out, "Output directory, or a .jsonl path for the captions file")->required();
  inf->add_option("--protocol", inf_protocol, "vs_coco | vs_model (for captions.jsonl)")->capture_default_str();
  inf->add_option("--beam,--beam-width", inf_decode.beam_width)->capture_default_str();
  inf->add_option("--max-len", inf_decode.max_len)->capture_default_str();
  inf->add_option("--length-penalty", inf_decode.length_penalty)->capture_default_str();

  // evaluate
  auto* ev = app.add_subcommand("evaluate", "Score a captions.jsonl file and print the metric table");
  std::string ev_captions, ev_encoders = "stub", ev_out, ev_protocol;
  bool ev_stem = false;
  ev->add_option("--pred,--captions", ev_captions, "captions jsonl")->required();
  ev->add_option("--encoders", ev_encoders, "'stub' or a directory of text stores")->capture_default_str();
  ev->add_flag("--stem", ev_stem, "Add the METEOR stem matching stage");
  ev->add_option("--protocol", ev_protocol, "Expected protocol of every pair: vs_coco | vs_model");
  ev->add_option("--out", ev_out, "Write the report JSON here");

  // run
  auto* run = app.add_subcommand("run", "Run the pipeline from a run config");
  std::string run_config, run_stage_name, run_subject;
  bool run_force = false;
  run->add_option("--config", run_config, "Run config JSON")->required();
  run->add_option("--stage", run_stage_name, "Only this stage");
  run->add_option("--subject", run_subject, "Only this subject");
  run->add_flag("--force", run_force, "Rerun even when cached");

  // report
  auto* rep = app.add_subcommand("report", "Compare mapping networks across runs (mean over subjects)");
  std::vector<std::string> rep_runs;
  std::string rep_out;
  rep->add_option("--runs", rep_runs, "Run, subject or report.json paths")->required();
  rep->add_option("--out", rep_out, "Also write the table here");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : kExitValidation;
  }

  try {
    if (*synth) {
      auto cfg = dataset::SynthConfig::from_json(read_json_file(synth_config));
      if (!synth_subject.empty()) cfg.subject_id = synth_subject;
      const auto manifest = dataset::write_synth(dataset::synth_generate(cfg, seed_or_env(synth_seed)), synth_out);
      std::printf("%s\n", manifest.string().c_str());
    } else if (*pre) {
      dataset::PrepareOptions opt;
      opt.mode = dataset::parse_norm_mode(pre_mode);
      opt.minmax_scope = dataset::parse_minmax_scope(pre_scope);
      opt.average_test_repetitions = !pre_no_average;
      opt.l2_normalize_targets = pre_l2;
      preprocess_bundle(pre_data, "", opt, pre_out);
    } else if (*tb) {
      json j = read_json_file(tb_config);
      if (!tb_mapper.empty()) j["mapper"] = tb_mapper;
      if (tb_lambda == "cv") j["lambda"] = "cv";
      else if (!tb_lambda.empty()) j["lambda"] = std::stod(tb_lambda);
      train_brain(tb_prepared, BrainStageConfig::from_json(j), seed_or_env(tb_seed), tb_out);
    } else if (*pe) {
      const auto d = dataset::read_prepared(pe_prepared);
      if (pe_split != "train" && pe_split != "test") throw ConfigError("--split must be train or test");
      const auto model = brain::load_brain_model(fs::path(pe_model) / "model");
      write_tensor(pe_out, model.predict(pe_split == "train" ? d.train.x : d.test.x));
    } else if (*tc) {
      train_caption(tc_prepared, CaptionStageConfig::from_json(read_json_file(tc_config)), caption::DecodeConfig{},
                    seed_or_env(tc_seed), tc_out);
    } else if (*inf) {
      inf_decode.validate();
      const auto protocol = metrics::parse_protocol(inf_protocol);
      const fs::path out(inf_out);
      if (out.extension() != ".jsonl") {
        infer_captions(inf_prepared, inf_brain, inf_caption, inf_decode, protocol, out);
      } else {
        // <name>.jsonl plus <name>_vs_coco.jsonl, <name>_vs_model.jsonl, <name>_embeddings.vct beside it
        const fs::path parent = out.has_parent_path() ? out.parent_path() : fs::path(".");
        const fs::path work = parent / (out.filename().string() + ".tmp");
        fs::remove_all(work);
        infer_captions(inf_prepared, inf_brain, inf_caption, inf_decode, protocol, work);
        const std::string stem = out.stem().string();
        fs::rename(work / "captions_vs_coco.jsonl", parent / (stem + "_vs_coco.jsonl"));
        fs::rename(work / "captions_vs_model.jsonl", parent / (stem + "_vs_model.jsonl"));
        fs::rename(work / "predicted_embeddings.vct", parent / (stem + "_embeddings.vct"));
        fs::rename(work / "captions.jsonl", out);
        fs::remove_all(work);
      }
    } else if (*ev) {
      const auto pairs = metrics::read_eval_pairs(ev_captions);
      if (!ev_protocol.empty()) {
        const auto want = metrics::parse_protocol(ev_protocol);
        for (const auto& p : pairs) {
          if (p.protocol != want) {
            throw ValidationError(ev_captions + ": pair " + p.stimulus_id + " is " + metrics::to_string(p.protocol) +
                                  ", expected " + ev_protocol);
          }
        }
      }
      const auto enc = load_text_encoders(ev_encoders);
      metrics::MeteorOptions mo;
      mo.stem = ev_stem;
      auto report = metrics::build_report(pairs, enc.view(), mo);
      report.encoder_source = enc.source;
      const std::vector<metrics::TableColumn> cols{
          {metrics::protocol_heading(report.protocol), "Ours", report.row_values()}};
      std::printf("%s", metrics::render_table(cols, 1).c_str());
      if (!ev_out.empty()) {
        std::ofstream out(ev_out, std::ios::binary | std::ios::trunc);
        out << report.to_json().dump(2) << "\n";
        if (!out) throw Error("failed writing " + ev_out);
      }
    } else if (*run) {
      RunConfig cfg = load_run_config(run_config);
      apply_env_overrides(cfg);
      std::optional<Stage> only;
      if (!run_stage_name.empty()) only = parse_stage(run_stage_name);
      if (!run_subject.empty()) {
        if (std::find(cfg.subjects.begin(), cfg.subjects.end(), run_subject) == cfg.subjects.end()) {
          throw ConfigError("subject '" + run_subject + "' is not in the run config");
        }
        cfg.subjects = {run_subject};
      }
      run_pipeline(cfg, only, run_force, print_outcome);
    } else if (*rep) {
      std::vector<fs::path> paths(rep_runs.begin(), rep_runs.end());
      const auto reports = collect_reports(paths);
      const auto table = ablation_report(reports);
      std::printf("%s\n", table.text.c_str());
      if (!rep_out.empty()) {
        std::ofstream out(rep_out, std::ios::binary | std::ios::trunc);
        out << table.text << "\n";
        if (!out) throw Error("failed writing " + rep_out);
      }
    }
  } catch (const DependencyError& e) {
    std::fprintf(stderr, "volcap: dependency error: %s\n", e.what());
    return kExitDependency;
  } catch (const NumericError& e) {
    std::fprintf(stderr, "volcap: numeric error: %s\n", e.what());
    return kExitNumeric;
  } catch (const ConfigError& e) {
    return fail(e, kExitValidation);
  } catch (const ValidationError& e) {
    return fail(e, kExitValidation);
  } catch (const DataError& e) {
    return fail(e, kExitValidation);
  } catch (const DimensionError& e) {
    return fail(e, kExitValidation);
  } catch (const LoadError& e) {
    return fail(e, kExitValidation);
  } catch (const MissingKeyError& e) {
    return fail(e, kExitValidation);
  } catch (const std::invalid_argument& e) {
    std::fprintf(stderr, "volcap: invalid argument: %s\n", e.what());
    return kExitValidation;
  } catch (const std::exception& e) {
    std::fprintf(stderr, "volcap: unexpected error: %s\n", e.what());
    return kExitUnexpected;
  }
  return 0;
}
