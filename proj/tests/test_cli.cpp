// Copyright 2026 The volcap Authors
// SPDX-License-Identifier: Apache-2.0

#include <sys/wait.h>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>

#include "doctest.h"
#include "json.hpp"

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

const fs::path kDir = fs::temp_directory_path() / "volcap_test_cli";

struct Result {
  int code = -1;
  std::string out;
};

Result volcap(const std::string& args, const std::string& env = "") {
  const auto log = kDir / "stdout.txt";
  const std::string cmd = env + " '" VOLCAP_CLI "' " + args + " > '" + log.string() + "' 2>&1";
  const int status = std::system(cmd.c_str());
  Result r;
  r.code = WIFEXITED(status) ? WEXITSTATUS(status) : -1;
  std::ifstream in(log);
  std::stringstream ss;
  ss << in.rdbuf();
  r.out = ss.str();
  return r;
}

void write(const fs::path& p, const json& j) {
  std::ofstream(p) << j.dump(2);
}

json run_config(const std::string& run_dir) {
  return {{"subjects", {"syn1"}},
          {"data", {{"syn1", "data/manifest.json"}}},
          {"run_dir", run_dir},
          {"seed", 2},
          {"brain", {{"mapper", "ridge"}}},
          {"caption",
           {{"mapper", {{"prefix_length", 2}, {"mapper_layers", 1}, {"mapper_heads", 2}, {"mapper_hidden_dim", 32}}},
            {"lm", {{"embed_dim", 16}, {"layers", 1}, {"heads", 2}, {"mlp_hidden", 32}, {"max_positions", 24}}},
            {"freeze_lm", false},
            {"train", {{"epochs", 20}, {"batch_size", 8}, {"learning_rate", 0.01}}}}},
          {"decode", {{"max_len", 12}}}};
}

std::size_t count(const std::string& hay, const std::string& needle) {
  std::size_t n = 0;
  for (auto pos = hay.find(needle); pos != std::string::npos; pos = hay.find(needle, pos + 1)) ++n;
  return n;
}

}  // namespace

TEST_CASE("volcap run, cache, errors and report") {
  fs::remove_all(kDir);
  fs::create_directories(kDir);
  write(kDir / "synth.json", {{"subject_id", "syn1"}, {"n_train_stimuli", 12}, {"n_test_stimuli", 3}});
  const auto d = kDir.string();

  REQUIRE(volcap("synth --config " + d + "/synth.json --seed 4 --out " + d + "/data").code == 0);
  CHECK(fs::is_regular_file(kDir / "data" / "manifest.json"));

  write(kDir / "run.json", run_config("runs/a"));
  CHECK(volcap("run --config " + d + "/run.json --stage evaluate").code == 3);

  auto r = volcap("run --config " + d + "/run.json");
  REQUIRE(r.code == 0);
  CHECK(count(r.out, " ran ") == 6);
  r = volcap("run --config " + d + "/run.json");
  CHECK(r.code == 0);
  CHECK(count(r.out, " cached ") == 6);
  r = volcap("run --config " + d + "/run.json --stage report --force");
  CHECK(r.code == 0);
  CHECK(count(r.out, " ran ") == 1);

  // a new seed from the environment invalidates the cache
  r = volcap("run --config " + d + "/run.json --stage preprocess", "VOLCAP_SEED=9");
  CHECK(r.code == 0);
  CHECK(count(r.out, " ran ") == 1);
  CHECK(volcap("run --config " + d + "/run.json", "VOLCAP_SEED=nine").code == 2);

  auto bad = run_config("runs/b");
  bad["brain"]["lamda"] = 1.0;
  write(kDir / "bad.json", bad);
  r = volcap("run --config " + d + "/bad.json");
  CHECK(r.code == 2);
  CHECK(r.out.find("lamda") != std::string::npos);

  CHECK(volcap("run --config " + d + "/missing.json").code == 2);
  CHECK(volcap("frobnicate").code == 2);
  CHECK(volcap("--help").code == 0);

  r = volcap("report --runs " + d + "/runs/a");
  CHECK(r.code == 0);
  CHECK(r.out.find("Ridge") != std::string::npos);
  CHECK(r.out.find("METEOR") != std::string::npos);
  CHECK(volcap("report --runs " + d + "/runs/none").code == 2);
}
