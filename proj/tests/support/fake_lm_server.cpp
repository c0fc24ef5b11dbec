// Copyright 2026 The volcap Authors
// SPDX-License-Identifier: Apache-2.0

// Stand-in for an external language-model host: serves a seeded tiny LM over
// the stdin/stdout tensor protocol. Usage: fake_lm_server VOCAB DIM SEED

#include <cstdlib>
#include <iostream>
#include <string>

#include "volcap/caption/lm.hpp"

int main(int argc, char** argv) {
  if (argc != 4) {
    std::cerr << "usage: fake_lm_server VOCAB DIM SEED\n";
    return 2;
  }
  volcap::caption::TinyLMConfig cfg;
  cfg.vocab_size = std::stoul(argv[1]);
  cfg.embed_dim = std::stoul(argv[2]);
  cfg.seed = std::stoull(argv[3]);
  cfg.heads = 2;
  cfg.layers = 1;
  cfg.mlp_hidden = 16;
  const volcap::caption::TinyLM lm(cfg);
  std::ios::sync_with_stdio(false);
  volcap::caption::serve_lm(lm, std::cin, std::cout);
  return 0;
}
