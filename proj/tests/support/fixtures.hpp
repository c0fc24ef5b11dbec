// Copyright 2026 The volcap Authors
// SPDX-License-Identifier: Apache-2.0

// Small shared builders for tests.

#pragma once

#include "volcap/brain/mapper.hpp"
#include "volcap/rng.hpp"
#include "volcap/tensor.hpp"

namespace volcap::testing {

inline Tensor randn(Shape s, Rng& rng, double sd = 1.0) {
  Tensor t(std::move(s));
  for (double& v : t.values()) v = rng.normal() * sd;
  return t;
}

/// Widths [2,4,8,16] on a 16^3 input; padding to 16 keeps the input as is.
inline brain::ConvMapperConfig tiny_conv_config(std::size_t output_dim = 8, std::uint64_t seed = 7) {
  brain::ConvMapperConfig c = brain::ConvMapperConfig::shallow({16, 16, 16}, output_dim);
  c.widths = {2, 4, 8, 16};
  c.pad_multiple = 16;
  c.seed = seed;
  return c;
}

}  // namespace volcap::testing
