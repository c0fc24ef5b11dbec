// Copyright 2026 The volcap Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <string>
#include <string_view>
#include <vector>

namespace volcap::metrics {

/// Lowercase, drop ASCII punctuation, split on whitespace.
std::vector<std::string> tokenize(std::string_view text);

/// Porter (1980) suffix stripping on a lowercase ASCII word.
std::string porter_stem(std::string_view word);

}  // namespace volcap::metrics
