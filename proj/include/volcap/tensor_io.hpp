// Copyright 2026 The volcap Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <optional>

#include "volcap/tensor.hpp"

namespace volcap {

// VCT1 tensor file layout (all integers little-endian):
//   "VCT1" | dtype:u8 | rank:u8 | shape: rank x u32 | values, C row-major
enum class DType : std::uint8_t { kFloat32 = 0, kFloat64 = 1, kBool = 2 };

struct TensorRecord {
  Tensor tensor;
  DType dtype = DType::kFloat64;
};

void encode_tensor(std::ostream& out, const Tensor& t, DType dtype = DType::kFloat64);

/// Reads one tensor from the stream. Returns nullopt on clean EOF before the
/// magic; throws LoadError on a truncated or malformed record.
std::optional<TensorRecord> decode_tensor(std::istream& in);

void write_tensor(const std::filesystem::path& path, const Tensor& t, DType dtype = DType::kFloat64);
TensorRecord read_tensor_record(const std::filesystem::path& path);
Tensor read_tensor(const std::filesystem::path& path);

}  // namespace volcap
