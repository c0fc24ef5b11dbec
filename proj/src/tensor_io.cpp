// Copyright 2026 The volcap Authors
// SPDX-License-Identifier: Apache-2.0

#include "volcap/tensor_io.hpp"

#include <array>
#include <bit>
#include <cstring>
#include <fstream>
#include <istream>
#include <ostream>
#include <string>

#include "volcap/error.hpp"

namespace volcap {
namespace {

constexpr std::array<char, 4> kMagic = {'V', 'C', 'T', '1'};

template <typename U>
void put_le(std::string& buf, U v) {
  for (std::size_t i = 0; i < sizeof(U); ++i) buf.push_back(static_cast<char>((v >> (8 * i)) & 0xff));
}

template <typename U>
U get_le(const unsigned char* p) {
  U v = 0;
  for (std::size_t i = 0; i < sizeof(U); ++i) v |= static_cast<U>(p[i]) << (8 * i);
  return v;
}

std::size_t dtype_width(DType d) {
  switch (d) {
    case DType::kFloat32: return 4;
    case DType::kFloat64: return 8;
    case DType::kBool: return 1;
  }
  throw LoadError("unknown tensor dtype code " + std::to_string(static_cast<int>(d)));
}

void read_exact(std::istream& in, void* dst, std::size_t n, const char* what) {
  in.read(static_cast<char*>(dst), static_cast<std::streamsize>(n));
  if (static_cast<std::size_t>(in.gcount()) != n) throw LoadError(std::string("truncated tensor record (") + what + ")");
}

}  // namespace

void encode_tensor(std::ostream& out, const Tensor& t, DType dtype) {
  if (t.rank() > 255) throw DimensionError("tensor rank exceeds 255");
  std::string buf(kMagic.begin(), kMagic.end());
  buf.push_back(static_cast<char>(dtype));
  buf.push_back(static_cast<char>(t.rank()));
  for (std::size_t d : t.shape()) {
    if (d > 0xffffffffULL) throw DimensionError("tensor dimension exceeds u32");
    put_le<std::uint32_t>(buf, static_cast<std::uint32_t>(d));
  }
  buf.reserve(buf.size() + t.size() * dtype_width(dtype));
  for (double v : t.values()) {
    switch (dtype) {
      case DType::kFloat32: put_le<std::uint32_t>(buf, std::bit_cast<std::uint32_t>(static_cast<float>(v))); break;
      case DType::kFloat64: put_le<std::uint64_t>(buf, std::bit_cast<std::uint64_t>(v)); break;
      case DType::kBool: buf.push_back(v != 0.0 ? 1 : 0); break;
    }
  }
  out.write(buf.data(), static_cast<std::streamsize>(buf.size()));
  if (!out) throw Error("failed writing tensor record");
}

std::optional<TensorRecord> decode_tensor(std::istream& in) {
  std::array<char, 4> magic{};
  in.read(magic.data(), 4);
  if (in.gcount() == 0) return std::nullopt;
  if (in.gcount() != 4 || magic != kMagic) throw LoadError("bad tensor magic (expected VCT1)");
  unsigned char head[2];
  read_exact(in, head, 2, "header");
  const auto dtype = static_cast<DType>(head[0]);
  const std::size_t width = dtype_width(dtype);
  const std::size_t rank = head[1];
  Shape shape(rank);
  for (std::size_t i = 0; i < rank; ++i) {
    unsigned char b[4];
    read_exact(in, b, 4, "shape");
    shape[i] = get_le<std::uint32_t>(b);
  }
  const std::size_t n = shape_numel(shape);
  std::vector<unsigned char> raw(n * width);
  if (!raw.empty()) read_exact(in, raw.data(), raw.size(), "values");
  std::vector<double> values(n);
  for (std::size_t i = 0; i < n; ++i) {
    const unsigned char* p = raw.data() + i * width;
    switch (dtype) {
      case DType::kFloat32: values[i] = std::bit_cast<float>(get_le<std::uint32_t>(p)); break;
      case DType::kFloat64: values[i] = std::bit_cast<double>(get_le<std::uint64_t>(p)); break;
      case DType::kBool:
        if (*p > 1) throw LoadError("bool tensor holds a value other than 0/1");
        values[i] = *p;
        break;
    }
  }
  return TensorRecord{Tensor(std::move(shape), std::move(values)), dtype};
}

void write_tensor(const std::filesystem::path& path, const Tensor& t, DType dtype) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw Error("cannot open " + path.string() + " for writing");
  encode_tensor(out, t, dtype);
}

TensorRecord read_tensor_record(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw LoadError("cannot open tensor file " + path.string());
  try {
    auto rec = decode_tensor(in);
    if (!rec) throw LoadError("empty tensor file");
    return std::move(*rec);
  } catch (const LoadError& e) {
    throw LoadError(path.string() + ": " + e.what());
  }
}

Tensor read_tensor(const std::filesystem::path& path) { return read_tensor_record(path).tensor; }

}  // namespace volcap
