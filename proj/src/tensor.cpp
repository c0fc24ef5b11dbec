// Copyright 2026 The volcap Authors
// SPDX-License-Identifier: Apache-2.0

#include "volcap/tensor.hpp"

#include <algorithm>
#include <cmath>
#include <functional>
#include <numeric>

#include "volcap/error.hpp"

namespace volcap {

std::size_t shape_numel(const Shape& shape) {
  return std::accumulate(shape.begin(), shape.end(), std::size_t{1}, std::multiplies<>());
}

std::string shape_str(const Shape& shape) {
  std::string s = "(";
  for (std::size_t i = 0; i < shape.size(); ++i) {
    if (i) s += ", ";
    s += std::to_string(shape[i]);
  }
  return s + ")";
}

Tensor::Tensor(Shape shape, double fill) : shape_(std::move(shape)), data_(shape_numel(shape_), fill) {}

Tensor::Tensor(Shape shape, std::vector<double> data) : shape_(std::move(shape)), data_(std::move(data)) {
  if (data_.size() != shape_numel(shape_)) {
    throw DimensionError("tensor data has " + std::to_string(data_.size()) + " values but shape " +
                         shape_str(shape_) + " needs " + std::to_string(shape_numel(shape_)));
  }
}

Tensor Tensor::vector(std::vector<double> values) {
  const std::size_t n = values.size();
  return Tensor({n}, std::move(values));
}

Tensor Tensor::matrix(std::size_t rows, std::size_t cols, std::vector<double> values) {
  return Tensor({rows, cols}, std::move(values));
}

Tensor Tensor::scalar(double value) { return Tensor(Shape{}, std::vector<double>{value}); }

std::size_t Tensor::offset(std::initializer_list<std::size_t> index) const {
  if (index.size() != shape_.size()) throw DimensionError("index rank does not match tensor rank");
  std::size_t off = 0;
  std::size_t axis = 0;
  for (std::size_t i : index) {
    if (i >= shape_[axis]) throw DimensionError("index out of range on axis " + std::to_string(axis));
    off = off * shape_[axis] + i;
    ++axis;
  }
  return off;
}

double& Tensor::at(std::initializer_list<std::size_t> index) { return data_[offset(index)]; }
double Tensor::at(std::initializer_list<std::size_t> index) const { return data_[offset(index)]; }

Tensor Tensor::reshaped(Shape shape) const {
  Tensor t = *this;
  t.reshape(std::move(shape));
  return t;
}

void Tensor::reshape(Shape shape) {
  if (shape_numel(shape) != data_.size()) {
    throw DimensionError("cannot reshape " + shape_str(shape_) + " to " + shape_str(shape));
  }
  shape_ = std::move(shape);
}

Tensor Tensor::slice0(std::size_t i) const {
  if (shape_.empty() || i >= shape_[0]) throw DimensionError("slice0 index out of range");
  Shape sub(shape_.begin() + 1, shape_.end());
  const std::size_t n = shape_numel(sub);
  return Tensor(std::move(sub), std::vector<double>(data_.begin() + static_cast<std::ptrdiff_t>(i * n),
                                                    data_.begin() + static_cast<std::ptrdiff_t>((i + 1) * n)));
}

void Tensor::fill(double v) { std::fill(data_.begin(), data_.end(), v); }

bool Tensor::all_finite() const {
  return std::all_of(data_.begin(), data_.end(), [](double v) { return std::isfinite(v); });
}

Tensor stack(std::span<const Tensor> items) {
  if (items.empty()) throw DimensionError("cannot stack an empty list");
  Shape shape = items.front().shape();
  std::vector<double> data;
  data.reserve(items.size() * items.front().size());
  for (const auto& t : items) {
    if (t.shape() != shape) throw DimensionError("stack: shape " + shape_str(t.shape()) + " != " + shape_str(shape));
    data.insert(data.end(), t.values().begin(), t.values().end());
  }
  shape.insert(shape.begin(), items.size());
  return Tensor(std::move(shape), std::move(data));
}

}  // namespace volcap
