// Copyright 2026 The volcap Authors
// SPDX-License-Identifier: Apache-2.0

#include "volcap/autograd/module.hpp"

#include "volcap/error.hpp"
#include "volcap/tensor_io.hpp"

namespace volcap::ag {

std::vector<NamedParam> Module::named_parameters() const {
  std::vector<NamedParam> out;
  visit_parameters("", out);
  return out;
}

std::vector<Var> Module::parameters() const {
  std::vector<Var> out;
  for (auto& p : named_parameters()) out.push_back(p.var);
  return out;
}

std::size_t Module::parameter_count() const {
  std::size_t n = 0;
  for (const auto& p : named_parameters()) n += p.var.value().size();
  return n;
}

void Module::zero_grad() {
  for (auto& p : named_parameters()) p.var.zero_grad();
}

std::map<std::string, Tensor> Module::state() const {
  std::map<std::string, Tensor> out;
  for (const auto& p : named_parameters()) out[p.name] = p.var.value();
  std::vector<NamedBuffer> bufs;
  const_cast<Module*>(this)->visit_buffers("", bufs);
  for (const auto& b : bufs) out[b.name] = *b.tensor;
  return out;
}

void Module::load_state(const std::map<std::string, Tensor>& state) {
  auto fetch = [&](const std::string& name, const Shape& shape) -> const Tensor& {
    auto it = state.find(name);
    if (it == state.end()) throw MissingKeyError("checkpoint is missing '" + name + "'");
    if (it->second.shape() != shape) {
      throw DimensionError("checkpoint entry '" + name + "' has shape " + shape_str(it->second.shape()) + ", expected " +
                           shape_str(shape));
    }
    return it->second;
  };
  for (auto& p : named_parameters()) p.var.mutable_value() = fetch(p.name, p.var.shape());
  std::vector<NamedBuffer> bufs;
  visit_buffers("", bufs);
  for (auto& b : bufs) {
    auto it = state.find(b.name);
    if (it == state.end()) throw MissingKeyError("checkpoint is missing '" + b.name + "'");
    *b.tensor = it->second;
  }
}

void save_state(const Module& module, const std::filesystem::path& dir) {
  std::filesystem::create_directories(dir);
  for (const auto& [name, t] : module.state()) write_tensor(dir / (name + ".vct"), t);
}

void load_state(Module& module, const std::filesystem::path& dir) {
  std::map<std::string, Tensor> state;
  std::vector<NamedBuffer> bufs;
  module.visit_buffers("", bufs);
  for (const auto& p : module.named_parameters()) {
    const auto path = dir / (p.name + ".vct");
    if (!std::filesystem::exists(path)) throw MissingKeyError("checkpoint is missing '" + p.name + "' (" + path.string() + ")");
    state[p.name] = read_tensor(path);
  }
  for (const auto& b : bufs) {
    const auto path = dir / (b.name + ".vct");
    if (!std::filesystem::exists(path)) throw MissingKeyError("checkpoint is missing '" + b.name + "' (" + path.string() + ")");
    state[b.name] = read_tensor(path);
  }
  module.load_state(state);
}

}  // namespace volcap::ag
