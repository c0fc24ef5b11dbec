// Copyright 2026 The volcap Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstddef>
#include <filesystem>
#include <map>
#include <string>
#include <vector>

#include "volcap/autograd/var.hpp"

namespace volcap::ag {

struct NamedParam {
  std::string name;
  Var var;
};

struct NamedBuffer {
  std::string name;
  Tensor* tensor;
};

/// Base for anything holding trainable parameters. Composite modules forward
/// the visit calls to their children with a dotted name prefix, which gives
/// each parameter a stable checkpoint name.
class Module {
 public:
  virtual ~Module() = default;

  virtual void visit_parameters(const std::string& prefix, std::vector<NamedParam>& out) const = 0;
  virtual void visit_buffers(const std::string& /*prefix*/, std::vector<NamedBuffer>& /*out*/) {}
  virtual void set_training(bool training) { training_ = training; }
  bool training() const { return training_; }

  std::vector<NamedParam> named_parameters() const;
  std::vector<Var> parameters() const;
  std::size_t parameter_count() const;
  void zero_grad();

  /// Parameters and buffers by name.
  std::map<std::string, Tensor> state() const;
  /// Copies values in; every parameter and buffer must be present with the
  /// same shape.
  void load_state(const std::map<std::string, Tensor>& state);

 protected:
  bool training_ = true;
};

/// One VCT1 file per parameter/buffer: <dir>/<name>.vct
void save_state(const Module& module, const std::filesystem::path& dir);
void load_state(Module& module, const std::filesystem::path& dir);

inline std::string join_name(const std::string& prefix, const std::string& name) {
  return prefix.empty() ? name : prefix + "." + name;
}

}  // namespace volcap::ag
