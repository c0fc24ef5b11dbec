// Copyright 2026 The volcap Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "json.hpp"
#include "volcap/autograd/var.hpp"

namespace volcap::ag {

enum class OptimizerKind { kSgdMomentum, kAdamW };
enum class LrSchedule { kConstant, kCosine };

/// Optimization settings shared by the brain and caption trainers. The seed
/// drives initialization and shuffling.
struct TrainConfig {
  std::size_t epochs = 100;
  std::size_t batch_size = 16;
  double learning_rate = 1e-4;
  double weight_decay = 1e-2;
  std::uint64_t seed = 0;
  OptimizerKind optimizer = OptimizerKind::kAdamW;
  LrSchedule lr_schedule = LrSchedule::kCosine;
  double momentum = 0.9;  // sgd-momentum only

  void validate() const;
  static TrainConfig from_json(const nlohmann::json& j);
  nlohmann::json to_json() const;
};

/// Learning rate at `step` of `total_steps`.
double scheduled_lr(const TrainConfig& cfg, std::size_t step, std::size_t total_steps);

/// SGD with momentum (L2 folded into the gradient) or AdamW (decoupled decay).
class Optimizer {
 public:
  Optimizer(std::vector<Var> params, const TrainConfig& cfg);
  void step(double lr);
  void zero_grad();
  const std::vector<Var>& params() const { return params_; }

 private:
  std::vector<Var> params_;
  TrainConfig cfg_;
  std::vector<Tensor> m_;
  std::vector<Tensor> v_;
  std::size_t t_ = 0;
};

}  // namespace volcap::ag
