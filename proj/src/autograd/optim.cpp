// Copyright 2026 The volcap Authors
// SPDX-License-Identifier: Apache-2.0

#include "volcap/autograd/optim.hpp"

#include <cmath>

#include "volcap/error.hpp"

namespace volcap::ag {
using nlohmann::json;

void TrainConfig::validate() const {
  if (epochs == 0) throw ConfigError("train config: epochs must be positive");
  if (batch_size == 0) throw ConfigError("train config: batch_size must be positive");
  if (learning_rate < 0.0 || !std::isfinite(learning_rate)) throw ConfigError("train config: learning_rate must be >= 0");
  if (weight_decay < 0.0) throw ConfigError("train config: weight_decay must be >= 0");
  if (momentum < 0.0 || momentum >= 1.0) throw ConfigError("train config: momentum must be in [0, 1)");
}

TrainConfig TrainConfig::from_json(const json& j) {
  TrainConfig c;
  try {
    c.epochs = j.value("epochs", c.epochs);
    c.batch_size = j.value("batch_size", c.batch_size);
    c.learning_rate = j.value("learning_rate", c.learning_rate);
    c.weight_decay = j.value("weight_decay", c.weight_decay);
    c.seed = j.value("seed", c.seed);
    c.momentum = j.value("momentum", c.momentum);
    const std::string opt = j.value("optimizer", std::string("adam-family"));
    if (opt == "adam-family" || opt == "adamw" || opt == "adam") c.optimizer = OptimizerKind::kAdamW;
    else if (opt == "sgd-momentum" || opt == "sgd") c.optimizer = OptimizerKind::kSgdMomentum;
    else throw ConfigError("train config: unknown optimizer '" + opt + "'");
    const std::string sched = j.value("lr_schedule", std::string("cosine"));
    if (sched == "cosine") c.lr_schedule = LrSchedule::kCosine;
    else if (sched == "constant") c.lr_schedule = LrSchedule::kConstant;
    else throw ConfigError("train config: unknown lr_schedule '" + sched + "'");
  } catch (const json::exception& e) {
    throw ConfigError(std::string("train config: ") + e.what());
  }
  c.validate();
  return c;
}

json TrainConfig::to_json() const {
  return {{"epochs", epochs},
          {"batch_size", batch_size},
          {"learning_rate", learning_rate},
          {"weight_decay", weight_decay},
          {"seed", seed},
          {"momentum", momentum},
          {"optimizer", optimizer == OptimizerKind::kAdamW ? "adam-family" : "sgd-momentum"},
          {"lr_schedule", lr_schedule == LrSchedule::kCosine ? "cosine" : "constant"}};
}

double scheduled_lr(const TrainConfig& cfg, std::size_t step, std::size_t total_steps) {
  if (cfg.lr_schedule == LrSchedule::kConstant || total_steps <= 1) return cfg.learning_rate;
  const double frac = static_cast<double>(step) / static_cast<double>(total_steps);
  return cfg.learning_rate * 0.5 * (1.0 + std::cos(M_PI * frac));
}

Optimizer::Optimizer(std::vector<Var> params, const TrainConfig& cfg) : params_(std::move(params)), cfg_(cfg) {
  for (const auto& p : params_) {
    m_.emplace_back(p.shape(), 0.0);
    v_.emplace_back(p.shape(), 0.0);
  }
}

void Optimizer::zero_grad() {
  for (auto& p : params_) p.zero_grad();
}

void Optimizer::step(double lr) {
  ++t_;
  constexpr double kBeta1 = 0.9, kBeta2 = 0.999, kEps = 1e-8;
  const double bc1 = 1.0 - std::pow(kBeta1, static_cast<double>(t_));
  const double bc2 = 1.0 - std::pow(kBeta2, static_cast<double>(t_));
  for (std::size_t i = 0; i < params_.size(); ++i) {
    Tensor& w = params_[i].mutable_value();
    const Tensor& g = params_[i].grad();
    Tensor& m = m_[i];
    Tensor& v = v_[i];
    if (cfg_.optimizer == OptimizerKind::kAdamW) {
      for (std::size_t k = 0; k < w.size(); ++k) {
        m[k] = kBeta1 * m[k] + (1.0 - kBeta1) * g[k];
        v[k] = kBeta2 * v[k] + (1.0 - kBeta2) * g[k] * g[k];
        w[k] -= lr * (cfg_.weight_decay * w[k] + (m[k] / bc1) / (std::sqrt(v[k] / bc2) + kEps));
      }
    } else {
      for (std::size_t k = 0; k < w.size(); ++k) {
        m[k] = cfg_.momentum * m[k] + g[k] + cfg_.weight_decay * w[k];
        w[k] -= lr * m[k];
      }
    }
  }
}

}  // namespace volcap::ag
