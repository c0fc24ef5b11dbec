// Copyright 2026 The volcap Authors
// SPDX-License-Identifier: Apache-2.0

#include "volcap/brain/train.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numeric>
#include <sstream>

#include "json.hpp"
#include "volcap/error.hpp"

namespace volcap::brain {

using nlohmann::json;

Tensor take_rows(const Tensor& t, const std::vector<std::size_t>& rows) {
  Shape s = t.shape();
  const std::size_t stride = t.dim(0) == 0 ? 0 : t.size() / t.dim(0);
  s[0] = rows.size();
  Tensor out(s);
  for (std::size_t i = 0; i < rows.size(); ++i) {
    const double* src = t.data() + rows[i] * stride;
    std::copy(src, src + stride, out.data() + i * stride);
  }
  return out;
}

namespace {

void check_pair(const Mapper& mapper, const Tensor& inputs, const Tensor& targets) {
  if (inputs.rank() == 0 || inputs.dim(0) == 0) throw DataError("train_mapper: no training samples");
  if (targets.rank() != 2 || targets.dim(0) != inputs.dim(0)) {
    throw DimensionError("train_mapper: targets " + shape_str(targets.shape()) + " do not align with inputs " +
                         shape_str(inputs.shape()));
  }
  if (targets.dim(1) != mapper.output_dim()) {
    throw DimensionError("train_mapper: target dim " + std::to_string(targets.dim(1)) + " != mapper output dim " +
                         std::to_string(mapper.output_dim()));
  }
}

std::string format_lr(double lr) {
  std::ostringstream os;
  os << lr;
  return os.str();
}

}  // namespace

TrainHistory train_mapper(Mapper& mapper, const Tensor& inputs, const Tensor& targets, const ag::TrainConfig& cfg) {
  cfg.validate();
  check_pair(mapper, inputs, targets);
  const std::size_t n = inputs.dim(0);
  const std::size_t bs = std::min(cfg.batch_size, n);
  const std::size_t batches = (n + bs - 1) / bs;
  const std::size_t total = cfg.epochs * batches;

  mapper.set_training(true);
  ag::Optimizer opt(mapper.parameters(), cfg);
  Rng rng(cfg.seed);
  std::vector<std::size_t> order(n);
  TrainHistory hist;
  std::size_t step = 0;
  for (std::size_t epoch = 0; epoch < cfg.epochs; ++epoch) {
    std::iota(order.begin(), order.end(), std::size_t{0});
    rng.shuffle(order);
    double epoch_sum = 0.0;
    for (std::size_t b = 0; b < batches; ++b) {
      const std::size_t lo = b * bs, hi = std::min(n, lo + bs);
      const std::vector<std::size_t> rows(order.begin() + static_cast<std::ptrdiff_t>(lo),
                                          order.begin() + static_cast<std::ptrdiff_t>(hi));
      const double lr = ag::scheduled_lr(cfg, step, total);
      opt.zero_grad();
      ag::Var loss = ag::mse_loss(mapper.forward(take_rows(inputs, rows)), take_rows(targets, rows));
      const double value = loss.item();
      if (!std::isfinite(value)) {
        throw NumericError("non-finite training loss at epoch " + std::to_string(epoch) + ", batch " +
                           std::to_string(b) + " (learning rate " + format_lr(lr) + ")");
      }
      ag::backward(loss);
      opt.step(lr);
      epoch_sum += value * static_cast<double>(hi - lo);
      ++step;
    }
    hist.epoch_loss.push_back(epoch_sum / static_cast<double>(n));
  }
  mapper.set_training(false);
  return hist;
}

void recalibrate_norms(ConvMapper& mapper, const Tensor& inputs, std::size_t batch_size) {
  if (inputs.dim(0) == 0) return;
  ag::NoGradGuard guard;
  auto norms = mapper.norms();
  for (auto* bn : norms) {
    bn->norm_state().cumulative = true;
    bn->norm_state().batches_seen = 0;
  }
  mapper.set_training(true);
  const std::size_t n = inputs.dim(0), bs = std::max<std::size_t>(1, std::min(batch_size, n));
  for (std::size_t lo = 0; lo < n; lo += bs) {
    std::vector<std::size_t> rows;
    for (std::size_t i = lo; i < std::min(n, lo + bs); ++i) rows.push_back(i);
    mapper.forward(take_rows(inputs, rows));
  }
  for (auto* bn : norms) bn->norm_state().cumulative = false;
  mapper.set_training(false);
}

Tensor predict_batch(Mapper& mapper, const Tensor& inputs, std::size_t batch_size) {
  ag::NoGradGuard guard;
  const bool was_training = mapper.training();
  mapper.set_training(false);
  const std::size_t n = inputs.dim(0), e = mapper.output_dim();
  const std::size_t bs = std::max<std::size_t>(1, batch_size);
  Tensor out({n, e});
  for (std::size_t lo = 0; lo < n; lo += bs) {
    std::vector<std::size_t> rows;
    for (std::size_t i = lo; i < std::min(n, lo + bs); ++i) rows.push_back(i);
    const ag::Var y = mapper.forward(take_rows(inputs, rows));
    std::copy(y.value().data(), y.value().data() + y.value().size(), out.data() + lo * e);
  }
  mapper.set_training(was_training);
  return out;
}

std::vector<double> predict_embedding(Mapper& mapper, const Tensor& sample) {
  if (sample.shape() != mapper.input_shape()) {
    throw DimensionError("predict_embedding: input shape " + shape_str(sample.shape()) + " != model input shape " +
                         shape_str(mapper.input_shape()));
  }
  Shape s{1};
  s.insert(s.end(), sample.shape().begin(), sample.shape().end());
  return predict_batch(mapper, sample.reshaped(s), 1).values();
}

BrainModel::BrainModel(RidgeModel ridge) : ridge_(std::move(ridge)) {}
BrainModel::BrainModel(std::unique_ptr<Mapper> mapper) : mapper_(std::move(mapper)) {}

std::string BrainModel::kind() const { return mapper_ ? mapper_->kind() : "ridge"; }

std::size_t BrainModel::output_dim() const { return mapper_ ? mapper_->output_dim() : ridge_.output_dim(); }

Shape BrainModel::input_shape() const { return mapper_ ? mapper_->input_shape() : Shape{ridge_.input_dim()}; }

std::size_t BrainModel::parameter_count() const {
  return mapper_ ? mapper_->parameter_count() : ridge_.weights.size() + ridge_.bias.size();
}

Tensor BrainModel::predict(const Tensor& inputs) const {
  if (mapper_) return predict_batch(*mapper_, inputs);
  return ridge_predict(ridge_, inputs);
}

std::vector<double> BrainModel::predict_one(const Tensor& sample) const {
  if (mapper_) return predict_embedding(*mapper_, sample);
  return ridge_predict(ridge_, sample.span());
}

void save_brain_model(const BrainModel& model, const std::filesystem::path& dir) {
  std::filesystem::create_directories(dir);
  json cfg{{"mapper", model.kind()}, {"output_dim", model.output_dim()}, {"input_shape", model.input_shape()}};
  if (model.is_ridge()) {
    cfg["lambda"] = model.ridge().lambda;
    save_ridge(model.ridge(), dir);
  } else {
    cfg["config"] = model.mapper()->config_json();
    cfg["parameter_count"] = model.mapper()->parameter_count();
    ag::save_state(*model.mapper(), dir / "state");
  }
  std::ofstream(dir / "config.json") << cfg.dump(2) << "\n";
}

BrainModel load_brain_model(const std::filesystem::path& dir) {
  std::ifstream in(dir / "config.json");
  if (!in) throw LoadError("missing file: " + (dir / "config.json").string());
  json cfg;
  try {
    cfg = json::parse(in);
  } catch (const json::exception& e) {
    throw LoadError("unreadable brain checkpoint config: " + std::string(e.what()));
  }
  const std::string kind = cfg.value("mapper", "");
  if (kind == "ridge") return BrainModel(load_ridge(dir));
  std::unique_ptr<Mapper> mapper;
  if (kind == "linear") {
    const auto& c = cfg.at("config");
    mapper = std::make_unique<LinearMapper>(c.at("input_dim").get<std::size_t>(), c.at("output_dim").get<std::size_t>(),
                                            c.at("seed").get<std::uint64_t>());
  } else if (kind == "shallow" || kind == "wide") {
    mapper = build_conv_mapper(ConvMapperConfig::from_json(cfg.at("config")));
  } else {
    throw ValidationError("unknown brain model kind '" + kind + "' in " + (dir / "config.json").string());
  }
  ag::load_state(*mapper, dir / "state");
  mapper->set_training(false);
  return BrainModel(std::move(mapper));
}

}  // namespace volcap::brain
