// Copyright 2026 The volcap Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <filesystem>
#include <memory>
#include <string>
#include <vector>

#include "volcap/autograd/optim.hpp"
#include "volcap/brain/mapper.hpp"
#include "volcap/brain/ridge.hpp"

namespace volcap::brain {

struct TrainHistory {
  /// Sample-weighted mean of the per-batch MSE, one entry per epoch. Batches
  /// are scored in training mode before their update.
  std::vector<double> epoch_loss;
};

/// Minibatch MSE training. `inputs` has samples on axis 0; `targets` is [N, E].
/// A non-finite loss aborts with NumericError naming the epoch, batch and lr.
TrainHistory train_mapper(Mapper& mapper, const Tensor& inputs, const Tensor& targets, const ag::TrainConfig& cfg);

/// Replaces batch-norm running stats with the average over one pass of `inputs`.
void recalibrate_norms(ConvMapper& mapper, const Tensor& inputs, std::size_t batch_size);

/// Inference mode: frozen normalization, no graph.
Tensor predict_batch(Mapper& mapper, const Tensor& inputs, std::size_t batch_size = 16);
std::vector<double> predict_embedding(Mapper& mapper, const Tensor& sample);

/// Copies the listed slices along axis 0, in order.
Tensor take_rows(const Tensor& t, const std::vector<std::size_t>& rows);

/// Either a closed-form ridge model or a trained mapper, as stored on disk.
class BrainModel {
 public:
  BrainModel() = default;
  explicit BrainModel(RidgeModel ridge);
  explicit BrainModel(std::unique_ptr<Mapper> mapper);

  /// "ridge", "linear", "shallow" or "wide".
  std::string kind() const;
  bool is_ridge() const { return !mapper_; }
  std::size_t output_dim() const;
  /// Per-sample input shape: (V) for flat models, (W, D, H) for conv models.
  Shape input_shape() const;
  bool volumetric() const { return input_shape().size() == 3; }
  std::size_t parameter_count() const;

  Tensor predict(const Tensor& inputs) const;
  std::vector<double> predict_one(const Tensor& sample) const;

  const RidgeModel& ridge() const { return ridge_; }
  Mapper* mapper() const { return mapper_.get(); }

 private:
  RidgeModel ridge_;
  std::unique_ptr<Mapper> mapper_;
};

/// Directory with config.json plus one tensor file per parameter or buffer.
void save_brain_model(const BrainModel& model, const std::filesystem::path& dir);
BrainModel load_brain_model(const std::filesystem::path& dir);

}  // namespace volcap::brain
