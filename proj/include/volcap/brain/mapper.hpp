// Copyright 2026 The volcap Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <array>
#include <cstdint>
#include <memory>
#include <string>
#include <vector>

#include "json.hpp"
#include "volcap/autograd/layers.hpp"
#include "volcap/tensor.hpp"

namespace volcap::brain {

/// Trainable map from a batch of inputs to [N, E] embeddings.
class Mapper : public ag::Module {
 public:
  /// `batch` is [N, V] for flat mappers or [N, W, D, H] for volumetric ones.
  virtual ag::Var forward(const Tensor& batch) = 0;
  virtual std::size_t output_dim() const = 0;
  /// Shape of a single input sample.
  virtual Shape input_shape() const = 0;
  virtual std::string kind() const = 0;
  virtual nlohmann::json config_json() const = 0;
};

/// Ridge-style affine map trained by gradient descent instead of a solver.
class LinearMapper : public Mapper {
 public:
  LinearMapper(std::size_t input_dim, std::size_t output_dim, std::uint64_t seed);
  ag::Var forward(const Tensor& batch) override;
  std::size_t output_dim() const override { return linear_.out_features(); }
  Shape input_shape() const override { return {linear_.in_features()}; }
  std::string kind() const override { return "linear"; }
  nlohmann::json config_json() const override;
  void visit_parameters(const std::string& prefix, std::vector<ag::NamedParam>& out) const override;

 private:
  ag::Linear linear_;
  std::uint64_t seed_;
};

enum class ConvVariant { kShallow, kWide };
std::string to_string(ConvVariant v);
ConvVariant parse_conv_variant(const std::string& s);

inline constexpr std::array<std::size_t, 4> kShallowWidths{16, 32, 64, 128};
inline constexpr std::array<std::size_t, 4> kWideWidths{64, 128, 256, 512};

struct ConvMapperConfig {
  ConvVariant variant = ConvVariant::kShallow;
  std::array<std::size_t, 4> block_layout{2, 2, 2, 2};
  std::array<std::size_t, 4> widths = kShallowWidths;
  Shape input_shape{81, 104, 83};
  std::size_t output_dim = 1536;
  std::size_t stem_kernel = 7;
  std::size_t stem_stride = 2;
  std::size_t stem_padding = 3;
  bool stem_pool = true;
  /// Each spatial dim is zero-padded at the end up to a multiple of this.
  std::size_t pad_multiple = 32;
  std::uint64_t seed = 0;

  static ConvMapperConfig shallow(Shape input_shape, std::size_t output_dim);
  static ConvMapperConfig wide(Shape input_shape, std::size_t output_dim);

  Shape padded_shape() const;
  /// Spatial shape after the stem and after each stage.
  std::vector<Shape> feature_shapes() const;
  /// Throws ConfigError on an invalid layout or when a feature map vanishes.
  void validate() const;

  static ConvMapperConfig from_json(const nlohmann::json& j);
  nlohmann::json to_json() const;
};

/// The wide widths must exceed the shallow widths stage by stage.
void check_wider(const std::array<std::size_t, 4>& shallow, const std::array<std::size_t, 4>& wide);

class BasicBlock3d : public ag::Module {
 public:
  BasicBlock3d(std::size_t in, std::size_t out, std::size_t stride, Rng& rng);
  ag::Var forward(const ag::Var& x);
  void visit_parameters(const std::string& prefix, std::vector<ag::NamedParam>& out) const override;
  void visit_buffers(const std::string& prefix, std::vector<ag::NamedBuffer>& out) override;
  void set_training(bool training) override;
  std::vector<ag::BatchNorm*> norms();

 private:
  ag::Conv3d conv1_;
  ag::BatchNorm bn1_;
  ag::Conv3d conv2_;
  ag::BatchNorm bn2_;
  bool project_ = false;
  ag::Conv3d proj_;
  ag::BatchNorm proj_bn_;
};

/// 3D ResNet-18: stem, four stages of basic blocks, global average pool, affine head.
class ConvMapper : public Mapper {
 public:
  explicit ConvMapper(const ConvMapperConfig& config);
  ag::Var forward(const Tensor& batch) override;
  std::size_t output_dim() const override { return config_.output_dim; }
  Shape input_shape() const override { return config_.input_shape; }
  std::string kind() const override { return to_string(config_.variant); }
  nlohmann::json config_json() const override { return config_.to_json(); }
  const ConvMapperConfig& config() const { return config_; }

  void visit_parameters(const std::string& prefix, std::vector<ag::NamedParam>& out) const override;
  void visit_buffers(const std::string& prefix, std::vector<ag::NamedBuffer>& out) override;
  void set_training(bool training) override;
  std::vector<ag::BatchNorm*> norms();

  /// Zero-pads a [N, W, D, H] batch to [N, 1, W', D', H'].
  Tensor pad_input(const Tensor& batch) const;

  /// Layer-wise execution. Stage 0 is the stem, stages 1..B the residual
  /// blocks and the last stage pooling plus the head; forward_stages runs
  /// [first, last) on an activation produced by the stages before `first`.
  std::size_t stage_count() const { return blocks_.size() + 2; }
  ag::Var forward_stages(ag::Var h, std::size_t first, std::size_t last);
  std::vector<ag::NamedParam> stage_parameters(std::size_t stage) const;

 private:
  ConvMapperConfig config_;
  ag::Conv3d stem_;
  ag::BatchNorm stem_bn_;
  std::vector<std::unique_ptr<BasicBlock3d>> blocks_;
  ag::Linear head_;
};

std::unique_ptr<ConvMapper> build_conv_mapper(const ConvMapperConfig& config);

}  // namespace volcap::brain
