// Copyright 2026 The volcap Authors
// SPDX-License-Identifier: Apache-2.0

#include "volcap/brain/mapper.hpp"

#include "volcap/error.hpp"

namespace volcap::brain {

using ag::join_name;
using ag::Var;
using nlohmann::json;

LinearMapper::LinearMapper(std::size_t input_dim, std::size_t output_dim, std::uint64_t seed) : seed_(seed) {
  Rng rng(seed);
  linear_ = ag::Linear(input_dim, output_dim, rng);
}

Var LinearMapper::forward(const Tensor& batch) {
  if (batch.rank() != 2 || batch.dim(1) != linear_.in_features()) {
    throw DimensionError("linear mapper expects [N, " + std::to_string(linear_.in_features()) + "], got " +
                         shape_str(batch.shape()));
  }
  return linear_.forward(ag::constant(batch));
}

json LinearMapper::config_json() const {
  return {{"input_dim", linear_.in_features()}, {"output_dim", linear_.out_features()}, {"seed", seed_}};
}

void LinearMapper::visit_parameters(const std::string& prefix, std::vector<ag::NamedParam>& out) const {
  linear_.visit_parameters(join_name(prefix, "linear"), out);
}

std::string to_string(ConvVariant v) { return v == ConvVariant::kShallow ? "shallow" : "wide"; }

ConvVariant parse_conv_variant(const std::string& s) {
  if (s == "shallow") return ConvVariant::kShallow;
  if (s == "wide") return ConvVariant::kWide;
  throw ConfigError("unknown conv variant '" + s + "' (expected shallow or wide)");
}

ConvMapperConfig ConvMapperConfig::shallow(Shape input_shape, std::size_t output_dim) {
  ConvMapperConfig c;
  c.input_shape = std::move(input_shape);
  c.output_dim = output_dim;
  return c;
}

ConvMapperConfig ConvMapperConfig::wide(Shape input_shape, std::size_t output_dim) {
  ConvMapperConfig c = shallow(std::move(input_shape), output_dim);
  c.variant = ConvVariant::kWide;
  c.widths = kWideWidths;
  return c;
}

Shape ConvMapperConfig::padded_shape() const {
  Shape s = input_shape;
  if (pad_multiple > 1) {
    for (auto& d : s) d = (d + pad_multiple - 1) / pad_multiple * pad_multiple;
  }
  return s;
}

std::vector<Shape> ConvMapperConfig::feature_shapes() const {
  std::vector<Shape> out;
  Shape s = padded_shape();
  for (auto& d : s) {
    d = ag::conv_out_size(d, stem_kernel, stem_stride, stem_padding);
    if (stem_pool && d > 0) d = ag::conv_out_size(d, 3, 2, 1);
  }
  out.push_back(s);
  for (std::size_t stage = 0; stage < 4; ++stage) {
    if (stage > 0) {
      for (auto& d : s) d = d == 0 ? 0 : ag::conv_out_size(d, 3, 2, 1);
    }
    out.push_back(s);
  }
  return out;
}

void ConvMapperConfig::validate() const {
  std::size_t blocks = 0;
  for (auto b : block_layout) {
    if (b == 0) throw ConfigError("conv mapper: every stage needs at least one block");
    blocks += b;
  }
  if (blocks != 8) throw ConfigError("conv mapper: block layout must sum to 8 residual blocks");
  for (auto w : widths) {
    if (w == 0) throw ConfigError("conv mapper: stage widths must be positive");
  }
  if (input_shape.size() != 3) throw ConfigError("conv mapper: input shape must be (W, D, H)");
  if (output_dim == 0) throw ConfigError("conv mapper: output dim must be positive");
  if (stem_kernel == 0 || stem_stride == 0) throw ConfigError("conv mapper: invalid stem");
  if (pad_multiple == 0) throw ConfigError("conv mapper: pad_multiple must be >= 1");
  for (const auto& s : feature_shapes()) {
    for (auto d : s) {
      if (d == 0) {
        throw ConfigError("conv mapper: input shape " + shape_str(input_shape) + " (padded " +
                          shape_str(padded_shape()) + ") is too small for the downsampling chain");
      }
    }
  }
}

ConvMapperConfig ConvMapperConfig::from_json(const json& j) {
  ConvMapperConfig c;
  try {
    if (j.contains("variant")) c.variant = parse_conv_variant(j.at("variant").get<std::string>());
    c.widths = c.variant == ConvVariant::kShallow ? kShallowWidths : kWideWidths;
    if (j.contains("block_layout")) c.block_layout = j.at("block_layout").get<std::array<std::size_t, 4>>();
    if (j.contains("widths")) c.widths = j.at("widths").get<std::array<std::size_t, 4>>();
    if (j.contains("input_shape")) c.input_shape = j.at("input_shape").get<Shape>();
    if (j.contains("output_dim")) c.output_dim = j.at("output_dim").get<std::size_t>();
    if (j.contains("stem_kernel")) c.stem_kernel = j.at("stem_kernel").get<std::size_t>();
    if (j.contains("stem_stride")) c.stem_stride = j.at("stem_stride").get<std::size_t>();
    if (j.contains("stem_padding")) c.stem_padding = j.at("stem_padding").get<std::size_t>();
    if (j.contains("stem_pool")) c.stem_pool = j.at("stem_pool").get<bool>();
    if (j.contains("pad_multiple")) c.pad_multiple = j.at("pad_multiple").get<std::size_t>();
    if (j.contains("seed")) c.seed = j.at("seed").get<std::uint64_t>();
  } catch (const json::exception& e) {
    throw ConfigError(std::string("conv mapper config: ") + e.what());
  }
  c.validate();
  return c;
}

json ConvMapperConfig::to_json() const {
  return {{"variant", to_string(variant)}, {"block_layout", block_layout}, {"widths", widths},
          {"input_shape", input_shape},    {"output_dim", output_dim},     {"stem_kernel", stem_kernel},
          {"stem_stride", stem_stride},    {"stem_padding", stem_padding}, {"stem_pool", stem_pool},
          {"pad_multiple", pad_multiple},  {"seed", seed}};
}

void check_wider(const std::array<std::size_t, 4>& shallow, const std::array<std::size_t, 4>& wide) {
  for (std::size_t i = 0; i < 4; ++i) {
    if (wide[i] <= shallow[i]) {
      throw ConfigError("wide widths must exceed shallow widths at every stage (stage " + std::to_string(i + 1) + ")");
    }
  }
}

BasicBlock3d::BasicBlock3d(std::size_t in, std::size_t out, std::size_t stride, Rng& rng)
    : conv1_(in, out, 3, stride, 1, rng), bn1_(out), conv2_(out, out, 3, 1, 1, rng), bn2_(out) {
  if (stride != 1 || in != out) {
    project_ = true;
    proj_ = ag::Conv3d(in, out, 1, stride, 0, rng);
    proj_bn_ = ag::BatchNorm(out);
  }
}

Var BasicBlock3d::forward(const Var& x) {
  Var h = ag::relu(bn1_.forward(conv1_.forward(x)));
  h = bn2_.forward(conv2_.forward(h));
  Var skip = project_ ? proj_bn_.forward(proj_.forward(x)) : x;
  return ag::relu(ag::add(h, skip));
}

void BasicBlock3d::visit_parameters(const std::string& prefix, std::vector<ag::NamedParam>& out) const {
  conv1_.visit_parameters(join_name(prefix, "conv1"), out);
  bn1_.visit_parameters(join_name(prefix, "bn1"), out);
  conv2_.visit_parameters(join_name(prefix, "conv2"), out);
  bn2_.visit_parameters(join_name(prefix, "bn2"), out);
  if (project_) {
    proj_.visit_parameters(join_name(prefix, "proj"), out);
    proj_bn_.visit_parameters(join_name(prefix, "proj_bn"), out);
  }
}

void BasicBlock3d::visit_buffers(const std::string& prefix, std::vector<ag::NamedBuffer>& out) {
  bn1_.visit_buffers(join_name(prefix, "bn1"), out);
  bn2_.visit_buffers(join_name(prefix, "bn2"), out);
  if (project_) proj_bn_.visit_buffers(join_name(prefix, "proj_bn"), out);
}

void BasicBlock3d::set_training(bool training) {
  Module::set_training(training);
  for (auto* bn : norms()) bn->set_training(training);
}

std::vector<ag::BatchNorm*> BasicBlock3d::norms() {
  std::vector<ag::BatchNorm*> out{&bn1_, &bn2_};
  if (project_) out.push_back(&proj_bn_);
  return out;
}

ConvMapper::ConvMapper(const ConvMapperConfig& config) : config_(config) {
  config_.validate();
  Rng rng(config_.seed);
  const auto& w = config_.widths;
  stem_ = ag::Conv3d(1, w[0], config_.stem_kernel, config_.stem_stride, config_.stem_padding, rng);
  stem_bn_ = ag::BatchNorm(w[0]);
  std::size_t in = w[0];
  for (std::size_t stage = 0; stage < 4; ++stage) {
    for (std::size_t b = 0; b < config_.block_layout[stage]; ++b) {
      const std::size_t stride = (stage > 0 && b == 0) ? 2 : 1;
      blocks_.push_back(std::make_unique<BasicBlock3d>(in, w[stage], stride, rng));
      in = w[stage];
    }
  }
  head_ = ag::Linear(in, config_.output_dim, rng);
}

Tensor ConvMapper::pad_input(const Tensor& batch) const {
  const Shape& in = config_.input_shape;
  if (batch.rank() != 4 || batch.dim(1) != in[0] || batch.dim(2) != in[1] || batch.dim(3) != in[2]) {
    throw DimensionError("conv mapper expects [N, " + std::to_string(in[0]) + ", " + std::to_string(in[1]) + ", " +
                         std::to_string(in[2]) + "], got " + shape_str(batch.shape()));
  }
  const Shape p = config_.padded_shape();
  const std::size_t n = batch.dim(0);
  Tensor out({n, 1, p[0], p[1], p[2]}, 0.0);
  for (std::size_t s = 0; s < n; ++s) {
    for (std::size_t i = 0; i < in[0]; ++i) {
      for (std::size_t j = 0; j < in[1]; ++j) {
        const double* src = batch.data() + ((s * in[0] + i) * in[1] + j) * in[2];
        double* dst = out.data() + ((s * p[0] + i) * p[1] + j) * p[2];
        std::copy(src, src + in[2], dst);
      }
    }
  }
  return out;
}

Var ConvMapper::forward(const Tensor& batch) { return forward_stages(ag::constant(pad_input(batch)), 0, stage_count()); }

Var ConvMapper::forward_stages(Var h, std::size_t first, std::size_t last) {
  if (first > last || last > stage_count()) throw ConfigError("conv mapper: bad stage range");
  for (std::size_t s = first; s < last; ++s) {
    if (s == 0) {
      h = ag::relu(stem_bn_.forward(stem_.forward(h)));
      if (config_.stem_pool) h = ag::max_pool3d(h, 3, 2, 1);
    } else if (s <= blocks_.size()) {
      h = blocks_[s - 1]->forward(h);
    } else {
      h = head_.forward(ag::global_avg_pool(h));
    }
  }
  return h;
}

std::vector<ag::NamedParam> ConvMapper::stage_parameters(std::size_t stage) const {
  if (stage >= stage_count()) throw ConfigError("conv mapper: stage " + std::to_string(stage) + " out of range");
  std::vector<ag::NamedParam> out;
  if (stage == 0) {
    stem_.visit_parameters("stem", out);
    stem_bn_.visit_parameters("stem_bn", out);
  } else if (stage <= blocks_.size()) {
    blocks_[stage - 1]->visit_parameters("block" + std::to_string(stage - 1), out);
  } else {
    head_.visit_parameters("head", out);
  }
  return out;
}

void ConvMapper::visit_parameters(const std::string& prefix, std::vector<ag::NamedParam>& out) const {
  stem_.visit_parameters(join_name(prefix, "stem"), out);
  stem_bn_.visit_parameters(join_name(prefix, "stem_bn"), out);
  for (std::size_t i = 0; i < blocks_.size(); ++i) {
    blocks_[i]->visit_parameters(join_name(prefix, "block" + std::to_string(i)), out);
  }
  head_.visit_parameters(join_name(prefix, "head"), out);
}

void ConvMapper::visit_buffers(const std::string& prefix, std::vector<ag::NamedBuffer>& out) {
  stem_bn_.visit_buffers(join_name(prefix, "stem_bn"), out);
  for (std::size_t i = 0; i < blocks_.size(); ++i) {
    blocks_[i]->visit_buffers(join_name(prefix, "block" + std::to_string(i)), out);
  }
}

void ConvMapper::set_training(bool training) {
  Module::set_training(training);
  stem_bn_.set_training(training);
  for (auto& block : blocks_) block->set_training(training);
}

std::vector<ag::BatchNorm*> ConvMapper::norms() {
  std::vector<ag::BatchNorm*> out{&stem_bn_};
  for (auto& block : blocks_) {
    for (auto* bn : block->norms()) out.push_back(bn);
  }
  return out;
}

std::unique_ptr<ConvMapper> build_conv_mapper(const ConvMapperConfig& config) {
  return std::make_unique<ConvMapper>(config);
}

}  // namespace volcap::brain
