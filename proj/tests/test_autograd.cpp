// Copyright 2026 The volcap Authors
// SPDX-License-Identifier: Apache-2.0

#include <cmath>

#include "doctest.h"
#include "support/gradcheck.hpp"
#include "volcap/autograd/layers.hpp"
#include "volcap/autograd/optim.hpp"

using namespace volcap;
using namespace volcap::ag;

namespace {

Tensor randn(Shape s, Rng& rng, double sd = 1.0) {
  Tensor t(std::move(s));
  for (double& v : t.values()) v = rng.normal() * sd;
  return t;
}

}  // namespace

TEST_CASE("matmul, bias, gelu, layer norm and softmax agree with finite differences") {
  Rng rng(1);
  Var a = parameter(randn({3, 4}, rng));
  Var b = parameter(randn({4, 5}, rng));
  Var bias = parameter(randn({5}, rng));
  Var gamma = parameter(randn({5}, rng));
  Var beta = parameter(randn({5}, rng));
  Tensor target = randn({5, 5}, rng);
  std::vector<NamedParam> ps{{"a", a}, {"b", b}, {"bias", bias}, {"gamma", gamma}, {"beta", beta}};
  auto loss = [&] {
    Var h = gelu(add_bias(matmul(a, b), bias));
    Var n = layer_norm(h, gamma, beta);
    Var att = softmax_rows(matmul(transpose(n), n), true);
    return mse_loss(att, target);
  };
  auto res = testing::grad_check(ps, loss);
  CHECK(res.max_rel_error < 1e-5);
}

TEST_CASE("embedding, concat, slicing and cross entropy agree with finite differences") {
  Rng rng(2);
  Var table = parameter(randn({6, 4}, rng));
  Var extra = parameter(randn({2, 4}, rng));
  Var w = parameter(randn({4, 6}, rng));
  const std::vector<int> ids{1, 3, 3, 5};
  const std::vector<int> targets{2, 0, 4};
  std::vector<NamedParam> ps{{"table", table}, {"extra", extra}, {"w", w}};
  auto loss = [&] {
    Var x = concat_rows({extra, embedding(table, ids)});
    Var y = concat_cols({slice_cols(x, 0, 2), slice_cols(x, 2, 2)});
    return cross_entropy(matmul(slice_rows(y, 2, 3), w), targets);
  };
  CHECK(testing::grad_check(ps, loss).max_rel_error < 1e-5);
}

TEST_CASE("conv3d, batch norm, pooling agree with finite differences") {
  Rng rng(3);
  Conv3d conv(2, 3, 3, 2, 1, rng);
  BatchNorm bn(3);
  Var x = parameter(randn({2, 2, 5, 4, 6}, rng));
  Tensor target = randn({2, 3}, rng);
  std::vector<NamedParam> ps = conv.named_parameters();
  bn.visit_parameters("bn", ps);
  ps.push_back({"x", x});
  auto loss = [&] {
    Var h = relu(bn.forward(conv.forward(x)));
    return mse_loss(global_avg_pool(max_pool3d(h, 3, 2, 1)), target);
  };
  auto res = testing::grad_check(ps, loss);
  CHECK_MESSAGE(res.max_rel_error < 1e-5, res.worst_param, "[", res.worst_index, "] abs ", res.max_abs_error);
}

TEST_CASE("batch norm inference mode uses running statistics") {
  BatchNorm bn(1);
  bn.norm_state().running_mean = Tensor({1}, 2.0);
  bn.norm_state().running_var = Tensor({1}, 4.0);
  bn.set_training(false);
  Var y = bn.forward(constant(Tensor({1, 1, 2}, std::vector<double>{2.0, 4.0})));
  CHECK(y.value()[0] == doctest::Approx(0.0));
  CHECK(y.value()[1] == doctest::Approx(2.0 / std::sqrt(4.0 + 1e-5)));
}

TEST_CASE("gradients accumulate across a shared parameter") {
  Var w = parameter(Tensor::vector({3.0}));
  Var loss = sum(add(mul(w, w), w));  // w^2 + w
  backward(loss);
  CHECK(w.grad()[0] == doctest::Approx(7.0));
}

TEST_CASE("no-grad mode records nothing") {
  Var w = parameter(Tensor::vector({1.0, 2.0}));
  NoGradGuard guard;
  Var y = scale(w, 2.0);
  CHECK_FALSE(y.requires_grad());
}

TEST_CASE("adamw with zero learning rate leaves parameters untouched") {
  Var w = parameter(Tensor::vector({1.0, -2.0}));
  TrainConfig cfg;
  cfg.weight_decay = 0.5;
  Optimizer opt({w}, cfg);
  backward(sum(mul(w, w)));
  opt.step(0.0);
  CHECK(w.value()[0] == 1.0);
  CHECK(w.value()[1] == -2.0);
}

TEST_CASE("cosine schedule decays from the base rate") {
  TrainConfig cfg;
  cfg.learning_rate = 1.0;
  CHECK(scheduled_lr(cfg, 0, 10) == doctest::Approx(1.0));
  CHECK(scheduled_lr(cfg, 5, 10) == doctest::Approx(0.5));
  cfg.lr_schedule = LrSchedule::kConstant;
  CHECK(scheduled_lr(cfg, 5, 10) == 1.0);
}
