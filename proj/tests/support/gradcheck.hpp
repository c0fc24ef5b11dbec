// Copyright 2026 The volcap Authors
// SPDX-License-Identifier: Apache-2.0

// Central finite-difference oracle for test code. It perturbs parameter values
// directly and re-evaluates the loss with grad recording off, so it never
// touches the backward closures it is checking.

#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <functional>
#include <string>
#include <vector>

#include "volcap/autograd/module.hpp"
#include "volcap/autograd/var.hpp"

namespace volcap::testing {

struct GradCheckResult {
  double max_rel_error = 0.0;
  double max_abs_error = 0.0;
  std::string worst_param;
  std::size_t worst_index = 0;
  std::size_t checked = 0;
  std::size_t kink_retries = 0;      // components whose first stencil crossed a kink
  std::size_t unresolved_kinks = 0;  // still crossing one at min_h
};

/// rel = |analytic - numeric| / max(|analytic|, |numeric|, floor). The floor
/// keeps components whose true value is below the finite-difference noise
/// (~ eps * |loss| / h) from dominating; below it the check is absolute.
struct FdOptions {
  double h = 1e-6;
  double floor = 1e-4;
  /// 2: (f(h) - f(-h)) / 2h. 4: adds the points at +-2h and cancels the h^2
  /// truncation term (one Richardson step).
  int stencil = 2;
  /// Compare the relu / max-pool branch digest at every stencil point with
  /// the one at x; on a mismatch the stencil straddles a kink, where a
  /// difference quotient is not a derivative, so h is halved and the
  /// component redone.
  bool avoid_kinks = false;
  double min_h = 1e-9;
};

namespace detail {

struct Eval {
  double value;
  std::uint64_t digest;
};

inline Eval traced(const std::function<double()>& eval) {
  ag::BranchTrace trace;
  const double v = eval();
  return {v, trace.digest()};
}

inline void check_params(const std::vector<ag::NamedParam>& params, const std::vector<Tensor>& analytic,
                         const std::function<double()>& eval, const FdOptions& opt, GradCheckResult& res) {
  const std::uint64_t base = opt.avoid_kinks ? traced(eval).digest : 0;
  for (std::size_t pi = 0; pi < params.size(); ++pi) {
    ag::Var v = params[pi].var;
    Tensor& w = v.mutable_value();
    for (std::size_t i = 0; i < w.size(); ++i) {
      const double orig = w[i];
      auto at = [&](double d) {
        w[i] = orig + d;
        const Eval e = traced(eval);
        w[i] = orig;
        return e;
      };
      auto stencil = [&](double h, bool& kinked) {
        const double offsets[4] = {h, -h, 2.0 * h, -2.0 * h};
        double f[4] = {0.0, 0.0, 0.0, 0.0};
        kinked = false;
        for (int k = 0; k < (opt.stencil == 4 ? 4 : 2); ++k) {
          const Eval e = at(offsets[k]);
          f[k] = e.value;
          kinked = kinked || (opt.avoid_kinks && e.digest != base);
        }
        const double d1 = f[0] - f[1];
        return opt.stencil == 4 ? (8.0 * d1 - (f[2] - f[3])) / (12.0 * h) : d1 / (2.0 * h);
      };
      double h = opt.h;
      bool kinked = false;
      double numeric = stencil(h, kinked);
      if (kinked) {
        ++res.kink_retries;
        while (kinked && h / 2.0 >= opt.min_h) {
          h /= 2.0;
          numeric = stencil(h, kinked);
        }
        if (kinked) ++res.unresolved_kinks;
      }
      const double a = analytic[pi][i];
      const double abs_err = std::abs(a - numeric);
      const double rel = abs_err / std::max({std::abs(a), std::abs(numeric), opt.floor});
      res.max_abs_error = std::max(res.max_abs_error, abs_err);
      if (rel > res.max_rel_error) {
        res.max_rel_error = rel;
        res.worst_param = params[pi].name;
        res.worst_index = i;
      }
      ++res.checked;
    }
  }
}

inline std::vector<Tensor> analytic_grads(const std::vector<ag::NamedParam>& params,
                                          const std::function<ag::Var()>& loss_fn) {
  for (const auto& p : params) const_cast<ag::Var&>(p.var).zero_grad();
  ag::backward(loss_fn());
  std::vector<Tensor> out;
  for (const auto& p : params) out.push_back(p.var.grad());
  return out;
}

}  // namespace detail

inline GradCheckResult grad_check(const std::vector<ag::NamedParam>& params, const std::function<ag::Var()>& loss_fn,
                                  const FdOptions& opt = {}) {
  const auto analytic = detail::analytic_grads(params, loss_fn);
  GradCheckResult res;
  ag::NoGradGuard guard;
  detail::check_params(params, analytic, [&] { return loss_fn().item(); }, opt, res);
  return res;
}

/// The same oracle for a layered function f = loss(stage_{S-1}(... stage_0(x))).
/// `run(h, first, last)` applies stages [first, last) and `stage_params[s]`
/// lists the parameters stage s reads. Perturbing a parameter of stage s
/// leaves the input of stage s unchanged, so that input is computed once and
/// every difference quotient still evaluates the full composite exactly.
inline GradCheckResult grad_check_staged(const std::vector<std::vector<ag::NamedParam>>& stage_params,
                                         const ag::Var& input,
                                         const std::function<ag::Var(const ag::Var&, std::size_t, std::size_t)>& run,
                                         const std::function<ag::Var(const ag::Var&)>& loss,
                                         const FdOptions& opt = {}) {
  const std::size_t n_stages = stage_params.size();
  std::vector<ag::NamedParam> all;
  for (const auto& ps : stage_params) all.insert(all.end(), ps.begin(), ps.end());
  const auto analytic = detail::analytic_grads(all, [&] { return loss(run(input, 0, n_stages)); });

  GradCheckResult res;
  ag::NoGradGuard guard;
  ag::Var act = input;
  std::size_t offset = 0;
  for (std::size_t s = 0; s < n_stages; ++s) {
    const auto& ps = stage_params[s];
    const std::vector<Tensor> stage_grads(analytic.begin() + static_cast<std::ptrdiff_t>(offset),
                                          analytic.begin() + static_cast<std::ptrdiff_t>(offset + ps.size()));
    detail::check_params(ps, stage_grads, [&] { return loss(run(act, s, n_stages)).item(); }, opt, res);
    offset += ps.size();
    act = run(act, s, s + 1);
  }
  return res;
}

}  // namespace volcap::testing
