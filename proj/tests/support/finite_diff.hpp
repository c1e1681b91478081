/* Copyright 2026 The AVFG Authors. All Rights Reserved.

Licensed under the Apache License, Version 2.0 (the "License");
you may not use this file except in compliance with the License.
You may obtain a copy of the License at

    http://www.apache.org/licenses/LICENSE-2.0

Unless required by applicable law or agreed to in writing, software
distributed under the License is distributed on an "AS IS" BASIS,
WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
See the License for the specific language governing permissions and
limitations under the License.
==============================================================================*/
#pragma once

// Central finite-difference gradient checker (test-only). The loss builder is
// invoked with a tape to obtain analytic gradients, then re-invoked tape-free
// around perturbed leaf values. Relative error uses a small denominator floor
// so near-zero gradients are compared absolutely.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <vector>

#include "avfg/rng.hpp"
#include "avfg/tensor.hpp"

namespace avfg_test {

constexpr double kFdStep = 1e-5;
constexpr double kFdTol = 1e-4;

inline double rel_err(double analytic, double numeric) {
  const double denom = std::max({std::fabs(analytic), std::fabs(numeric), 1e-3});
  return std::fabs(analytic - numeric) / denom;
}

/// Max relative error between analytic and central-difference gradients over
/// every coordinate of every leaf. `make_loss(tape)` must rebuild the graph
/// from the current leaf values and return a scalar loss tensor.
template <typename F>
double fd_max_rel_err(const std::vector<avfg::Tensor<double>*>& leaves, F&& make_loss,
                      double h = kFdStep) {
  avfg::Tape<double> tape;
  for (auto* leaf : leaves) leaf->zero_grad();
  avfg::Tensor<double> loss = make_loss(&tape);
  tape.backward(loss);
  std::vector<std::vector<double>> analytic;
  for (auto* leaf : leaves)
    analytic.emplace_back(leaf->grad(), leaf->grad() + leaf->numel());
  double worst = 0.0;
  for (std::size_t li = 0; li < leaves.size(); ++li) {
    avfg::Tensor<double>& leaf = *leaves[li];
    for (std::size_t i = 0; i < leaf.numel(); ++i) {
      const double orig = leaf[i];
      leaf[i] = orig + h;
      const double lp = make_loss(static_cast<avfg::Tape<double>*>(nullptr)).item();
      leaf[i] = orig - h;
      const double lm = make_loss(static_cast<avfg::Tape<double>*>(nullptr)).item();
      leaf[i] = orig;
      const double fd = (lp - lm) / (2.0 * h);
      worst = std::max(worst, rel_err(analytic[li][i], fd));
    }
  }
  return worst;
}

/// Same check restricted to `per_leaf` randomly chosen coordinates per leaf;
/// used for the full-model gradient audit where probing every parameter of
/// every seed would be wasteful.
template <typename F>
double fd_max_rel_err_sampled(const std::vector<avfg::Tensor<double>*>& leaves,
                              F&& make_loss, avfg::Rng& rng, std::size_t per_leaf,
                              double h = kFdStep) {
  avfg::Tape<double> tape;
  for (auto* leaf : leaves) leaf->zero_grad();
  avfg::Tensor<double> loss = make_loss(&tape);
  tape.backward(loss);
  double worst = 0.0;
  for (auto* leafp : leaves) {
    avfg::Tensor<double>& leaf = *leafp;
    std::vector<double> analytic(leaf.grad(), leaf.grad() + leaf.numel());
    const std::size_t n_probe = std::min(per_leaf, leaf.numel());
    for (std::size_t p = 0; p < n_probe; ++p) {
      const std::size_t i = static_cast<std::size_t>(
          rng.uniform_int(0, static_cast<std::int64_t>(leaf.numel()) - 1));
      const double orig = leaf[i];
      leaf[i] = orig + h;
      const double lp = make_loss(static_cast<avfg::Tape<double>*>(nullptr)).item();
      leaf[i] = orig - h;
      const double lm = make_loss(static_cast<avfg::Tape<double>*>(nullptr)).item();
      leaf[i] = orig;
      const double fd = (lp - lm) / (2.0 * h);
      worst = std::max(worst, rel_err(analytic[i], fd));
    }
  }
  return worst;
}

inline avfg::Tensor<double> random_tensor(const avfg::Shape& shape, avfg::Rng& rng,
                                          double lo = -1.0, double hi = 1.0) {
  avfg::Tensor<double> t = avfg::Tensor<double>::zeros(shape);
  for (std::size_t i = 0; i < t.numel(); ++i) t[i] = rng.uniform(lo, hi);
  return t;
}

}  // namespace avfg_test
