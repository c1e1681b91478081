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

// Independent reference implementations used only by tests: naive nested-loop
// convolutions over an explicitly zero-padded buffer, a brute-force pairwise
// ROC-AUC, and small helpers. These deliberately avoid the library's layer
// code paths; they share only the Tensor container.
//
// Accumulation per output element is bias first, then ascending input
// channel, then ascending kernel offsets, matching the documented canonical
// order of the library convolutions so 64-bit results are bit-identical.

#include <cstddef>
#include <vector>

#include "avfg/tensor.hpp"

namespace avfg_test {

/// Naive conv1d reference. x (N,C,T), w (OC,C,K), b (OC).
inline avfg::Tensor<double> conv1d_ref(const avfg::Tensor<double>& x,
                                       const avfg::Tensor<double>& w,
                                       const avfg::Tensor<double>& b, std::size_t stride,
                                       std::size_t pad) {
  const std::size_t n = x.shape()[0], c = x.shape()[1], t = x.shape()[2];
  const std::size_t oc = w.shape()[0], k = w.shape()[2];
  const std::size_t tp = t + 2 * pad;
  const std::size_t to = (tp - k) / stride + 1;
  // explicit zero-padded copy
  std::vector<double> xp(n * c * tp, 0.0);
  for (std::size_t ni = 0; ni < n; ++ni)
    for (std::size_t ci = 0; ci < c; ++ci)
      for (std::size_t ti = 0; ti < t; ++ti)
        xp[(ni * c + ci) * tp + ti + pad] = x[(ni * c + ci) * t + ti];
  avfg::Tensor<double> out = avfg::Tensor<double>::zeros({n, oc, to});
  for (std::size_t ni = 0; ni < n; ++ni)
    for (std::size_t o = 0; o < oc; ++o)
      for (std::size_t ot = 0; ot < to; ++ot) {
        double acc = b[o];
        for (std::size_t ci = 0; ci < c; ++ci)
          for (std::size_t kk = 0; kk < k; ++kk)
            acc += xp[(ni * c + ci) * tp + ot * stride + kk] *
                   w[(o * c + ci) * k + kk];
        out[(ni * oc + o) * to + ot] = acc;
      }
  return out;
}

/// Naive conv3d reference. x (N,C,T,H,W), w (OC,C,KT,KH,KW), b (OC).
inline avfg::Tensor<double> conv3d_ref(const avfg::Tensor<double>& x,
                                       const avfg::Tensor<double>& w,
                                       const avfg::Tensor<double>& b, std::size_t st,
                                       std::size_t sh, std::size_t sw, std::size_t pt,
                                       std::size_t ph, std::size_t pw) {
  const std::size_t n = x.shape()[0], c = x.shape()[1];
  const std::size_t t = x.shape()[2], h = x.shape()[3], wd = x.shape()[4];
  const std::size_t oc = w.shape()[0];
  const std::size_t kt = w.shape()[2], kh = w.shape()[3], kw = w.shape()[4];
  const std::size_t tp = t + 2 * pt, hp = h + 2 * ph, wp = wd + 2 * pw;
  const std::size_t to = (tp - kt) / st + 1, ho = (hp - kh) / sh + 1,
                    wo = (wp - kw) / sw + 1;
  std::vector<double> xp(n * c * tp * hp * wp, 0.0);
  for (std::size_t ni = 0; ni < n; ++ni)
    for (std::size_t ci = 0; ci < c; ++ci)
      for (std::size_t ti = 0; ti < t; ++ti)
        for (std::size_t hi = 0; hi < h; ++hi)
          for (std::size_t wi = 0; wi < wd; ++wi)
            xp[(((ni * c + ci) * tp + ti + pt) * hp + hi + ph) * wp + wi + pw] =
                x[(((ni * c + ci) * t + ti) * h + hi) * wd + wi];
  avfg::Tensor<double> out = avfg::Tensor<double>::zeros({n, oc, to, ho, wo});
  for (std::size_t ni = 0; ni < n; ++ni)
    for (std::size_t o = 0; o < oc; ++o)
      for (std::size_t ot = 0; ot < to; ++ot)
        for (std::size_t oh = 0; oh < ho; ++oh)
          for (std::size_t ow = 0; ow < wo; ++ow) {
            double acc = b[o];
            for (std::size_t ci = 0; ci < c; ++ci)
              for (std::size_t a = 0; a < kt; ++a)
                for (std::size_t bb = 0; bb < kh; ++bb)
                  for (std::size_t d = 0; d < kw; ++d)
                    acc += xp[(((ni * c + ci) * tp + ot * st + a) * hp + oh * sh + bb) *
                                  wp +
                              ow * sw + d] *
                           w[(((o * c + ci) * kt + a) * kh + bb) * kw + d];
            out[(((ni * oc + o) * to + ot) * ho + oh) * wo + ow] = acc;
          }
  return out;
}

/// O(n^2) pairwise ROC-AUC: a positive beats a negative for 1, ties 0.5.
inline double auc_pairwise(const std::vector<double>& scores,
                           const std::vector<int>& labels) {
  double wins = 0.0;
  std::size_t n_pos = 0, n_neg = 0;
  for (std::size_t i = 0; i < scores.size(); ++i) {
    if (labels[i] != 1) continue;
    ++n_pos;
    for (std::size_t j = 0; j < scores.size(); ++j) {
      if (labels[j] == 1) continue;
      if (scores[i] > scores[j])
        wins += 1.0;
      else if (scores[i] == scores[j])
        wins += 0.5;
    }
  }
  for (int l : labels)
    if (l != 1) ++n_neg;
  return wins / (static_cast<double>(n_pos) * static_cast<double>(n_neg));
}

}  // namespace avfg_test
