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

// Neural network layers over avfg::Tensor: 1-D and 3-D convolution (deep
// learning convention, i.e. cross-correlation without kernel flip), batch
// normalization, max pooling, ReLU, sigmoid, grid softmax, linear, adaptive
// average pooling, and temporal linear interpolation. Every layer registers
// an exact backward rule on the tape.
//
// Convolution accumulates per output element in a fixed canonical order
// (bias first, then input channel ascending, then kernel offsets ascending);
// the reference oracles in the test suite follow the same order so results
// compare bit-for-bit at 64-bit precision.

#include <cmath>
#include <cstddef>
#include <limits>
#include <optional>
#include <string>
#include <vector>

#include "avfg/rng.hpp"
#include "avfg/tensor.hpp"

namespace avfg {

namespace detail {

inline std::size_t conv_out_extent(std::size_t in, std::size_t pad, std::size_t k,
                                   std::size_t stride, const char* what) {
  const std::size_t padded = in + 2 * pad;
  if (padded < k)
    throw ShapeError(std::string(what) + ": kernel " + std::to_string(k) +
                     " exceeds padded extent " + std::to_string(padded));
  const std::size_t out = (padded - k) / stride + 1;
  if (out < 1) throw ShapeError(std::string(what) + ": output extent < 1");
  return out;
}

template <typename T>
inline Tensor<T> kaiming_uniform(const Shape& shape, std::size_t fan_in, Rng& rng) {
  Tensor<T> t = Tensor<T>::zeros(shape);
  const double bound = std::sqrt(6.0 / static_cast<double>(fan_in));
  for (std::size_t i = 0; i < t.numel(); ++i)
    t[i] = static_cast<T>(rng.uniform(-bound, bound));
  return t;
}

}  // namespace detail

// ---------------------------------------------------------------------------
// Conv1d: x (N, C, T) -> (N, C', T')

template <typename T>
struct Conv1d {
  std::size_t in_ch, out_ch, kernel, stride, pad;
  Tensor<T> weight;  // (out_ch, in_ch, kernel)
  Tensor<T> bias;    // (out_ch)

  Conv1d(std::size_t ic, std::size_t oc, std::size_t k, std::size_t s, std::size_t p,
         Rng& rng)
      : in_ch(ic), out_ch(oc), kernel(k), stride(s), pad(p) {
    weight = detail::kaiming_uniform<T>({oc, ic, k}, ic * k, rng);
    bias = Tensor<T>::zeros({oc});
    weight.set_requires_grad(true);
    bias.set_requires_grad(true);
  }

  Tensor<T> forward(const Tensor<T>& x, Tape<T>* tape) const {
    if (x.rank() != 3)
      throw ShapeError("conv1d expects (N,C,T), got " + shape_str(x.shape()));
    const std::size_t n = x.shape()[0], c = x.shape()[1], t_in = x.shape()[2];
    if (c != in_ch)
      throw ShapeError("conv1d channel mismatch: input " + shape_str(x.shape()) +
                       " vs spec in_ch " + std::to_string(in_ch));
    const std::size_t t_out = detail::conv_out_extent(t_in, pad, kernel, stride, "conv1d");
    Tensor<T> out = Tensor<T>::zeros({n, out_ch, t_out});
    const Tensor<T>&w = weight, &b = bias;
    for (std::size_t ni = 0; ni < n; ++ni)
      for (std::size_t oc_i = 0; oc_i < out_ch; ++oc_i)
        for (std::size_t ot = 0; ot < t_out; ++ot) {
          T acc = b[oc_i];
          const std::ptrdiff_t base =
              static_cast<std::ptrdiff_t>(ot * stride) - static_cast<std::ptrdiff_t>(pad);
          for (std::size_t ic_i = 0; ic_i < in_ch; ++ic_i)
            for (std::size_t kk = 0; kk < kernel; ++kk) {
              const std::ptrdiff_t it = base + static_cast<std::ptrdiff_t>(kk);
              if (it < 0 || it >= static_cast<std::ptrdiff_t>(t_in)) continue;
              acc += x[(ni * c + ic_i) * t_in + static_cast<std::size_t>(it)] *
                     w[(oc_i * in_ch + ic_i) * kernel + kk];
            }
          out[(ni * out_ch + oc_i) * t_out + ot] = acc;
        }
    if (detail::track(tape, {&x, &weight, &bias})) {
      out.set_requires_grad(true);
      Tensor<T> xc = x, wc = weight, bc = bias, oc2 = out;
      const std::size_t s = stride, p = pad, k = kernel, icn = in_ch, ocn = out_ch;
      tape->record(out, [xc, wc, bc, oc2, s, p, k, icn, ocn, n, c, t_in, t_out]() mutable {
        const T* g = oc2.grad();
        for (std::size_t ni = 0; ni < n; ++ni)
          for (std::size_t oc_i = 0; oc_i < ocn; ++oc_i)
            for (std::size_t ot = 0; ot < t_out; ++ot) {
              const T go = g[(ni * ocn + oc_i) * t_out + ot];
              if (bc.requires_grad()) bc.grad()[oc_i] += go;
              const std::ptrdiff_t base =
                  static_cast<std::ptrdiff_t>(ot * s) - static_cast<std::ptrdiff_t>(p);
              for (std::size_t ic_i = 0; ic_i < icn; ++ic_i)
                for (std::size_t kk = 0; kk < k; ++kk) {
                  const std::ptrdiff_t it = base + static_cast<std::ptrdiff_t>(kk);
                  if (it < 0 || it >= static_cast<std::ptrdiff_t>(t_in)) continue;
                  const std::size_t xi = (ni * c + ic_i) * t_in + static_cast<std::size_t>(it);
                  const std::size_t wi = (oc_i * icn + ic_i) * k + kk;
                  if (xc.requires_grad()) xc.grad()[xi] += go * wc[wi];
                  if (wc.requires_grad()) wc.grad()[wi] += go * xc[xi];
                }
            }
      });
    }
    return out;
  }
};

// ---------------------------------------------------------------------------
// Conv3d: x (N, C, T, H, W) -> (N, C', T', H', W')

template <typename T>
struct Conv3d {
  std::size_t in_ch, out_ch;
  std::size_t kt, kh, kw;
  std::size_t st, sh, sw;
  std::size_t pt, ph, pw;
  Tensor<T> weight;  // (out_ch, in_ch, kt, kh, kw)
  Tensor<T> bias;    // (out_ch)

  Conv3d(std::size_t ic, std::size_t oc, std::size_t kt_, std::size_t kh_,
         std::size_t kw_, std::size_t st_, std::size_t sh_, std::size_t sw_,
         std::size_t pt_, std::size_t ph_, std::size_t pw_, Rng& rng)
      : in_ch(ic), out_ch(oc), kt(kt_), kh(kh_), kw(kw_), st(st_), sh(sh_), sw(sw_),
        pt(pt_), ph(ph_), pw(pw_) {
    weight = detail::kaiming_uniform<T>({oc, ic, kt, kh, kw}, ic * kt * kh * kw, rng);
    bias = Tensor<T>::zeros({oc});
    weight.set_requires_grad(true);
    bias.set_requires_grad(true);
  }

  Tensor<T> forward(const Tensor<T>& x, Tape<T>* tape) const {
    if (x.rank() != 5)
      throw ShapeError("conv3d expects (N,C,T,H,W), got " + shape_str(x.shape()));
    const std::size_t n = x.shape()[0], c = x.shape()[1];
    const std::size_t ti = x.shape()[2], hi = x.shape()[3], wi = x.shape()[4];
    if (c != in_ch)
      throw ShapeError("conv3d channel mismatch: input " + shape_str(x.shape()) +
                       " vs spec in_ch " + std::to_string(in_ch));
    const std::size_t to = detail::conv_out_extent(ti, pt, kt, st, "conv3d[t]");
    const std::size_t ho = detail::conv_out_extent(hi, ph, kh, sh, "conv3d[h]");
    const std::size_t wo = detail::conv_out_extent(wi, pw, kw, sw, "conv3d[w]");
    Tensor<T> out = Tensor<T>::zeros({n, out_ch, to, ho, wo});
    forward_into(x, out, n, c, ti, hi, wi, to, ho, wo);
    if (detail::track(tape, {&x, &weight, &bias})) {
      out.set_requires_grad(true);
      Tensor<T> xc = x, wc = weight, bc = bias, oc2 = out;
      auto self = *this;  // copies hyperparams + param handles
      tape->record(out, [self, xc, wc, bc, oc2, n, c, ti, hi, wi, to, ho, wo]() mutable {
        const T* g = oc2.grad();
        for (std::size_t ni = 0; ni < n; ++ni)
          for (std::size_t oc_i = 0; oc_i < self.out_ch; ++oc_i)
            for (std::size_t ot = 0; ot < to; ++ot)
              for (std::size_t oh = 0; oh < ho; ++oh)
                for (std::size_t ow = 0; ow < wo; ++ow) {
                  const T go = g[(((ni * self.out_ch + oc_i) * to + ot) * ho + oh) * wo + ow];
                  if (bc.requires_grad()) bc.grad()[oc_i] += go;
                  if (go == T(0)) continue;
                  const std::ptrdiff_t bt =
                      static_cast<std::ptrdiff_t>(ot * self.st) - static_cast<std::ptrdiff_t>(self.pt);
                  const std::ptrdiff_t bh =
                      static_cast<std::ptrdiff_t>(oh * self.sh) - static_cast<std::ptrdiff_t>(self.ph);
                  const std::ptrdiff_t bw =
                      static_cast<std::ptrdiff_t>(ow * self.sw) - static_cast<std::ptrdiff_t>(self.pw);
                  for (std::size_t ic_i = 0; ic_i < self.in_ch; ++ic_i)
                    for (std::size_t a = 0; a < self.kt; ++a) {
                      const std::ptrdiff_t it = bt + static_cast<std::ptrdiff_t>(a);
                      if (it < 0 || it >= static_cast<std::ptrdiff_t>(ti)) continue;
                      for (std::size_t b = 0; b < self.kh; ++b) {
                        const std::ptrdiff_t ih = bh + static_cast<std::ptrdiff_t>(b);
                        if (ih < 0 || ih >= static_cast<std::ptrdiff_t>(hi)) continue;
                        for (std::size_t d = 0; d < self.kw; ++d) {
                          const std::ptrdiff_t iw = bw + static_cast<std::ptrdiff_t>(d);
                          if (iw < 0 || iw >= static_cast<std::ptrdiff_t>(wi)) continue;
                          const std::size_t xi =
                              (((ni * c + ic_i) * ti + static_cast<std::size_t>(it)) * hi +
                               static_cast<std::size_t>(ih)) * wi + static_cast<std::size_t>(iw);
                          const std::size_t wgt =
                              (((oc_i * self.in_ch + ic_i) * self.kt + a) * self.kh + b) * self.kw + d;
                          if (xc.requires_grad()) xc.grad()[xi] += go * wc[wgt];
                          if (wc.requires_grad()) wc.grad()[wgt] += go * xc[xi];
                        }
                      }
                    }
                }
      });
    }
    return out;
  }

 private:
  void forward_into(const Tensor<T>& x, Tensor<T>& out, std::size_t n, std::size_t c,
                    std::size_t ti, std::size_t hi, std::size_t wi, std::size_t to,
                    std::size_t ho, std::size_t wo) const {
    const Tensor<T>&w = weight, &b = bias;
    for (std::size_t ni = 0; ni < n; ++ni)
      for (std::size_t oc_i = 0; oc_i < out_ch; ++oc_i)
        for (std::size_t ot = 0; ot < to; ++ot)
          for (std::size_t oh = 0; oh < ho; ++oh)
            for (std::size_t ow = 0; ow < wo; ++ow) {
              T acc = b[oc_i];
              const std::ptrdiff_t bt =
                  static_cast<std::ptrdiff_t>(ot * st) - static_cast<std::ptrdiff_t>(pt);
              const std::ptrdiff_t bh =
                  static_cast<std::ptrdiff_t>(oh * sh) - static_cast<std::ptrdiff_t>(ph);
              const std::ptrdiff_t bw =
                  static_cast<std::ptrdiff_t>(ow * sw) - static_cast<std::ptrdiff_t>(pw);
              for (std::size_t ic_i = 0; ic_i < in_ch; ++ic_i)
                for (std::size_t a = 0; a < kt; ++a) {
                  const std::ptrdiff_t it = bt + static_cast<std::ptrdiff_t>(a);
                  if (it < 0 || it >= static_cast<std::ptrdiff_t>(ti)) continue;
                  for (std::size_t bb = 0; bb < kh; ++bb) {
                    const std::ptrdiff_t ih = bh + static_cast<std::ptrdiff_t>(bb);
                    if (ih < 0 || ih >= static_cast<std::ptrdiff_t>(hi)) continue;
                    for (std::size_t d = 0; d < kw; ++d) {
                      const std::ptrdiff_t iw = bw + static_cast<std::ptrdiff_t>(d);
                      if (iw < 0 || iw >= static_cast<std::ptrdiff_t>(wi)) continue;
                      acc += x[(((ni * c + ic_i) * ti + static_cast<std::size_t>(it)) * hi +
                                static_cast<std::size_t>(ih)) * wi + static_cast<std::size_t>(iw)] *
                             w[(((oc_i * in_ch + ic_i) * kt + a) * kh + bb) * kw + d];
                    }
                  }
                }
              out[(((ni * out_ch + oc_i) * to + ot) * ho + oh) * wo + ow] = acc;
            }
  }
};

// ---------------------------------------------------------------------------
// Batch normalization over the channel axis (axis 1) of (N,C,...) inputs.
//
// Train mode normalizes with biased batch statistics and updates running
// statistics with the unbiased variance; eval mode is a pure per-element
// affine map driven by the running statistics alone.

template <typename T>
struct BatchNorm {
  std::size_t channels;
  T eps = T(1e-5);
  T momentum = T(0.1);
  bool training = true;
  Tensor<T> gamma, beta;              // learned scale / shift
  Tensor<T> running_mean, running_var;  // buffers, not optimized

  explicit BatchNorm(std::size_t c) : channels(c) {
    gamma = Tensor<T>::full({c}, T(1));
    beta = Tensor<T>::zeros({c});
    gamma.set_requires_grad(true);
    beta.set_requires_grad(true);
    running_mean = Tensor<T>::zeros({c});
    running_var = Tensor<T>::full({c}, T(1));
  }

  Tensor<T> forward(const Tensor<T>& x, Tape<T>* tape) {
    if (x.rank() < 2 || x.shape()[1] != channels)
      throw ShapeError("batchnorm expects (N," + std::to_string(channels) +
                       ",...), got " + shape_str(x.shape()));
    const std::size_t n = x.shape()[0], c = channels;
    std::size_t inner = 1;
    for (std::size_t d = 2; d < x.rank(); ++d) inner *= x.shape()[d];
    const std::size_t count = n * inner;  // elements per channel
    Tensor<T> out = Tensor<T>::zeros(x.shape());
    if (training) {
      if (count < 2)
        throw ShapeError("batchnorm train mode needs >= 2 elements per channel, got " +
                         std::to_string(count));
      std::vector<T> mean(c, T(0)), var(c, T(0)), ivstd(c, T(0));
      for (std::size_t ch = 0; ch < c; ++ch) {
        T m = T(0);
        for (std::size_t ni = 0; ni < n; ++ni)
          for (std::size_t i = 0; i < inner; ++i) m += x[(ni * c + ch) * inner + i];
        m /= static_cast<T>(count);
        T v = T(0);
        for (std::size_t ni = 0; ni < n; ++ni)
          for (std::size_t i = 0; i < inner; ++i) {
            const T d = x[(ni * c + ch) * inner + i] - m;
            v += d * d;
          }
        v /= static_cast<T>(count);
        mean[ch] = m;
        var[ch] = v;
        ivstd[ch] = T(1) / std::sqrt(v + eps);
        const T unbiased = v * static_cast<T>(count) / static_cast<T>(count - 1);
        running_mean[ch] = (T(1) - momentum) * running_mean[ch] + momentum * m;
        running_var[ch] = (T(1) - momentum) * running_var[ch] + momentum * unbiased;
      }
      for (std::size_t ni = 0; ni < n; ++ni)
        for (std::size_t ch = 0; ch < c; ++ch)
          for (std::size_t i = 0; i < inner; ++i) {
            const std::size_t off = (ni * c + ch) * inner + i;
            out[off] = gamma[ch] * (x[off] - mean[ch]) * ivstd[ch] + beta[ch];
          }
      if (detail::track(tape, {&x, &gamma, &beta})) {
        out.set_requires_grad(true);
        Tensor<T> xc = x, gc = gamma, bc = beta, oc = out;
        tape->record(out, [xc, gc, bc, oc, mean, ivstd, n, c, inner, count]() mutable {
          const T* g = oc.grad();
          for (std::size_t ch = 0; ch < c; ++ch) {
            // per-channel sums over the batch
            T sum_g = T(0), sum_gx = T(0);
            for (std::size_t ni = 0; ni < n; ++ni)
              for (std::size_t i = 0; i < inner; ++i) {
                const std::size_t off = (ni * c + ch) * inner + i;
                const T xh = (xc[off] - mean[ch]) * ivstd[ch];
                sum_g += g[off];
                sum_gx += g[off] * xh;
              }
            if (gc.requires_grad()) gc.grad()[ch] += sum_gx;
            if (bc.requires_grad()) bc.grad()[ch] += sum_g;
            if (xc.requires_grad()) {
              const T inv_cnt = T(1) / static_cast<T>(count);
              for (std::size_t ni = 0; ni < n; ++ni)
                for (std::size_t i = 0; i < inner; ++i) {
                  const std::size_t off = (ni * c + ch) * inner + i;
                  const T xh = (xc[off] - mean[ch]) * ivstd[ch];
                  xc.grad()[off] += gc[ch] * ivstd[ch] *
                                    (g[off] - inv_cnt * (sum_g + xh * sum_gx));
                }
            }
          }
        });
      }
    } else {
      std::vector<T> scale(c), shift(c);
      for (std::size_t ch = 0; ch < c; ++ch) {
        scale[ch] = gamma[ch] / std::sqrt(running_var[ch] + eps);
        shift[ch] = beta[ch] - scale[ch] * running_mean[ch];
      }
      for (std::size_t ni = 0; ni < n; ++ni)
        for (std::size_t ch = 0; ch < c; ++ch)
          for (std::size_t i = 0; i < inner; ++i) {
            const std::size_t off = (ni * c + ch) * inner + i;
            out[off] = scale[ch] * x[off] + shift[ch];
          }
      if (detail::track(tape, {&x, &gamma, &beta})) {
        out.set_requires_grad(true);
        Tensor<T> xc = x, gc = gamma, bc = beta, oc = out;
        Tensor<T> rm = running_mean, rv = running_var;
        const T e = eps;
        tape->record(out, [xc, gc, bc, oc, rm, rv, e, n, c, inner]() mutable {
          const T* g = oc.grad();
          for (std::size_t ch = 0; ch < c; ++ch) {
            const T ivstd = T(1) / std::sqrt(rv[ch] + e);
            for (std::size_t ni = 0; ni < n; ++ni)
              for (std::size_t i = 0; i < inner; ++i) {
                const std::size_t off = (ni * c + ch) * inner + i;
                if (xc.requires_grad()) xc.grad()[off] += g[off] * gc[ch] * ivstd;
                if (gc.requires_grad())
                  gc.grad()[ch] += g[off] * (xc[off] - rm[ch]) * ivstd;
                if (bc.requires_grad()) bc.grad()[ch] += g[off];
              }
          }
        });
      }
    }
    return out;
  }
};

// ---------------------------------------------------------------------------
// Max pooling. Gradient goes to the argmax; ties break to the lowest linear
// index (first occurrence in scan order), keeping training reproducible.

template <typename T>
Tensor<T> maxpool1d(const Tensor<T>& x, std::size_t window, std::size_t stride,
                    Tape<T>* tape = nullptr) {
  if (x.rank() != 3)
    throw ShapeError("maxpool1d expects (N,C,T), got " + shape_str(x.shape()));
  const std::size_t n = x.shape()[0], c = x.shape()[1], t_in = x.shape()[2];
  if (window > t_in)
    throw ShapeError("maxpool1d window " + std::to_string(window) +
                     " exceeds extent " + std::to_string(t_in));
  const std::size_t t_out = (t_in - window) / stride + 1;
  Tensor<T> out = Tensor<T>::zeros({n, c, t_out});
  std::vector<std::size_t> argmax(out.numel());
  for (std::size_t ni = 0; ni < n; ++ni)
    for (std::size_t ch = 0; ch < c; ++ch)
      for (std::size_t ot = 0; ot < t_out; ++ot) {
        const std::size_t base = (ni * c + ch) * t_in + ot * stride;
        T best = x[base];
        std::size_t best_i = base;
        for (std::size_t k = 1; k < window; ++k)
          if (x[base + k] > best) {
            best = x[base + k];
            best_i = base + k;
          }
        const std::size_t o = (ni * c + ch) * t_out + ot;
        out[o] = best;
        argmax[o] = best_i;
      }
  if (detail::track(tape, {&x})) {
    out.set_requires_grad(true);
    Tensor<T> xc = x, oc = out;
    tape->record(out, [xc, oc, argmax]() mutable {
      for (std::size_t o = 0; o < oc.numel(); ++o) xc.grad()[argmax[o]] += oc.grad()[o];
    });
  }
  return out;
}

template <typename T>
Tensor<T> maxpool3d(const Tensor<T>& x, std::size_t wt, std::size_t wh, std::size_t ww,
                    std::size_t st, std::size_t sh, std::size_t sw,
                    Tape<T>* tape = nullptr) {
  if (x.rank() != 5)
    throw ShapeError("maxpool3d expects (N,C,T,H,W), got " + shape_str(x.shape()));
  const std::size_t n = x.shape()[0], c = x.shape()[1];
  const std::size_t ti = x.shape()[2], hi = x.shape()[3], wi = x.shape()[4];
  if (wt > ti || wh > hi || ww > wi)
    throw ShapeError("maxpool3d window exceeds extent for input " + shape_str(x.shape()));
  const std::size_t to = (ti - wt) / st + 1, ho = (hi - wh) / sh + 1,
                    wo = (wi - ww) / sw + 1;
  Tensor<T> out = Tensor<T>::zeros({n, c, to, ho, wo});
  std::vector<std::size_t> argmax(out.numel());
  for (std::size_t ni = 0; ni < n; ++ni)
    for (std::size_t ch = 0; ch < c; ++ch)
      for (std::size_t ot = 0; ot < to; ++ot)
        for (std::size_t oh = 0; oh < ho; ++oh)
          for (std::size_t ow = 0; ow < wo; ++ow) {
            T best = -std::numeric_limits<T>::infinity();
            std::size_t best_i = 0;
            for (std::size_t a = 0; a < wt; ++a)
              for (std::size_t b = 0; b < wh; ++b)
                for (std::size_t d = 0; d < ww; ++d) {
                  const std::size_t off =
                      (((ni * c + ch) * ti + ot * st + a) * hi + oh * sh + b) * wi +
                      ow * sw + d;
                  if (x[off] > best) {
                    best = x[off];
                    best_i = off;
                  }
                }
            const std::size_t o = (((ni * c + ch) * to + ot) * ho + oh) * wo + ow;
            out[o] = best;
            argmax[o] = best_i;
          }
  if (detail::track(tape, {&x})) {
    out.set_requires_grad(true);
    Tensor<T> xc = x, oc = out;
    tape->record(out, [xc, oc, argmax]() mutable {
      for (std::size_t o = 0; o < oc.numel(); ++o) xc.grad()[argmax[o]] += oc.grad()[o];
    });
  }
  return out;
}

// ---------------------------------------------------------------------------
// Pointwise nonlinearities.

/// relu(x) = max(0, x); subgradient 0 at exactly 0.
template <typename T>
Tensor<T> relu(const Tensor<T>& x, Tape<T>* tape = nullptr) {
  Tensor<T> out = Tensor<T>::zeros(x.shape());
  for (std::size_t i = 0; i < x.numel(); ++i) out[i] = x[i] > T(0) ? x[i] : T(0);
  if (detail::track(tape, {&x})) {
    out.set_requires_grad(true);
    Tensor<T> xc = x, oc = out;
    tape->record(out, [xc, oc]() mutable {
      for (std::size_t i = 0; i < oc.numel(); ++i)
        if (xc[i] > T(0)) xc.grad()[i] += oc.grad()[i];
    });
  }
  return out;
}

namespace detail {
template <typename T>
inline T stable_sigmoid(T z) {
  // branch form avoids overflow of exp for large |z|
  if (z >= T(0)) {
    const T e = std::exp(-z);
    return T(1) / (T(1) + e);
  }
  const T e = std::exp(z);
  return e / (T(1) + e);
}
}  // namespace detail

template <typename T>
Tensor<T> sigmoid(const Tensor<T>& z, Tape<T>* tape = nullptr) {
  Tensor<T> out = Tensor<T>::zeros(z.shape());
  for (std::size_t i = 0; i < z.numel(); ++i) out[i] = detail::stable_sigmoid(z[i]);
  if (detail::track(tape, {&z})) {
    out.set_requires_grad(true);
    Tensor<T> zc = z, oc = out;
    tape->record(out, [zc, oc]() mutable {
      for (std::size_t i = 0; i < oc.numel(); ++i)
        zc.grad()[i] += oc.grad()[i] * oc[i] * (T(1) - oc[i]);
    });
  }
  return out;
}

/// Softmax normalized over the entire rank-2 grid (max-subtracted form).
template <typename T>
Tensor<T> softmax_grid(const Tensor<T>& z, Tape<T>* tape = nullptr) {
  if (z.rank() != 2)
    throw ShapeError("softmax_grid expects a rank-2 grid, got " + shape_str(z.shape()));
  Tensor<T> out = Tensor<T>::zeros(z.shape());
  T zmax = z[0];
  for (std::size_t i = 1; i < z.numel(); ++i) zmax = std::max(zmax, z[i]);
  T denom = T(0);
  for (std::size_t i = 0; i < z.numel(); ++i) {
    out[i] = std::exp(z[i] - zmax);
    denom += out[i];
  }
  for (std::size_t i = 0; i < z.numel(); ++i) out[i] /= denom;
  if (detail::track(tape, {&z})) {
    out.set_requires_grad(true);
    Tensor<T> zc = z, oc = out;
    tape->record(out, [zc, oc]() mutable {
      T dot = T(0);
      for (std::size_t i = 0; i < oc.numel(); ++i) dot += oc.grad()[i] * oc[i];
      for (std::size_t i = 0; i < oc.numel(); ++i)
        zc.grad()[i] += oc[i] * (oc.grad()[i] - dot);
    });
  }
  return out;
}

/// Affine map of a vector to a scalar: y = W x + b, W (1,D), b (1).
template <typename T>
Tensor<T> linear(const Tensor<T>& x, const Tensor<T>& w, const Tensor<T>& b,
                 Tape<T>* tape = nullptr) {
  if (x.rank() != 1)
    throw ShapeError("linear expects rank-1 input, got " + shape_str(x.shape()));
  if (w.rank() != 2 || w.shape()[0] != 1 || w.shape()[1] != x.numel())
    throw ShapeError("linear weight shape " + shape_str(w.shape()) +
                     " does not match input " + shape_str(x.shape()));
  if (b.numel() != 1)
    throw ShapeError("linear bias must be a single element, got " + shape_str(b.shape()));
  T acc = b[0];
  for (std::size_t i = 0; i < x.numel(); ++i) acc += w[i] * x[i];
  Tensor<T> out = Tensor<T>::scalar(acc);
  if (detail::track(tape, {&x, &w, &b})) {
    out.set_requires_grad(true);
    Tensor<T> xc = x, wc = w, bc = b, oc = out;
    tape->record(out, [xc, wc, bc, oc]() mutable {
      const T g = oc.grad()[0];
      if (bc.requires_grad()) bc.grad()[0] += g;
      for (std::size_t i = 0; i < xc.numel(); ++i) {
        if (xc.requires_grad()) xc.grad()[i] += g * wc[i];
        if (wc.requires_grad()) wc.grad()[i] += g * xc[i];
      }
    });
  }
  return out;
}

// ---------------------------------------------------------------------------
// Adaptive average pooling. Output cell i covers input rows
// [floor(i*in/out), floor((i+1)*in/out)); the bins partition the input.

namespace detail {
inline std::pair<std::size_t, std::size_t> adaptive_bin(std::size_t i, std::size_t in,
                                                        std::size_t out) {
  return {i * in / out, (i + 1) * in / out};
}
}  // namespace detail

/// x (N,C,T) -> (N,C,out_t).
template <typename T>
Tensor<T> adaptive_avg_pool1d(const Tensor<T>& x, std::size_t out_t,
                              Tape<T>* tape = nullptr) {
  if (x.rank() != 3)
    throw ShapeError("adaptive_avg_pool1d expects (N,C,T), got " + shape_str(x.shape()));
  const std::size_t n = x.shape()[0], c = x.shape()[1], t_in = x.shape()[2];
  if (out_t < 1 || out_t > t_in)
    throw ShapeError("adaptive_avg_pool1d: out extent " + std::to_string(out_t) +
                     " not in [1," + std::to_string(t_in) + "]");
  Tensor<T> out = Tensor<T>::zeros({n, c, out_t});
  for (std::size_t ni = 0; ni < n; ++ni)
    for (std::size_t ch = 0; ch < c; ++ch)
      for (std::size_t ot = 0; ot < out_t; ++ot) {
        const auto [b, e] = detail::adaptive_bin(ot, t_in, out_t);
        T acc = T(0);
        for (std::size_t k = b; k < e; ++k) acc += x[(ni * c + ch) * t_in + k];
        out[(ni * c + ch) * out_t + ot] = acc / static_cast<T>(e - b);
      }
  if (detail::track(tape, {&x})) {
    out.set_requires_grad(true);
    Tensor<T> xc = x, oc = out;
    tape->record(out, [xc, oc, n, c, t_in, out_t]() mutable {
      for (std::size_t ni = 0; ni < n; ++ni)
        for (std::size_t ch = 0; ch < c; ++ch)
          for (std::size_t ot = 0; ot < out_t; ++ot) {
            const auto [b, e] = detail::adaptive_bin(ot, t_in, out_t);
            const T g = oc.grad()[(ni * c + ch) * out_t + ot] / static_cast<T>(e - b);
            for (std::size_t k = b; k < e; ++k) xc.grad()[(ni * c + ch) * t_in + k] += g;
          }
    });
  }
  return out;
}

/// F (T,C,H,W) -> (T,C,out_h,out_w); out_h=out_w=1 is global average pooling.
template <typename T>
Tensor<T> adaptive_avg_pool_spatial(const Tensor<T>& f, std::size_t out_h,
                                    std::size_t out_w, Tape<T>* tape = nullptr) {
  if (f.rank() != 4)
    throw ShapeError("adaptive_avg_pool_spatial expects (T,C,H,W), got " +
                     shape_str(f.shape()));
  const std::size_t t = f.shape()[0], c = f.shape()[1], h = f.shape()[2],
                    w = f.shape()[3];
  if (out_h < 1 || out_h > h || out_w < 1 || out_w > w)
    throw ShapeError("adaptive_avg_pool_spatial: output " + std::to_string(out_h) + "x" +
                     std::to_string(out_w) + " not within input " + std::to_string(h) +
                     "x" + std::to_string(w));
  Tensor<T> out = Tensor<T>::zeros({t, c, out_h, out_w});
  for (std::size_t ti = 0; ti < t; ++ti)
    for (std::size_t ch = 0; ch < c; ++ch)
      for (std::size_t oh = 0; oh < out_h; ++oh)
        for (std::size_t ow = 0; ow < out_w; ++ow) {
          const auto [hb, he] = detail::adaptive_bin(oh, h, out_h);
          const auto [wb, we] = detail::adaptive_bin(ow, w, out_w);
          T acc = T(0);
          for (std::size_t y = hb; y < he; ++y)
            for (std::size_t x = wb; x < we; ++x)
              acc += f[((ti * c + ch) * h + y) * w + x];
          out[((ti * c + ch) * out_h + oh) * out_w + ow] =
              acc / static_cast<T>((he - hb) * (we - wb));
        }
  if (detail::track(tape, {&f})) {
    out.set_requires_grad(true);
    Tensor<T> fc = f, oc = out;
    tape->record(out, [fc, oc, t, c, h, w, out_h, out_w]() mutable {
      for (std::size_t ti = 0; ti < t; ++ti)
        for (std::size_t ch = 0; ch < c; ++ch)
          for (std::size_t oh = 0; oh < out_h; ++oh)
            for (std::size_t ow = 0; ow < out_w; ++ow) {
              const auto [hb, he] = detail::adaptive_bin(oh, h, out_h);
              const auto [wb, we] = detail::adaptive_bin(ow, w, out_w);
              const T g = oc.grad()[((ti * c + ch) * out_h + oh) * out_w + ow] /
                          static_cast<T>((he - hb) * (we - wb));
              for (std::size_t y = hb; y < he; ++y)
                for (std::size_t x = wb; x < we; ++x)
                  fc.grad()[((ti * c + ch) * h + y) * w + x] += g;
            }
    });
  }
  return out;
}

// ---------------------------------------------------------------------------
// Linear interpolation along the temporal axis of (N,C,T,H,W), endpoints
// aligned (output position t' samples input at t'*(T-1)/(T_out-1)).

template <typename T>
Tensor<T> temporal_interp(const Tensor<T>& x, std::size_t t_out,
                          Tape<T>* tape = nullptr) {
  if (x.rank() != 5)
    throw ShapeError("temporal_interp expects (N,C,T,H,W), got " + shape_str(x.shape()));
  const std::size_t n = x.shape()[0], c = x.shape()[1], t_in = x.shape()[2],
                    h = x.shape()[3], w = x.shape()[4];
  if (t_out < 1) throw ShapeError("temporal_interp: output extent < 1");
  struct Mix {
    std::size_t lo, hi;
    T w_lo, w_hi;
  };
  std::vector<Mix> mix(t_out);
  for (std::size_t ot = 0; ot < t_out; ++ot) {
    if (t_out == 1 || t_in == 1) {
      mix[ot] = {0, 0, T(1), T(0)};
      continue;
    }
    const double pos = static_cast<double>(ot) * static_cast<double>(t_in - 1) /
                       static_cast<double>(t_out - 1);
    const std::size_t lo = std::min(static_cast<std::size_t>(pos), t_in - 1);
    const std::size_t hi = std::min(lo + 1, t_in - 1);
    const T frac = static_cast<T>(pos - static_cast<double>(lo));
    mix[ot] = {lo, hi, T(1) - frac, frac};
  }
  const std::size_t plane = h * w;
  Tensor<T> out = Tensor<T>::zeros({n, c, t_out, h, w});
  for (std::size_t ni = 0; ni < n; ++ni)
    for (std::size_t ch = 0; ch < c; ++ch)
      for (std::size_t ot = 0; ot < t_out; ++ot) {
        const Mix& m = mix[ot];
        const T* lo_p = x.data() + ((ni * c + ch) * t_in + m.lo) * plane;
        const T* hi_p = x.data() + ((ni * c + ch) * t_in + m.hi) * plane;
        T* dst = out.data() + ((ni * c + ch) * t_out + ot) * plane;
        for (std::size_t i = 0; i < plane; ++i) dst[i] = m.w_lo * lo_p[i] + m.w_hi * hi_p[i];
      }
  if (detail::track(tape, {&x})) {
    out.set_requires_grad(true);
    Tensor<T> xc = x, oc = out;
    tape->record(out, [xc, oc, mix, n, c, t_in, t_out, plane]() mutable {
      for (std::size_t ni = 0; ni < n; ++ni)
        for (std::size_t ch = 0; ch < c; ++ch)
          for (std::size_t ot = 0; ot < t_out; ++ot) {
            const Mix& m = mix[ot];
            const T* g = oc.grad() + ((ni * c + ch) * t_out + ot) * plane;
            T* lo_p = xc.grad() + ((ni * c + ch) * t_in + m.lo) * plane;
            T* hi_p = xc.grad() + ((ni * c + ch) * t_in + m.hi) * plane;
            for (std::size_t i = 0; i < plane; ++i) {
              lo_p[i] += m.w_lo * g[i];
              hi_p[i] += m.w_hi * g[i];
            }
          }
    });
  }
  return out;
}

}  // namespace avfg
