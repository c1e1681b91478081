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

// The spatially-local audio-visual detector. A Conv1D branch maps a raw
// waveform (T^a, C^a) to an audio feature (T', C'); a shallow 3-D residual
// conv branch maps a frame sequence (T^v, C^v, H^v, W^v) to a visual feature
// (T', C', H', W') whose per-position fibers share the audio feature's
// geometry. A distance map M holds the L2 distance between the flattened
// audio feature and each spatial fiber of the visual feature; a
// cross-attention map A reweights it; the fused map feeds a single linear
// classifier with a sigmoid read-out (score near 1 = fake).
//
// Two scale presets are built in:
//   paper: audio 48000x1 -> 128x15, visual 30x3x224x224 -> 128x15x28x28
//   desk:  audio 4096x1  -> 16x8,   visual 8x1x32x32    -> 16x8x4x4
// The desk preset is small enough for finite-difference audits and
// minutes-scale training runs.

#include <cmath>
#include <cstdint>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "avfg/layers.hpp"
#include "avfg/rng.hpp"
#include "avfg/tensor.hpp"

namespace avfg {

enum class Fusion { plain, residual };
enum class Preset { desk, paper };

inline const char* fusion_name(Fusion f) {
  return f == Fusion::plain ? "plain" : "residual";
}
inline const char* preset_name(Preset p) { return p == Preset::desk ? "desk" : "paper"; }

struct ModelConfig {
  Preset preset = Preset::desk;
  // inputs
  std::size_t audio_len = 4096, audio_ch = 1;
  std::size_t frames = 8, vis_ch = 1, height = 32, width = 32;
  // shared feature geometry (both branches)
  std::size_t feat_t = 16, feat_c = 8;
  // map extents before optional pooling
  std::size_t map_h = 4, map_w = 4;
  bool attention = true;
  Fusion fusion = Fusion::plain;
  // optional adaptive pooling of the visual feature before the distance map;
  // 0 disables
  std::size_t pooled_h = 0, pooled_w = 0;

  static ModelConfig desk() { return ModelConfig{}; }

  static ModelConfig paper() {
    ModelConfig c;
    c.preset = Preset::paper;
    c.audio_len = 48000;
    c.audio_ch = 1;
    c.frames = 30;
    c.vis_ch = 3;
    c.height = 224;
    c.width = 224;
    c.feat_t = 128;
    c.feat_c = 15;
    c.map_h = 28;
    c.map_w = 28;
    return c;
  }

  static ModelConfig from_preset(Preset p) {
    return p == Preset::desk ? desk() : paper();
  }

  std::size_t attention_ch() const { return feat_c / 4; }

  /// Map extents actually fed to the classifier.
  std::size_t eff_h() const { return pooled_h ? pooled_h : map_h; }
  std::size_t eff_w() const { return pooled_w ? pooled_w : map_w; }
  std::size_t classifier_dim() const { return eff_h() * eff_w(); }

  void validate() const {
    if (feat_c % 4 != 0)
      throw ShapeError("ModelConfig: feature channels " + std::to_string(feat_c) +
                       " must be divisible by 4 for the attention embeddings");
    if (pooled_h > map_h || pooled_w > map_w)
      throw ShapeError("ModelConfig: pooled map exceeds feature map extents");
    if ((pooled_h == 0) != (pooled_w == 0))
      throw ShapeError("ModelConfig: pooled_h and pooled_w must be set together");
  }
};

template <typename T>
struct FeatureTensors {
  Tensor<T> audio;   // (T', C')
  Tensor<T> visual;  // (T', C', H', W')
};

template <typename T>
struct InconsistencyMaps {
  Tensor<T> distance;   // M,  (H', W'), nonnegative
  Tensor<T> attention;  // A,  (H', W'), positive, sums to 1
  Tensor<T> fused;      // M-hat
};

template <typename T>
struct Prediction {
  Tensor<T> logit;  // pre-sigmoid scalar, kept for the stable BCE
  Tensor<T> score;  // sigmoid(logit) in [0,1]
  T value() const { return score.item(); }
};

template <typename T>
struct ForwardResult {
  Prediction<T> prediction;
  InconsistencyMaps<T> maps;
};

// ---------------------------------------------------------------------------
// Distance map: M[i,j] = || flatten(F_a) - flatten(F_v[:,:,i,j]) ||_2.
// Fused op with an analytic backward; at M[i,j] == 0 the subgradient 0 is
// used.

template <typename T>
Tensor<T> distance_map(const Tensor<T>& fa, const Tensor<T>& fv, Tape<T>* tape = nullptr) {
  if (fa.rank() != 2 || fv.rank() != 4)
    throw ShapeError("distance_map expects (T,C) and (T,C,H,W), got " +
                     shape_str(fa.shape()) + " and " + shape_str(fv.shape()));
  const std::size_t t = fa.shape()[0], c = fa.shape()[1];
  if (fv.shape()[0] != t || fv.shape()[1] != c)
    throw ShapeError("distance_map branch shapes disagree: " + shape_str(fa.shape()) +
                     " vs " + shape_str(fv.shape()));
  const std::size_t h = fv.shape()[2], w = fv.shape()[3];
  Tensor<T> out = Tensor<T>::zeros({h, w});
  for (std::size_t i = 0; i < h; ++i)
    for (std::size_t j = 0; j < w; ++j) {
      T acc = T(0);
      for (std::size_t ti = 0; ti < t; ++ti)
        for (std::size_t ci = 0; ci < c; ++ci) {
          const T d = fa[ti * c + ci] - fv[((ti * c + ci) * h + i) * w + j];
          acc += d * d;
        }
      out[i * w + j] = std::sqrt(acc);
    }
  if (detail::track(tape, {&fa, &fv})) {
    out.set_requires_grad(true);
    Tensor<T> fac = fa, fvc = fv, oc = out;
    tape->record(out, [fac, fvc, oc, t, c, h, w]() mutable {
      for (std::size_t i = 0; i < h; ++i)
        for (std::size_t j = 0; j < w; ++j) {
          const T m = oc[i * w + j];
          if (m <= T(0)) continue;
          const T g = oc.grad()[i * w + j] / m;
          for (std::size_t ti = 0; ti < t; ++ti)
            for (std::size_t ci = 0; ci < c; ++ci) {
              const std::size_t ai = ti * c + ci;
              const std::size_t vi = (ai * h + i) * w + j;
              const T d = fac[ai] - fvc[vi];
              if (fac.requires_grad()) fac.grad()[ai] += g * d;
              if (fvc.requires_grad()) fvc.grad()[vi] -= g * d;
            }
        }
    });
  }
  return out;
}

// ---------------------------------------------------------------------------
// Attention logits: the dot product between the channel-reduced audio
// embedding and each spatial fiber of the channel-reduced visual embedding,
// normalized by T'*C' of the *unreduced* features.

template <typename T>
Tensor<T> cross_dot_grid(const Tensor<T>& ea, const Tensor<T>& ev, T denom,
                         Tape<T>* tape = nullptr) {
  if (ea.rank() != 3 || ev.rank() != 5)
    throw ShapeError("cross_dot_grid expects (1,C,T) and (1,C,T,H,W), got " +
                     shape_str(ea.shape()) + " and " + shape_str(ev.shape()));
  const std::size_t c = ea.shape()[1], t = ea.shape()[2];
  if (ev.shape()[1] != c || ev.shape()[2] != t || ea.shape()[0] != 1 || ev.shape()[0] != 1)
    throw ShapeError("cross_dot_grid embedding shapes disagree: " + shape_str(ea.shape()) +
                     " vs " + shape_str(ev.shape()));
  const std::size_t h = ev.shape()[3], w = ev.shape()[4];
  const T inv = T(1) / denom;
  Tensor<T> out = Tensor<T>::zeros({h, w});
  for (std::size_t i = 0; i < h; ++i)
    for (std::size_t j = 0; j < w; ++j) {
      T acc = T(0);
      for (std::size_t ci = 0; ci < c; ++ci)
        for (std::size_t ti = 0; ti < t; ++ti)
          acc += ea[ci * t + ti] * ev[((ci * t + ti) * h + i) * w + j];
      out[i * w + j] = acc * inv;
    }
  if (detail::track(tape, {&ea, &ev})) {
    out.set_requires_grad(true);
    Tensor<T> eac = ea, evc = ev, oc = out;
    tape->record(out, [eac, evc, oc, inv, c, t, h, w]() mutable {
      for (std::size_t i = 0; i < h; ++i)
        for (std::size_t j = 0; j < w; ++j) {
          const T g = oc.grad()[i * w + j] * inv;
          for (std::size_t ci = 0; ci < c; ++ci)
            for (std::size_t ti = 0; ti < t; ++ti) {
              const std::size_t ai = ci * t + ti;
              const std::size_t vi = (ai * h + i) * w + j;
              if (eac.requires_grad()) eac.grad()[ai] += g * evc[vi];
              if (evc.requires_grad()) evc.grad()[vi] += g * eac[ai];
            }
        }
    });
  }
  return out;
}

/// M-hat from M and A: plain is M*A, residual is M*A + M; with attention
/// disabled the distance map passes through untouched.
template <typename T>
Tensor<T> fuse_maps(const Tensor<T>& m, const Tensor<T>& a, Fusion variant,
                    bool attention_enabled, Tape<T>* tape = nullptr) {
  if (!attention_enabled) return m;
  detail::require_same_shape(m, a, "fuse_maps");
  Tensor<T> weighted = multiply(m, a, tape);
  if (variant == Fusion::plain) return weighted;
  return add(weighted, m, tape);
}

// ---------------------------------------------------------------------------
// Detector

template <typename T>
class Detector {
 public:
  Detector(const ModelConfig& cfg, std::uint64_t seed) : cfg_(cfg) {
    cfg_.validate();
    Rng rng(derive_seed(seed, 0xD37EC702ULL));
    if (cfg_.preset == Preset::desk)
      build_desk(rng);
    else
      build_paper(rng);
    // attention embeddings: pointwise channel reduction to C'/4
    att_audio_.emplace(cfg_.feat_c, cfg_.attention_ch(), 1, 1, 0, rng);
    att_visual_.emplace(cfg_.feat_c, cfg_.attention_ch(), 1, 1, 1, 1, 1, 1, 0, 0, 0, rng);
    // classifier starts at zero so an untrained model scores 0.5 everywhere
    cls_w_ = Tensor<T>::zeros({1, cfg_.classifier_dim()});
    cls_b_ = Tensor<T>::zeros({1});
    cls_w_.set_requires_grad(true);
    cls_b_.set_requires_grad(true);
  }

  const ModelConfig& config() const { return cfg_; }

  void set_training(bool on) {
    training_ = on;
    for (auto& bn : a_bns_) bn.training = on;
    for (auto& blk : v_blocks_) {
      blk.bn1.training = on;
      if (blk.bn2) blk.bn2->training = on;
    }
  }
  bool training() const { return training_; }

  /// Audio branch: (T^a, C^a) -> (T', C').
  Tensor<T> extract_audio(const Tensor<T>& ia, Tape<T>* tape) {
    if (ia.rank() != 2 || ia.shape()[0] != cfg_.audio_len || ia.shape()[1] != cfg_.audio_ch)
      throw ShapeError("extract_audio expects (" + std::to_string(cfg_.audio_len) + "," +
                       std::to_string(cfg_.audio_ch) + "), got " + shape_str(ia.shape()));
    // (T,C) -> (1,C,T)
    Tensor<T> x = reshape(permute(ia, {1, 0}, tape), {1, cfg_.audio_ch, cfg_.audio_len}, tape);
    for (std::size_t s = 0; s < a_convs_.size(); ++s) {
      x = a_convs_[s].forward(x, tape);
      x = a_bns_[s].forward(x, tape);
      x = relu(x, tape);
      if (a_pool_[s] > 1) x = maxpool1d(x, a_pool_[s], a_pool_[s], tape);
    }
    x = adaptive_avg_pool1d(x, cfg_.feat_t, tape);
    // (1,C',T') -> (T',C')
    return reshape(permute(x, {0, 2, 1}, tape), {cfg_.feat_t, cfg_.feat_c}, tape);
  }

  /// Visual branch: (T^v, C^v, H, W) -> (T', C', H', W').
  Tensor<T> extract_visual(const Tensor<T>& iv, Tape<T>* tape) {
    if (iv.rank() != 4 || iv.shape()[0] != cfg_.frames || iv.shape()[1] != cfg_.vis_ch ||
        iv.shape()[2] != cfg_.height || iv.shape()[3] != cfg_.width)
      throw ShapeError("extract_visual input " + shape_str(iv.shape()) +
                       " does not match the configured geometry");
    // (T,C,H,W) -> (1,C,T,H,W)
    Tensor<T> x = reshape(permute(iv, {1, 0, 2, 3}, tape),
                          {1, cfg_.vis_ch, cfg_.frames, cfg_.height, cfg_.width}, tape);
    for (auto& blk : v_blocks_) {
      Tensor<T> h = blk.conv1.forward(x, tape);
      h = blk.bn1.forward(h, tape);
      if (blk.conv2) {
        h = relu(h, tape);
        h = blk.conv2->forward(h, tape);
        h = blk.bn2->forward(h, tape);
      }
      Tensor<T> skip = blk.proj ? blk.proj->forward(x, tape) : x;
      x = relu(add(h, skip, tape), tape);
      if (blk.pool_after) x = maxpool3d(x, 1, 2, 2, 1, 2, 2, tape);
    }
    x = temporal_interp(x, cfg_.feat_t, tape);
    // (1,C',T',H',W') -> (T',C',H',W')
    Tensor<T> p = permute(x, {0, 2, 1, 3, 4}, tape);
    return reshape(p, {cfg_.feat_t, cfg_.feat_c, cfg_.map_h, cfg_.map_w}, tape);
  }

  /// Attention map over the (possibly pooled) visual feature grid.
  Tensor<T> attention_logits(const Tensor<T>& fa, const Tensor<T>& fv, Tape<T>* tape) {
    const std::size_t h = fv.shape()[2], w = fv.shape()[3];
    // (T',C') -> (1,C',T') for the Conv1D embedding
    Tensor<T> ea_in = reshape(permute(fa, {1, 0}, tape), {1, cfg_.feat_c, cfg_.feat_t}, tape);
    Tensor<T> ea = att_audio_->forward(ea_in, tape);
    // (T',C',H,W) -> (1,C',T',H,W) for the Conv3D embedding
    Tensor<T> ev_in = reshape(permute(fv, {1, 0, 2, 3}, tape),
                              {1, cfg_.feat_c, cfg_.feat_t, h, w}, tape);
    Tensor<T> ev = att_visual_->forward(ev_in, tape);
    const T denom = static_cast<T>(cfg_.feat_t * cfg_.feat_c);
    return cross_dot_grid(ea, ev, denom, tape);
  }

  Tensor<T> attention_map(const Tensor<T>& fa, const Tensor<T>& fv, Tape<T>* tape) {
    return softmax_grid(attention_logits(fa, fv, tape), tape);
  }

  /// Classifier over the fused map.
  Prediction<T> classify(const Tensor<T>& m_hat, Tape<T>* tape) {
    if (m_hat.numel() != cfg_.classifier_dim())
      throw ShapeError("classify: map " + shape_str(m_hat.shape()) +
                       " does not match the trained weight dimension " +
                       std::to_string(cfg_.classifier_dim()));
    Tensor<T> z = linear(flatten(m_hat, tape), cls_w_, cls_b_, tape);
    return Prediction<T>{z, sigmoid(z, tape)};
  }

  ForwardResult<T> forward(const Tensor<T>& ia, const Tensor<T>& iv, Tape<T>* tape) {
    Tensor<T> fa = extract_audio(ia, tape);
    Tensor<T> fv = extract_visual(iv, tape);
    if (cfg_.pooled_h)
      fv = adaptive_avg_pool_spatial(fv, cfg_.pooled_h, cfg_.pooled_w, tape);
    Tensor<T> m = distance_map(fa, fv, tape);
    Tensor<T> a;
    if (cfg_.attention) {
      a = attention_map(fa, fv, tape);
    } else {
      // uniform placeholder for visualization; not part of the graph
      a = Tensor<T>::full(m.shape(), T(1) / static_cast<T>(m.numel()));
    }
    Tensor<T> m_hat = fuse_maps(m, a, cfg_.fusion, cfg_.attention, tape);
    Prediction<T> pred = classify(m_hat, tape);
    return ForwardResult<T>{std::move(pred), InconsistencyMaps<T>{m, a, m_hat}};
  }

  /// Trainable parameters, in a fixed enumeration order.
  std::vector<NamedTensor<T>> parameters() {
    std::vector<NamedTensor<T>> out;
    for (std::size_t i = 0; i < a_convs_.size(); ++i) {
      const std::string p = "audio.conv" + std::to_string(i);
      out.push_back({p + ".weight", a_convs_[i].weight});
      out.push_back({p + ".bias", a_convs_[i].bias});
      out.push_back({"audio.bn" + std::to_string(i) + ".gamma", a_bns_[i].gamma});
      out.push_back({"audio.bn" + std::to_string(i) + ".beta", a_bns_[i].beta});
    }
    for (std::size_t i = 0; i < v_blocks_.size(); ++i) {
      const std::string p = "visual.block" + std::to_string(i);
      auto& blk = v_blocks_[i];
      out.push_back({p + ".conv1.weight", blk.conv1.weight});
      out.push_back({p + ".conv1.bias", blk.conv1.bias});
      out.push_back({p + ".bn1.gamma", blk.bn1.gamma});
      out.push_back({p + ".bn1.beta", blk.bn1.beta});
      if (blk.conv2) {
        out.push_back({p + ".conv2.weight", blk.conv2->weight});
        out.push_back({p + ".conv2.bias", blk.conv2->bias});
        out.push_back({p + ".bn2.gamma", blk.bn2->gamma});
        out.push_back({p + ".bn2.beta", blk.bn2->beta});
      }
      if (blk.proj) {
        out.push_back({p + ".proj.weight", blk.proj->weight});
        out.push_back({p + ".proj.bias", blk.proj->bias});
      }
    }
    out.push_back({"att.audio.weight", att_audio_->weight});
    out.push_back({"att.audio.bias", att_audio_->bias});
    out.push_back({"att.visual.weight", att_visual_->weight});
    out.push_back({"att.visual.bias", att_visual_->bias});
    out.push_back({"cls.weight", cls_w_});
    out.push_back({"cls.bias", cls_b_});
    return out;
  }

  /// Parameters plus batchnorm running statistics; the full checkpoint state.
  std::vector<NamedTensor<T>> state_tensors() {
    std::vector<NamedTensor<T>> out = parameters();
    for (std::size_t i = 0; i < a_bns_.size(); ++i) {
      out.push_back({"audio.bn" + std::to_string(i) + ".running_mean", a_bns_[i].running_mean});
      out.push_back({"audio.bn" + std::to_string(i) + ".running_var", a_bns_[i].running_var});
    }
    for (std::size_t i = 0; i < v_blocks_.size(); ++i) {
      const std::string p = "visual.block" + std::to_string(i);
      auto& blk = v_blocks_[i];
      out.push_back({p + ".bn1.running_mean", blk.bn1.running_mean});
      out.push_back({p + ".bn1.running_var", blk.bn1.running_var});
      if (blk.bn2) {
        out.push_back({p + ".bn2.running_mean", blk.bn2->running_mean});
        out.push_back({p + ".bn2.running_var", blk.bn2->running_var});
      }
    }
    return out;
  }

  Tensor<T>& classifier_weight() { return cls_w_; }
  Tensor<T>& classifier_bias() { return cls_b_; }
  Conv1d<T>& attention_audio_embed() { return *att_audio_; }
  Conv3d<T>& attention_visual_embed() { return *att_visual_; }

 private:
  struct VisBlock {
    Conv3d<T> conv1;
    BatchNorm<T> bn1;
    std::optional<Conv3d<T>> conv2;
    std::optional<BatchNorm<T>> bn2;
    std::optional<Conv3d<T>> proj;
    bool pool_after = false;
  };

  // Desk recipe: three stride-4/2/2 conv1d+pool stages down to T'=16, and
  // three stride-2 3-D residual blocks down to 4x4 with a 8->16 temporal
  // interpolation at the end.
  void build_desk(Rng& rng) {
    a_convs_.emplace_back(1, 4, 7, 4, 3, rng);
    a_convs_.emplace_back(4, 8, 5, 2, 2, rng);
    a_convs_.emplace_back(8, 8, 3, 2, 1, rng);
    a_pool_ = {4, 2, 2};
    for (auto& cv : a_convs_) a_bns_.emplace_back(cv.out_ch);

    const std::size_t ch[] = {1, 4, 8, 8};
    for (int i = 0; i < 3; ++i) {
      VisBlock blk{
          Conv3d<T>(ch[i], ch[i + 1], 3, 3, 3, 1, 2, 2, 1, 1, 1, rng),
          BatchNorm<T>(ch[i + 1]),
          std::nullopt,
          std::nullopt,
          Conv3d<T>(ch[i], ch[i + 1], 1, 1, 1, 1, 2, 2, 0, 0, 0, rng),
          false};
      v_blocks_.push_back(std::move(blk));
    }
  }

  // Paper recipe: five conv1d blocks (kernels 7,5,5,3,3; pools 3,3,5,5,-)
  // with adaptive pooling to T'=128, and three two-conv residual blocks with
  // channel widths 8/12/15, spatial stride-2 pooling after each (224 -> 28),
  // then temporal interpolation 30 -> 128.
  void build_paper(Rng& rng) {
    const std::size_t ach[] = {1, 4, 8, 12, 15, 15};
    const std::size_t ak[] = {7, 5, 5, 3, 3};
    a_pool_ = {3, 3, 5, 5, 1};
    for (int i = 0; i < 5; ++i) {
      a_convs_.emplace_back(ach[i], ach[i + 1], ak[i], 1, ak[i] / 2, rng);
      a_bns_.emplace_back(ach[i + 1]);
    }
    const std::size_t vch[] = {3, 8, 12, 15};
    for (int i = 0; i < 3; ++i) {
      VisBlock blk{
          Conv3d<T>(vch[i], vch[i + 1], 3, 3, 3, 1, 1, 1, 1, 1, 1, rng),
          BatchNorm<T>(vch[i + 1]),
          Conv3d<T>(vch[i + 1], vch[i + 1], 3, 3, 3, 1, 1, 1, 1, 1, 1, rng),
          BatchNorm<T>(vch[i + 1]),
          Conv3d<T>(vch[i], vch[i + 1], 1, 1, 1, 1, 1, 1, 0, 0, 0, rng),
          true};
      v_blocks_.push_back(std::move(blk));
    }
  }

  ModelConfig cfg_;
  bool training_ = true;
  std::vector<Conv1d<T>> a_convs_;
  std::vector<BatchNorm<T>> a_bns_;
  std::vector<std::size_t> a_pool_;
  std::vector<VisBlock> v_blocks_;
  std::optional<Conv1d<T>> att_audio_;
  std::optional<Conv3d<T>> att_visual_;
  Tensor<T> cls_w_, cls_b_;
};

}  // namespace avfg
