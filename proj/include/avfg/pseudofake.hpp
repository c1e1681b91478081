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

// Temporally-local pseudo-fake synthesis: replace a random contiguous frame
// segment of the audio stream, the visual stream, or both with the
// corresponding segment of a donor clip, and label the result fake.
//
// Conventions (1-based, matching the sampling bounds):
//   segment length l is uniform over [l_min, l_max] with
//     l_min = clamp(round_half_up(r_min*n), 2, n)
//     l_max = clamp(round_half_up(r_max*n), 2, n)
//   start g is uniform over [1, n-l]; when l == n the range degenerates to
//     g = 1 (full replacement)
//   the replaced window holds exactly l elements, indices g .. g+l-1
// Audio indices follow the frame window through the fixed samples-per-frame
// ratio: frames g..g+l-1 map to samples (g-1)*spf+1 .. (g+l-1)*spf.

#include <cmath>
#include <cstdint>
#include <optional>
#include <string>

#include "avfg/clip_io.hpp"
#include "avfg/rng.hpp"
#include "avfg/tensor.hpp"

namespace avfg {

enum class SpliceMode { audio_only, visual_only, both };

inline const char* splice_mode_name(SpliceMode m) {
  switch (m) {
    case SpliceMode::audio_only: return "audio_only";
    case SpliceMode::visual_only: return "visual_only";
    default: return "both";
  }
}

struct AugmentConfig {
  double r_min = 1e-9;  // "~0": the minimum length clamp of 2 frames applies
  double r_max = 1.0;
  double apply_probability = 0.5;
  double w_audio = 1.0, w_visual = 1.0, w_both = 1.0;

  void validate() const {
    if (!(r_min > 0.0) || r_min > r_max || r_max > 1.0)
      throw std::invalid_argument("AugmentConfig: need 0 < r_min <= r_max <= 1");
    if (apply_probability < 0.0 || apply_probability > 1.0)
      throw std::invalid_argument("AugmentConfig: apply_probability outside [0,1]");
    if (w_audio < 0.0 || w_visual < 0.0 || w_both < 0.0 ||
        w_audio + w_visual + w_both <= 0.0)
      throw std::invalid_argument("AugmentConfig: invalid mode weights");
  }

  std::size_t l_min(std::size_t n) const {
    const auto r = static_cast<std::size_t>(std::floor(r_min * static_cast<double>(n) + 0.5));
    return std::clamp<std::size_t>(std::max<std::size_t>(r, 2), 2, n);
  }
  std::size_t l_max(std::size_t n) const {
    const auto r = static_cast<std::size_t>(std::floor(r_max * static_cast<double>(n) + 0.5));
    return std::clamp<std::size_t>(std::max<std::size_t>(r, 2), 2, n);
  }
};

struct PseudoFakeSpec {
  SpliceMode mode = SpliceMode::both;
  std::size_t n = 0;  // sequence length in frames
  std::size_t l = 0;  // segment length
  std::size_t g = 0;  // 1-based start index
  std::string donor_id;
};

/// Draw (l, g, mode). Returns nothing when the sequence is too short to host
/// the minimum segment; callers keep such clips unmodified.
inline std::optional<PseudoFakeSpec> sample_spec(std::size_t n, const AugmentConfig& cfg,
                                                 Rng& rng) {
  cfg.validate();
  if (n < 2) return std::nullopt;  // n below the l_min clamp
  const std::size_t lmin = cfg.l_min(n), lmax = cfg.l_max(n);
  PseudoFakeSpec spec;
  spec.n = n;
  spec.l = static_cast<std::size_t>(rng.uniform_int(static_cast<std::int64_t>(lmin),
                                                    static_cast<std::int64_t>(lmax)));
  spec.g = spec.l >= n ? 1
                       : static_cast<std::size_t>(rng.uniform_int(
                             1, static_cast<std::int64_t>(n - spec.l)));
  const double total = cfg.w_audio + cfg.w_visual + cfg.w_both;
  const double draw = rng.uniform(0.0, total);
  spec.mode = draw < cfg.w_audio                ? SpliceMode::audio_only
              : draw < cfg.w_audio + cfg.w_visual ? SpliceMode::visual_only
                                                  : SpliceMode::both;
  return spec;
}

/// Replace rows [g, g+l-1] (1-based) along the leading axis of `target` with
/// the corresponding rows of `donor`. Pure: inputs are untouched.
template <typename T>
Tensor<T> splice_rows(const Tensor<T>& target, const Tensor<T>& donor, std::size_t g,
                      std::size_t l) {
  if (target.shape() != donor.shape())
    throw ShapeError("splice: sequence shapes differ, " + shape_str(target.shape()) +
                     " vs " + shape_str(donor.shape()));
  const std::size_t n = target.shape()[0];
  if (g < 1 || l < 1 || g + l - 1 > n)
    throw std::invalid_argument("splice: window [" + std::to_string(g) + "," +
                                std::to_string(g + l - 1) + "] outside sequence of length " +
                                std::to_string(n));
  Tensor<T> out = target.clone();
  const std::size_t row = target.numel() / n;
  std::copy(donor.data() + (g - 1) * row, donor.data() + (g - 1 + l) * row,
            out.data() + (g - 1) * row);
  return out;
}

struct AugmentOutcome {
  ClipPair clip;
  Label label = Label::real;
  bool applied = false;
  bool rejected = false;  // sequence too short for the configured l_min
  PseudoFakeSpec spec;
};

/// With probability apply_probability, splice a donor segment into the clip
/// (shared frame window across streams; mode chooses which streams change)
/// and label the result fake; otherwise return the clip untouched.
inline AugmentOutcome augment_pair(const ClipPair& clip, const ClipPair& donor,
                                   const AugmentConfig& cfg, Rng& rng) {
  cfg.validate();
  if (clip.audio.shape() != donor.audio.shape() ||
      clip.visual.shape() != donor.visual.shape())
    throw ShapeError("augment_pair: clip and donor geometry differ (audio " +
                     shape_str(clip.audio.shape()) + " vs " + shape_str(donor.audio.shape()) +
                     ", visual " + shape_str(clip.visual.shape()) + " vs " +
                     shape_str(donor.visual.shape()) + ")");
  const std::size_t frames = clip.visual.shape()[0];
  if (clip.audio.shape()[0] % frames != 0)
    throw ShapeError("augment_pair: audio length is not a whole number of frames");
  AugmentOutcome out;
  out.clip = clip;
  out.label = clip.label;
  if (!rng.bernoulli(cfg.apply_probability)) return out;
  std::optional<PseudoFakeSpec> spec = sample_spec(frames, cfg, rng);
  if (!spec) {
    out.rejected = true;
    return out;
  }
  spec->donor_id = donor.id;
  const std::size_t spf = clip.audio.shape()[0] / frames;
  ClipPair spliced = clip;
  if (spec->mode == SpliceMode::audio_only || spec->mode == SpliceMode::both)
    spliced.audio =
        splice_rows(clip.audio, donor.audio, (spec->g - 1) * spf + 1, spec->l * spf);
  if (spec->mode == SpliceMode::visual_only || spec->mode == SpliceMode::both)
    spliced.visual = splice_rows(clip.visual, donor.visual, spec->g, spec->l);
  spliced.label = Label::fake;
  spliced.provenance = Provenance::pseudo_fake;
  out.clip = std::move(spliced);
  out.label = Label::fake;
  out.applied = true;
  out.spec = *spec;
  return out;
}

}  // namespace avfg
