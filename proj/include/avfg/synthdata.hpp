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

// Synthetic audio-visual corpus with a planted, spatially local cross-modal
// dependency. Real clips drive the intensity of one image patch with the
// amplitude envelope of the audio track; fake clips drive the patch with
// either an independent envelope or a time-shifted copy, so the only
// real/fake signal is the (de)synchronization between one patch and the
// waveform.
//
// Splits:
//   train/test    patch positions on even pixel offsets, carrier band A,
//                 fakes per spec.fake_style
//   shifted       patch positions on odd pixel offsets (never colliding with
//                 a train position), carrier band B, fakes per
//                 spec.shift_fake_style
// The shifted split plays the role of a cross-condition evaluation: same
// task, different signal appearance.
//
// Generation is a pure function of (spec, seed); each clip derives its own
// seed so parallel generation stays deterministic.

#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <map>
#include <string>
#include <vector>

#include <json.hpp>

#include "avfg/clip_io.hpp"
#include "avfg/metrics.hpp"
#include "avfg/parallel.hpp"
#include "avfg/rng.hpp"
#include "avfg/tensor.hpp"

namespace avfg {

enum class SplitKind { train, test, shifted };
enum class FakeStyle { independent, timeshift };

inline const char* split_name(SplitKind s) {
  switch (s) {
    case SplitKind::train: return "train";
    case SplitKind::test: return "test";
    default: return "shifted";
  }
}

inline const char* fake_style_name(FakeStyle s) {
  return s == FakeStyle::independent ? "independent" : "timeshift";
}

struct CorpusSpec {
  // clip counts per split and label
  std::size_t train_real = 100, train_fake = 100;
  std::size_t test_real = 30, test_fake = 30;
  std::size_t shifted_real = 30, shifted_fake = 30;
  // geometry
  std::size_t frames = 24;
  std::size_t samples_per_frame = 512;
  std::size_t channels = 1;
  std::size_t height = 32, width = 32;
  std::size_t patch = 8;
  // signal family
  double noise = 0.05;                       // sigma for patch/audio noise
  double carrier_lo = 0.05, carrier_hi = 0.09;  // cycles per sample
  double shift_carrier_lo = 0.11, shift_carrier_hi = 0.16;
  FakeStyle fake_style = FakeStyle::independent;
  FakeStyle shift_fake_style = FakeStyle::timeshift;
  std::uint64_t seed = 0;

  std::size_t audio_len() const { return frames * samples_per_frame; }

  void validate() const {
    if (patch > height || patch > width)
      throw std::invalid_argument("CorpusSpec: patch exceeds frame bounds");
    if (frames < 4) throw std::invalid_argument("CorpusSpec: need at least 4 frames");
    if (samples_per_frame < 16)
      throw std::invalid_argument("CorpusSpec: need at least 16 samples per frame");
    if (noise < 0.0) throw std::invalid_argument("CorpusSpec: negative noise");
  }
};

struct ClipMeta {
  std::string id;
  std::string file;
  Label label = Label::real;
  Provenance provenance = Provenance::generated_real;
  std::size_t patch_x = 0, patch_y = 0;  // top-left pixel of the driven patch
  double carrier = 0.0;
  std::string style = "real";  // "real", "independent" or "timeshift"
  double correlation = 0.0;    // patch series vs extracted audio envelope
  std::vector<double> planted_envelope;  // per frame; not serialized
};

struct CorpusRecord {
  ClipMeta meta;
  ClipPair clip;
};

struct Corpus {
  std::size_t frames = 0, samples_per_frame = 0;
  std::map<std::string, std::vector<CorpusRecord>> splits;

  const std::vector<CorpusRecord>& split(const std::string& name) const {
    auto it = splits.find(name);
    if (it == splits.end())
      throw std::invalid_argument("corpus has no split named '" + name + "'");
    return it->second;
  }
};

// ---------------------------------------------------------------------------
// Signal helpers

/// Mean absolute amplitude per frame-aligned window; the audio-side envelope
/// used by the generation post-check.
inline std::vector<double> audio_envelope(const Tensor<float>& audio, std::size_t frames) {
  const std::size_t total = audio.shape()[0];
  const std::size_t spf = total / frames;
  std::vector<double> env(frames, 0.0);
  for (std::size_t t = 0; t < frames; ++t) {
    double acc = 0.0;
    for (std::size_t k = 0; k < spf; ++k)
      acc += std::fabs(static_cast<double>(audio[(t * spf + k) * audio.shape()[1]]));
    env[t] = acc / static_cast<double>(spf);
  }
  return env;
}

/// Mean intensity of the driven patch per frame (channel 0).
inline std::vector<double> patch_mean_series(const Tensor<float>& visual, std::size_t px,
                                             std::size_t py, std::size_t patch) {
  const std::size_t frames = visual.shape()[0], c = visual.shape()[1];
  const std::size_t h = visual.shape()[2], w = visual.shape()[3];
  std::vector<double> series(frames, 0.0);
  for (std::size_t t = 0; t < frames; ++t) {
    double acc = 0.0;
    for (std::size_t y = py; y < py + patch; ++y)
      for (std::size_t x = px; x < px + patch; ++x)
        acc += static_cast<double>(visual[((t * c + 0) * h + y) * w + x]);
    series[t] = acc / static_cast<double>(patch * patch);
  }
  return series;
}

/// Cross-modal consistency score of a clip given its patch location.
inline double clip_av_correlation(const ClipPair& clip, std::size_t px, std::size_t py,
                                  std::size_t patch) {
  return pearson(patch_mean_series(clip.visual, px, py, patch),
                 audio_envelope(clip.audio, clip.visual.shape()[0]));
}

namespace detail {

// Smoothed random envelope in [0.15, 0.85]: iid uniforms, centered moving
// average of width 3, then min-max rescale. Rough enough that shifted copies
// decorrelate after a few frames.
inline std::vector<double> make_envelope(std::size_t frames, Rng& rng) {
  std::vector<double> raw(frames);
  for (double& v : raw) v = rng.uniform();
  std::vector<double> smooth(frames);
  for (std::size_t t = 0; t < frames; ++t) {
    double acc = raw[t];
    double cnt = 1.0;
    if (t > 0) {
      acc += raw[t - 1];
      cnt += 1.0;
    }
    if (t + 1 < frames) {
      acc += raw[t + 1];
      cnt += 1.0;
    }
    smooth[t] = acc / cnt;
  }
  double lo = smooth[0], hi = smooth[0];
  for (double v : smooth) {
    lo = std::min(lo, v);
    hi = std::max(hi, v);
  }
  std::vector<double> env(frames);
  for (std::size_t t = 0; t < frames; ++t) {
    const double unit = hi > lo ? (smooth[t] - lo) / (hi - lo) : 0.5;
    env[t] = 0.15 + 0.7 * unit;
  }
  return env;
}

struct SplitParams {
  double carrier_lo, carrier_hi;
  bool odd_parity;
  FakeStyle fake_style;
};

inline SplitParams split_params(const CorpusSpec& spec, SplitKind split) {
  if (split == SplitKind::shifted)
    return {spec.shift_carrier_lo, spec.shift_carrier_hi, true, spec.shift_fake_style};
  return {spec.carrier_lo, spec.carrier_hi, false, spec.fake_style};
}

// Patch positions sit on even pixel offsets for train/test and odd offsets
// for the shifted split, so a shifted-split location never equals any
// trainable one while staying inside the same spatial region.
inline std::size_t sample_offset(std::size_t limit, bool odd, Rng& rng) {
  if (odd) {
    const std::size_t n = (limit - 1) / 2 + 1;  // offsets 1,3,..,<=limit
    return 2 * static_cast<std::size_t>(rng.uniform_int(0, static_cast<std::int64_t>(n) - 1)) + 1;
  }
  const std::size_t n = limit / 2 + 1;  // offsets 0,2,..,<=limit
  return 2 * static_cast<std::size_t>(rng.uniform_int(0, static_cast<std::int64_t>(n) - 1));
}

inline ClipPair assemble_clip(const CorpusSpec& spec, const SplitParams& params,
                              const std::vector<double>& audio_env,
                              const std::vector<double>& patch_drive, ClipMeta& meta,
                              Rng& rng) {
  const std::size_t frames = spec.frames, spf = spec.samples_per_frame;
  const std::size_t total = frames * spf;
  // audio: per-frame envelope times a sinusoidal carrier, plus noise
  const double carrier = rng.uniform(params.carrier_lo, params.carrier_hi);
  const double phase = rng.uniform(0.0, 6.283185307179586);
  std::vector<float> audio(total);
  for (std::size_t k = 0; k < total; ++k) {
    const double env = audio_env[k / spf];
    double v = env * std::sin(6.283185307179586 * carrier * static_cast<double>(k) + phase);
    if (spec.noise > 0.0) v += 0.4 * spec.noise * rng.uniform(-1.0, 1.0);
    audio[k] = static_cast<float>(v);
  }
  // min-max normalize to [-1, 1]
  float lo = audio[0], hi = audio[0];
  for (float v : audio) {
    lo = std::min(lo, v);
    hi = std::max(hi, v);
  }
  if (hi > lo) {
    const float mid = (hi + lo) / 2.0f, half = (hi - lo) / 2.0f;
    for (float& v : audio) v = (v - mid) / half;
  } else {
    for (float& v : audio) v = 0.0f;
  }
  // visual: noisy background, one driven patch
  const std::size_t px = sample_offset(spec.width - spec.patch, params.odd_parity, rng);
  const std::size_t py = sample_offset(spec.height - spec.patch, params.odd_parity, rng);
  const std::size_t c = spec.channels, h = spec.height, w = spec.width;
  std::vector<float> visual(frames * c * h * w);
  for (std::size_t t = 0; t < frames; ++t)
    for (std::size_t ch = 0; ch < c; ++ch)
      for (std::size_t y = 0; y < h; ++y)
        for (std::size_t x = 0; x < w; ++x) {
          double v;
          const bool in_patch = y >= py && y < py + spec.patch && x >= px && x < px + spec.patch;
          if (in_patch) {
            v = patch_drive[t];
            if (spec.noise > 0.0) v += spec.noise * rng.uniform(-1.0, 1.0);
            v = std::clamp(v, 0.0, 1.0);
          } else {
            v = 0.25 + 0.5 * rng.uniform();
          }
          visual[((t * c + ch) * h + y) * w + x] = static_cast<float>(v);
        }
  ClipPair clip;
  clip.audio = Tensor<float>::from({total, 1}, std::move(audio));
  clip.visual = Tensor<float>::from({frames, c, h, w}, std::move(visual));
  meta.patch_x = px;
  meta.patch_y = py;
  meta.carrier = carrier;
  meta.correlation = clip_av_correlation(clip, px, py, spec.patch);
  return clip;
}

}  // namespace detail

/// Real clip: patch intensity follows the audio envelope.
inline CorpusRecord generate_real(const CorpusSpec& spec, Rng& rng,
                                  SplitKind split = SplitKind::train) {
  spec.validate();
  const detail::SplitParams params = detail::split_params(spec, split);
  ClipMeta meta;
  meta.label = Label::real;
  meta.provenance = Provenance::generated_real;
  meta.style = "real";
  const std::vector<double> env = detail::make_envelope(spec.frames, rng);
  meta.planted_envelope = env;
  ClipPair clip = detail::assemble_clip(spec, params, env, env, meta, rng);
  clip.label = Label::real;
  clip.provenance = Provenance::generated_real;
  return {meta, std::move(clip)};
}

/// Fake clip: patch intensity is desynchronized from the audio, either by an
/// independent envelope or by a circular time shift of at least 25% of the
/// clip.
inline CorpusRecord generate_fake(const CorpusSpec& spec, Rng& rng,
                                  SplitKind split = SplitKind::train) {
  spec.validate();
  const detail::SplitParams params = detail::split_params(spec, split);
  ClipMeta meta;
  meta.label = Label::fake;
  meta.provenance = Provenance::generated_fake;
  meta.style = fake_style_name(params.fake_style);
  const std::vector<double> env = detail::make_envelope(spec.frames, rng);
  std::vector<double> drive;
  if (params.fake_style == FakeStyle::independent) {
    drive = detail::make_envelope(spec.frames, rng);
  } else {
    const std::size_t n = spec.frames;
    const std::size_t lo = (n + 3) / 4;  // ceil(25%)
    const std::size_t hi = n - lo;
    const std::size_t shift = static_cast<std::size_t>(
        rng.uniform_int(static_cast<std::int64_t>(lo), static_cast<std::int64_t>(hi)));
    drive.resize(n);
    for (std::size_t t = 0; t < n; ++t) drive[t] = env[(t + shift) % n];
  }
  meta.planted_envelope = env;
  ClipPair clip = detail::assemble_clip(spec, params, env, drive, meta, rng);
  clip.label = Label::fake;
  clip.provenance = Provenance::generated_fake;
  return {meta, std::move(clip)};
}

// ---------------------------------------------------------------------------
// Corpus build / load

namespace detail {

inline std::uint64_t clip_seed(const CorpusSpec& spec, SplitKind split, std::size_t index) {
  return derive_seed(spec.seed,
                     (static_cast<std::uint64_t>(split) << 32) | static_cast<std::uint64_t>(index));
}

inline nlohmann::json meta_to_json(const ClipMeta& m) {
  return nlohmann::json{{"id", m.id},
                        {"file", m.file},
                        {"label", label_name(m.label)},
                        {"provenance", provenance_name(m.provenance)},
                        {"patch_x", m.patch_x},
                        {"patch_y", m.patch_y},
                        {"carrier", m.carrier},
                        {"style", m.style},
                        {"correlation", m.correlation}};
}

}  // namespace detail

/// Generate every split, write clip files plus manifest.json under out_dir,
/// and return the manifest. Deterministic per (spec, seed).
inline nlohmann::json build_corpus(const CorpusSpec& spec, const std::string& out_dir) {
  spec.validate();
  namespace fs = std::filesystem;
  fs::create_directories(fs::path(out_dir) / "clips");

  struct Job {
    SplitKind split;
    std::size_t index;  // within split
    bool fake;
    std::string id;
  };
  std::vector<Job> jobs;
  auto add_split = [&](SplitKind split, std::size_t reals, std::size_t fakes) {
    const std::string sname = split_name(split);
    std::size_t index = 0;
    for (std::size_t i = 0; i < reals; ++i, ++index)
      jobs.push_back({split, index, false,
                      sname + "_" + (index < 10 ? "000" : index < 100 ? "00" : index < 1000 ? "0" : "") +
                          std::to_string(index)});
    for (std::size_t i = 0; i < fakes; ++i, ++index)
      jobs.push_back({split, index, true,
                      sname + "_" + (index < 10 ? "000" : index < 100 ? "00" : index < 1000 ? "0" : "") +
                          std::to_string(index)});
  };
  add_split(SplitKind::train, spec.train_real, spec.train_fake);
  add_split(SplitKind::test, spec.test_real, spec.test_fake);
  add_split(SplitKind::shifted, spec.shifted_real, spec.shifted_fake);

  std::vector<ClipMeta> metas(jobs.size());
  std::vector<SplitKind> meta_split(jobs.size());
  std::string err;
  parallel_for(jobs.size(), [&](std::size_t j) {
    const Job& job = jobs[j];
    Rng rng(detail::clip_seed(spec, job.split, job.index));
    CorpusRecord rec = job.fake ? generate_fake(spec, rng, job.split)
                                : generate_real(spec, rng, job.split);
    rec.meta.id = job.id;
    rec.meta.file = "clips/" + job.id + ".avfg";
    rec.clip.id = job.id;
    write_clip((fs::path(out_dir) / rec.meta.file).string(), rec.clip);
    metas[j] = std::move(rec.meta);
    meta_split[j] = job.split;
  });

  nlohmann::json manifest;
  manifest["format"] = "avfg-corpus";
  manifest["version"] = 1;
  manifest["seed"] = spec.seed;
  manifest["geometry"] = {{"frames", spec.frames},
                          {"samples_per_frame", spec.samples_per_frame},
                          {"channels", spec.channels},
                          {"height", spec.height},
                          {"width", spec.width},
                          {"patch", spec.patch}};
  manifest["splits"] = nlohmann::json::object();
  for (const char* sname : {"train", "test", "shifted"})
    manifest["splits"][sname] = nlohmann::json::array();
  for (std::size_t j = 0; j < metas.size(); ++j)
    manifest["splits"][split_name(meta_split[j])].push_back(detail::meta_to_json(metas[j]));

  std::ofstream mf(fs::path(out_dir) / "manifest.json");
  if (!mf) throw ClipIoError(ClipIoCode::io_failure, out_dir, "cannot write manifest");
  mf << manifest.dump(2) << "\n";
  return manifest;
}

/// Load a corpus directory produced by build_corpus.
inline Corpus load_corpus(const std::string& dir) {
  namespace fs = std::filesystem;
  const fs::path manifest_path = fs::path(dir) / "manifest.json";
  std::ifstream mf(manifest_path);
  if (!mf) throw ClipIoError(ClipIoCode::io_failure, manifest_path.string(), "cannot open");
  nlohmann::json manifest;
  try {
    mf >> manifest;
  } catch (const nlohmann::json::exception& e) {
    throw ClipIoError(ClipIoCode::bad_header, manifest_path.string(), e.what());
  }
  Corpus corpus;
  corpus.frames = manifest.at("geometry").at("frames").get<std::size_t>();
  corpus.samples_per_frame =
      manifest.at("geometry").at("samples_per_frame").get<std::size_t>();
  for (const auto& [sname, entries] : manifest.at("splits").items()) {
    std::vector<CorpusRecord>& records = corpus.splits[sname];
    records.reserve(entries.size());
    for (const auto& e : entries) {
      CorpusRecord rec;
      rec.meta.id = e.at("id").get<std::string>();
      rec.meta.file = e.at("file").get<std::string>();
      rec.meta.label = e.at("label").get<std::string>() == "fake" ? Label::fake : Label::real;
      const std::string prov = e.at("provenance").get<std::string>();
      rec.meta.provenance = prov == "generated_fake" ? Provenance::generated_fake
                            : prov == "pseudo_fake"  ? Provenance::pseudo_fake
                                                     : Provenance::generated_real;
      rec.meta.patch_x = e.at("patch_x").get<std::size_t>();
      rec.meta.patch_y = e.at("patch_y").get<std::size_t>();
      rec.meta.carrier = e.at("carrier").get<double>();
      rec.meta.style = e.at("style").get<std::string>();
      rec.meta.correlation = e.at("correlation").get<double>();
      rec.clip = read_clip((fs::path(dir) / rec.meta.file).string());
      rec.clip.id = rec.meta.id;
      records.push_back(std::move(rec));
    }
  }
  return corpus;
}

}  // namespace avfg
