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

// Clip container format, little-endian throughout:
//
//   offset 0   magic "AVFG" (4 bytes)
//   offset 4   format version, u16 (currently 1)
//   offset 6   label, u8 (0 real, 1 fake)
//   offset 7   provenance, u8 (0 generated_real, 1 generated_fake, 2 pseudo_fake)
//   offset 8   audio stream:  rank u32, extents u32[rank], f32 data
//              visual stream: rank u32, extents u32[rank], f32 data
//   trailer    CRC32 (IEEE) over all payload bytes [8, size-4)
//
// Every failure mode has its own error code so callers can distinguish a
// truncated download from silent corruption.

#include <cstdint>
#include <cstring>
#include <fstream>
#include <stdexcept>
#include <string>
#include <vector>

#include "avfg/tensor.hpp"

namespace avfg {

enum class Label : std::uint8_t { real = 0, fake = 1 };
enum class Provenance : std::uint8_t {
  generated_real = 0,
  generated_fake = 1,
  pseudo_fake = 2
};

inline int label_value(Label l) { return l == Label::fake ? 1 : 0; }
inline const char* label_name(Label l) { return l == Label::fake ? "fake" : "real"; }
inline const char* provenance_name(Provenance p) {
  switch (p) {
    case Provenance::generated_real: return "generated_real";
    case Provenance::generated_fake: return "generated_fake";
    default: return "pseudo_fake";
  }
}

/// One aligned waveform + frame-sequence sample.
struct ClipPair {
  std::string id;
  Tensor<float> audio;   // (T^a, C^a), values in [-1, 1]
  Tensor<float> visual;  // (T^v, C^v, H^v, W^v), values in [0, 1]
  Label label = Label::real;
  Provenance provenance = Provenance::generated_real;

  std::size_t frames() const { return visual.shape()[0]; }
  std::size_t samples_per_frame() const { return audio.shape()[0] / visual.shape()[0]; }
};

enum class ClipIoCode {
  ok = 0,
  bad_magic,
  bad_version,
  truncated,
  bad_crc,
  bad_header,
  io_failure
};

inline const char* clip_io_code_name(ClipIoCode c) {
  switch (c) {
    case ClipIoCode::ok: return "ok";
    case ClipIoCode::bad_magic: return "bad_magic";
    case ClipIoCode::bad_version: return "bad_version";
    case ClipIoCode::truncated: return "truncated";
    case ClipIoCode::bad_crc: return "bad_crc";
    case ClipIoCode::bad_header: return "bad_header";
    default: return "io_failure";
  }
}

class ClipIoError : public std::runtime_error {
 public:
  ClipIoError(ClipIoCode code, const std::string& path, const std::string& detail)
      : std::runtime_error("clip io [" + std::string(clip_io_code_name(code)) + "] " +
                           path + ": " + detail),
        code_(code) {}
  ClipIoCode code() const { return code_; }

 private:
  ClipIoCode code_;
};

// IEEE CRC32 (reflected, poly 0xEDB88320), the zlib polynomial.
inline std::uint32_t crc32(const std::uint8_t* data, std::size_t len,
                           std::uint32_t seed = 0) {
  static const auto table = [] {
    std::vector<std::uint32_t> t(256);
    for (std::uint32_t i = 0; i < 256; ++i) {
      std::uint32_t c = i;
      for (int k = 0; k < 8; ++k) c = (c & 1) ? 0xEDB88320u ^ (c >> 1) : c >> 1;
      t[i] = c;
    }
    return t;
  }();
  std::uint32_t c = seed ^ 0xFFFFFFFFu;
  for (std::size_t i = 0; i < len; ++i) c = table[(c ^ data[i]) & 0xFFu] ^ (c >> 8);
  return c ^ 0xFFFFFFFFu;
}

namespace detail {

inline void put_u16(std::vector<std::uint8_t>& out, std::uint16_t v) {
  out.push_back(static_cast<std::uint8_t>(v & 0xFF));
  out.push_back(static_cast<std::uint8_t>(v >> 8));
}

inline void put_u32(std::vector<std::uint8_t>& out, std::uint32_t v) {
  for (int i = 0; i < 4; ++i) out.push_back(static_cast<std::uint8_t>((v >> (8 * i)) & 0xFF));
}

inline void put_f32(std::vector<std::uint8_t>& out, float v) {
  std::uint32_t bits;
  std::memcpy(&bits, &v, 4);
  put_u32(out, bits);
}

class Reader {
 public:
  Reader(const std::uint8_t* p, std::size_t n, const std::string& path)
      : p_(p), n_(n), path_(path) {}

  std::uint16_t u16() {
    need(2);
    const std::uint16_t v = static_cast<std::uint16_t>(p_[pos_] | (p_[pos_ + 1] << 8));
    pos_ += 2;
    return v;
  }
  std::uint32_t u32() {
    need(4);
    std::uint32_t v = 0;
    for (int i = 0; i < 4; ++i) v |= static_cast<std::uint32_t>(p_[pos_ + i]) << (8 * i);
    pos_ += 4;
    return v;
  }
  std::uint8_t u8() {
    need(1);
    return p_[pos_++];
  }
  float f32() {
    const std::uint32_t bits = u32();
    float v;
    std::memcpy(&v, &bits, 4);
    return v;
  }
  std::size_t pos() const { return pos_; }
  std::size_t remaining() const { return n_ - pos_; }

 private:
  void need(std::size_t k) const {
    if (pos_ + k > n_)
      throw ClipIoError(ClipIoCode::truncated, path_,
                        "payload ends after " + std::to_string(n_) + " bytes");
  }
  const std::uint8_t* p_;
  std::size_t n_, pos_ = 0;
  std::string path_;
};

inline void put_stream(std::vector<std::uint8_t>& out, const Tensor<float>& t) {
  put_u32(out, static_cast<std::uint32_t>(t.rank()));
  for (std::size_t e : t.shape()) put_u32(out, static_cast<std::uint32_t>(e));
  for (std::size_t i = 0; i < t.numel(); ++i) put_f32(out, t[i]);
}

inline Tensor<float> read_stream(Reader& r, const std::string& path) {
  const std::uint32_t rank = r.u32();
  if (rank == 0 || rank > 8)
    throw ClipIoError(ClipIoCode::bad_header, path,
                      "stream rank " + std::to_string(rank) + " out of range");
  Shape shape(rank);
  std::size_t numel = 1;
  for (std::uint32_t d = 0; d < rank; ++d) {
    shape[d] = r.u32();
    if (shape[d] == 0)
      throw ClipIoError(ClipIoCode::bad_header, path, "zero extent in stream shape");
    if (shape[d] > (1u << 24) || numel > (1ull << 32))
      throw ClipIoError(ClipIoCode::bad_header, path, "implausible stream shape");
    numel *= shape[d];
  }
  if (r.remaining() < numel * 4)
    throw ClipIoError(ClipIoCode::truncated, path, "stream data missing");
  std::vector<float> data(numel);
  for (std::size_t i = 0; i < numel; ++i) data[i] = r.f32();
  return Tensor<float>::from(shape, std::move(data));
}

}  // namespace detail

constexpr std::uint16_t kClipFormatVersion = 1;

inline void write_clip(const std::string& path, const ClipPair& clip) {
  std::vector<std::uint8_t> buf;
  buf.reserve(16 + 4 * (clip.audio.numel() + clip.visual.numel()));
  buf.push_back('A');
  buf.push_back('V');
  buf.push_back('F');
  buf.push_back('G');
  detail::put_u16(buf, kClipFormatVersion);
  buf.push_back(static_cast<std::uint8_t>(clip.label));
  buf.push_back(static_cast<std::uint8_t>(clip.provenance));
  detail::put_stream(buf, clip.audio);
  detail::put_stream(buf, clip.visual);
  const std::uint32_t crc = crc32(buf.data() + 8, buf.size() - 8);
  detail::put_u32(buf, crc);
  std::ofstream f(path, std::ios::binary | std::ios::trunc);
  if (!f)
    throw ClipIoError(ClipIoCode::io_failure, path, "cannot open for writing");
  f.write(reinterpret_cast<const char*>(buf.data()),
          static_cast<std::streamsize>(buf.size()));
  if (!f) throw ClipIoError(ClipIoCode::io_failure, path, "short write");
}

inline ClipPair read_clip(const std::string& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw ClipIoError(ClipIoCode::io_failure, path, "cannot open");
  std::vector<std::uint8_t> buf((std::istreambuf_iterator<char>(f)),
                                std::istreambuf_iterator<char>());
  if (buf.size() < 12)
    throw ClipIoError(ClipIoCode::truncated, path,
                      "file holds only " + std::to_string(buf.size()) + " bytes");
  if (buf[0] != 'A' || buf[1] != 'V' || buf[2] != 'F' || buf[3] != 'G')
    throw ClipIoError(ClipIoCode::bad_magic, path, "magic mismatch");
  detail::Reader r(buf.data() + 4, buf.size() - 4, path);
  const std::uint16_t version = r.u16();
  if (version != kClipFormatVersion)
    throw ClipIoError(ClipIoCode::bad_version, path,
                      "format version " + std::to_string(version));
  const std::uint8_t label = r.u8();
  const std::uint8_t prov = r.u8();
  if (label > 1 || prov > 2)
    throw ClipIoError(ClipIoCode::bad_header, path, "label/provenance out of range");
  const std::uint32_t stored_crc = [&] {
    std::uint32_t v = 0;
    for (int i = 0; i < 4; ++i)
      v |= static_cast<std::uint32_t>(buf[buf.size() - 4 + i]) << (8 * i);
    return v;
  }();
  const std::uint32_t actual_crc = crc32(buf.data() + 8, buf.size() - 12);
  if (stored_crc != actual_crc)
    throw ClipIoError(ClipIoCode::bad_crc, path, "payload checksum mismatch");
  detail::Reader payload(buf.data() + 8, buf.size() - 12, path);
  ClipPair clip;
  clip.audio = detail::read_stream(payload, path);
  clip.visual = detail::read_stream(payload, path);
  if (payload.remaining() != 0)
    throw ClipIoError(ClipIoCode::bad_header, path, "trailing bytes after streams");
  if (clip.audio.rank() != 2 || clip.visual.rank() != 4)
    throw ClipIoError(ClipIoCode::bad_header, path, "unexpected stream ranks");
  clip.label = static_cast<Label>(label);
  clip.provenance = static_cast<Provenance>(prov);
  return clip;
}

}  // namespace avfg
