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

// Model checkpoints: versioned header plus named f32 tensors, in the same
// little-endian framing as the clip format (magic "AVCK", u16 version,
// u32 tensor count, then per tensor a length-prefixed name, rank, extents and
// raw f32 data), with a trailing CRC32 over everything after the header.

#include <cstdint>
#include <fstream>
#include <map>
#include <string>
#include <vector>

#include "avfg/clip_io.hpp"
#include "avfg/tensor.hpp"

namespace avfg {

constexpr std::uint16_t kCheckpointVersion = 1;

template <typename T>
inline void save_checkpoint(const std::string& path,
                            const std::vector<NamedTensor<T>>& tensors) {
  std::vector<std::uint8_t> buf;
  buf.push_back('A');
  buf.push_back('V');
  buf.push_back('C');
  buf.push_back('K');
  detail::put_u16(buf, kCheckpointVersion);
  detail::put_u32(buf, static_cast<std::uint32_t>(tensors.size()));
  for (const auto& [name, tensor] : tensors) {
    detail::put_u32(buf, static_cast<std::uint32_t>(name.size()));
    for (char ch : name) buf.push_back(static_cast<std::uint8_t>(ch));
    detail::put_u32(buf, static_cast<std::uint32_t>(tensor.rank()));
    for (std::size_t e : tensor.shape()) detail::put_u32(buf, static_cast<std::uint32_t>(e));
    for (std::size_t i = 0; i < tensor.numel(); ++i)
      detail::put_f32(buf, static_cast<float>(tensor[i]));
  }
  const std::uint32_t crc = crc32(buf.data() + 6, buf.size() - 6);
  detail::put_u32(buf, crc);
  std::ofstream f(path, std::ios::binary | std::ios::trunc);
  if (!f) throw ClipIoError(ClipIoCode::io_failure, path, "cannot open for writing");
  f.write(reinterpret_cast<const char*>(buf.data()),
          static_cast<std::streamsize>(buf.size()));
  if (!f) throw ClipIoError(ClipIoCode::io_failure, path, "short write");
}

inline std::map<std::string, Tensor<float>> load_checkpoint(const std::string& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw ClipIoError(ClipIoCode::io_failure, path, "cannot open");
  std::vector<std::uint8_t> buf((std::istreambuf_iterator<char>(f)),
                                std::istreambuf_iterator<char>());
  if (buf.size() < 14) throw ClipIoError(ClipIoCode::truncated, path, "too small");
  if (buf[0] != 'A' || buf[1] != 'V' || buf[2] != 'C' || buf[3] != 'K')
    throw ClipIoError(ClipIoCode::bad_magic, path, "magic mismatch");
  detail::Reader header(buf.data() + 4, 2, path);
  if (header.u16() != kCheckpointVersion)
    throw ClipIoError(ClipIoCode::bad_version, path, "unsupported checkpoint version");
  const std::uint32_t stored_crc = [&] {
    std::uint32_t v = 0;
    for (int i = 0; i < 4; ++i)
      v |= static_cast<std::uint32_t>(buf[buf.size() - 4 + i]) << (8 * i);
    return v;
  }();
  if (stored_crc != crc32(buf.data() + 6, buf.size() - 10))
    throw ClipIoError(ClipIoCode::bad_crc, path, "checksum mismatch");
  detail::Reader r(buf.data() + 6, buf.size() - 10, path);
  const std::uint32_t count = r.u32();
  std::map<std::string, Tensor<float>> out;
  for (std::uint32_t k = 0; k < count; ++k) {
    const std::uint32_t name_len = r.u32();
    if (name_len > 4096)
      throw ClipIoError(ClipIoCode::bad_header, path, "implausible tensor name length");
    std::string name;
    name.reserve(name_len);
    for (std::uint32_t i = 0; i < name_len; ++i)
      name.push_back(static_cast<char>(r.u8()));
    const std::uint32_t rank = r.u32();
    if (rank == 0 || rank > 8)
      throw ClipIoError(ClipIoCode::bad_header, path, "tensor rank out of range");
    Shape shape(rank);
    std::size_t numel = 1;
    for (std::uint32_t d = 0; d < rank; ++d) {
      shape[d] = r.u32();
      if (shape[d] == 0 || numel > (1ull << 32))
        throw ClipIoError(ClipIoCode::bad_header, path, "bad tensor shape");
      numel *= shape[d];
    }
    std::vector<float> data(numel);
    for (std::size_t i = 0; i < numel; ++i) data[i] = r.f32();
    out.emplace(std::move(name), Tensor<float>::from(shape, std::move(data)));
  }
  return out;
}

/// Copy checkpoint values into the model's named state tensors. Missing or
/// mismatched entries raise bad_header.
template <typename T>
inline void restore_state(const std::string& path,
                          std::vector<NamedTensor<T>> state,
                          const std::map<std::string, Tensor<float>>& loaded) {
  for (auto& [name, tensor] : state) {
    auto it = loaded.find(name);
    if (it == loaded.end())
      throw ClipIoError(ClipIoCode::bad_header, path, "missing tensor " + name);
    if (it->second.shape() != tensor.shape())
      throw ClipIoError(ClipIoCode::bad_header, path,
                        "shape mismatch for " + name + ": checkpoint " +
                            shape_str(it->second.shape()) + " vs model " +
                            shape_str(tensor.shape()));
    for (std::size_t i = 0; i < tensor.numel(); ++i)
      tensor[i] = static_cast<T>(it->second[i]);
  }
}

}  // namespace avfg
