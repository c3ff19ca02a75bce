/*
 * Copyright 2026 The flowclas Authors.
 *
 * Licensed under the Apache License, Version 2.0 (the "License");
 * you may not use this file except in compliance with the License.
 * You may obtain a copy of the License at
 *
 *     https://www.apache.org/licenses/LICENSE-2.0
 *
 * Unless required by applicable law or agreed to in writing, software
 * distributed under the License is distributed on an "AS IS" BASIS,
 * WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
 * See the License for the specific language governing permissions and
 * limitations under the License.
 */

#pragma once

// Binary containers.
//
// Tensor file ("FTNS"), little-endian:
//   magic "FTNS" | version u16 | rank u32 | dims u32 x rank | payload f32 x prod(dims)
//
// Checkpoint archive:
//   entry count u32 | entries (name length u32, UTF-8 name, tensor container) |
//   config JSON length u32 | config JSON | CRC-32 u32 of every preceding byte

#include <zlib.h>

#include <bit>
#include <cstdint>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <limits>
#include <set>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "flowclas/error.hpp"
#include "flowclas/tensor.hpp"

namespace flowclas::io {

using Bytes = std::vector<std::uint8_t>;

inline constexpr char kTensorMagic[4] = {'F', 'T', 'N', 'S'};
inline constexpr std::uint16_t kTensorVersion = 1;

namespace detail {

inline void put_u16(Bytes& out, std::uint16_t v) {
  out.push_back(static_cast<std::uint8_t>(v));
  out.push_back(static_cast<std::uint8_t>(v >> 8));
}

inline void put_u32(Bytes& out, std::uint32_t v) {
  for (int i = 0; i < 4; ++i) out.push_back(static_cast<std::uint8_t>(v >> (8 * i)));
}

class Reader {
 public:
  explicit Reader(std::span<const std::uint8_t> bytes, std::size_t pos = 0) : bytes_(bytes), pos_(pos) {}

  std::size_t pos() const { return pos_; }
  std::size_t remaining() const { return bytes_.size() - pos_; }

  void need(std::size_t n, const char* what) const {
    if (remaining() < n) throw FormatError(std::string("truncated ") + what, pos_);
  }

  std::uint16_t u16(const char* what) {
    need(2, what);
    const std::uint16_t v = static_cast<std::uint16_t>(bytes_[pos_] | (bytes_[pos_ + 1] << 8));
    pos_ += 2;
    return v;
  }

  std::uint32_t u32(const char* what) {
    need(4, what);
    std::uint32_t v = 0;
    for (int i = 0; i < 4; ++i) v |= static_cast<std::uint32_t>(bytes_[pos_ + i]) << (8 * i);
    pos_ += 4;
    return v;
  }

  std::span<const std::uint8_t> take(std::size_t n, const char* what) {
    need(n, what);
    auto s = bytes_.subspan(pos_, n);
    pos_ += n;
    return s;
  }

 private:
  std::span<const std::uint8_t> bytes_;
  std::size_t pos_;
};

}  // namespace detail

inline void append_tensor(Bytes& out, const Tensor<float>& t) {
  if (t.rank() > std::numeric_limits<std::uint32_t>::max()) throw ValidationError("tensor container: rank too large");
  out.insert(out.end(), kTensorMagic, kTensorMagic + 4);
  detail::put_u16(out, kTensorVersion);
  detail::put_u32(out, static_cast<std::uint32_t>(t.rank()));
  for (std::size_t d : t.shape()) {
    if (d > std::numeric_limits<std::uint32_t>::max()) throw ValidationError("tensor container: dimension too large");
    detail::put_u32(out, static_cast<std::uint32_t>(d));
  }
  for (float v : t.data()) detail::put_u32(out, std::bit_cast<std::uint32_t>(v));
}

inline Bytes encode_tensor(const Tensor<float>& t) {
  Bytes out;
  out.reserve(10 + 4 * t.rank() + 4 * t.size());
  append_tensor(out, t);
  return out;
}

// Decodes one container starting at `pos`; advances `pos` past it.
inline Tensor<float> decode_tensor_at(std::span<const std::uint8_t> bytes, std::size_t& pos) {
  detail::Reader r(bytes, pos);
  const std::size_t start = r.pos();
  auto magic = r.take(4, "magic");
  if (std::memcmp(magic.data(), kTensorMagic, 4) != 0) throw FormatError("bad tensor magic", start);
  const std::size_t version_at = r.pos();
  if (r.u16("version") != kTensorVersion) throw FormatError("unsupported tensor container version", version_at);
  const std::uint32_t rank = r.u32("rank");
  const std::size_t dims_at = r.pos();
  if (static_cast<std::uint64_t>(rank) * 4 > r.remaining()) throw FormatError("truncated dims", dims_at);
  Shape shape(rank);
  std::uint64_t count = 1;
  for (std::uint32_t i = 0; i < rank; ++i) {
    shape[i] = r.u32("dims");
    if (shape[i] != 0 && count > std::numeric_limits<std::uint64_t>::max() / 4 / shape[i]) {
      throw FormatError("dimension product overflows", dims_at);
    }
    count *= shape[i];
  }
  if (count * 4 > r.remaining()) throw FormatError("truncated payload", r.pos());
  auto payload = r.take(static_cast<std::size_t>(count) * 4, "payload");
  std::vector<float> data(static_cast<std::size_t>(count));
  for (std::size_t i = 0; i < data.size(); ++i) {
    std::uint32_t v = 0;
    for (int b = 0; b < 4; ++b) v |= static_cast<std::uint32_t>(payload[4 * i + b]) << (8 * b);
    data[i] = std::bit_cast<float>(v);
  }
  pos = r.pos();
  return Tensor<float>(std::move(shape), std::move(data));
}

inline Tensor<float> decode_tensor(std::span<const std::uint8_t> bytes) {
  std::size_t pos = 0;
  Tensor<float> t = decode_tensor_at(bytes, pos);
  if (pos != bytes.size()) throw FormatError("trailing bytes after tensor", pos);
  return t;
}

inline Bytes read_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ValidationError("cannot open " + path.string());
  return Bytes(std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>());
}

// Writes through a temporary sibling and renames it into place.
inline void write_file(const std::filesystem::path& path, std::span<const std::uint8_t> bytes) {
  const std::filesystem::path tmp = path.string() + ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw ValidationError("cannot write " + tmp.string());
    out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
    if (!out) throw ValidationError("write failed for " + tmp.string());
  }
  std::filesystem::rename(tmp, path);
}

inline void write_features(const Tensor<float>& t, const std::filesystem::path& path) {
  write_file(path, encode_tensor(t));
}

// Reads a tensor file; when `expected` is non-empty the shape must match it.
inline Tensor<float> read_features(const std::filesystem::path& path, const Shape& expected = {}) {
  Tensor<float> t;
  try {
    t = decode_tensor(read_file(path));
  } catch (const FormatError& e) {
    throw FormatError(path.string() + ": " + e.detail(), e.offset());
  }
  if (!expected.empty() && t.shape() != expected) {
    throw ShapeError(path.string() + ": shape " + shape_string(t.shape()) + ", expected " + shape_string(expected));
  }
  return t;
}

inline std::uint32_t crc32(std::span<const std::uint8_t> bytes) {
  uLong crc = ::crc32(0L, Z_NULL, 0);
  crc = ::crc32(crc, bytes.data(), static_cast<uInt>(bytes.size()));
  return static_cast<std::uint32_t>(crc);
}

struct Checkpoint {
  std::vector<std::pair<std::string, Tensor<float>>> entries;
  std::string config_json;

  const Tensor<float>* find(const std::string& name) const {
    for (const auto& [n, t] : entries)
      if (n == name) return &t;
    return nullptr;
  }

  const Tensor<float>& at(const std::string& name) const {
    const Tensor<float>* t = find(name);
    if (!t) throw ValidationError("checkpoint: missing entry '" + name + "'");
    return *t;
  }
};

inline Bytes encode_checkpoint(const Checkpoint& ckpt) {
  std::set<std::string> names;
  Bytes out;
  detail::put_u32(out, static_cast<std::uint32_t>(ckpt.entries.size()));
  for (const auto& [name, t] : ckpt.entries) {
    if (!names.insert(name).second) throw ValidationError("checkpoint: duplicate entry '" + name + "'");
    detail::put_u32(out, static_cast<std::uint32_t>(name.size()));
    out.insert(out.end(), name.begin(), name.end());
    append_tensor(out, t);
  }
  detail::put_u32(out, static_cast<std::uint32_t>(ckpt.config_json.size()));
  out.insert(out.end(), ckpt.config_json.begin(), ckpt.config_json.end());
  detail::put_u32(out, crc32(out));
  return out;
}

inline Checkpoint decode_checkpoint(std::span<const std::uint8_t> bytes) {
  if (bytes.size() < 8) throw FormatError("checkpoint truncated", bytes.size());
  const std::size_t body = bytes.size() - 4;
  detail::Reader tail(bytes, body);
  if (tail.u32("checksum") != crc32(bytes.first(body))) throw FormatError("checkpoint checksum mismatch", body);
  auto payload = bytes.first(body);
  detail::Reader r(payload);
  Checkpoint ckpt;
  std::set<std::string> names;
  const std::uint32_t count = r.u32("entry count");
  for (std::uint32_t i = 0; i < count; ++i) {
    const std::size_t at = r.pos();
    const std::uint32_t len = r.u32("name length");
    auto raw = r.take(len, "name");
    std::string name(raw.begin(), raw.end());
    if (!names.insert(name).second) throw FormatError("duplicate checkpoint entry '" + name + "'", at);
    std::size_t pos = r.pos();
    Tensor<float> t = decode_tensor_at(payload, pos);
    r = detail::Reader(payload, pos);
    ckpt.entries.emplace_back(std::move(name), std::move(t));
  }
  const std::uint32_t json_len = r.u32("config length");
  auto json = r.take(json_len, "config");
  ckpt.config_json.assign(json.begin(), json.end());
  if (r.remaining() != 0) throw FormatError("trailing bytes in checkpoint", r.pos());
  return ckpt;
}

inline void save_checkpoint(const Checkpoint& ckpt, const std::filesystem::path& path) {
  write_file(path, encode_checkpoint(ckpt));
}

inline Checkpoint load_checkpoint(const std::filesystem::path& path) {
  const Bytes bytes = read_file(path);
  try {
    return decode_checkpoint(bytes);
  } catch (const FormatError& e) {
    throw FormatError(path.string() + ": " + e.detail(), e.offset());
  }
}

}  // namespace flowclas::io
