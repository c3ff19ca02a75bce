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

// 8-bit images, binary masks and PNG I/O.

#include <png.h>

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "flowclas/error.hpp"
#include "flowclas/tensor.hpp"

namespace flowclas {

// Interleaved H x W x channels bytes.
struct Image {
  std::size_t height = 0, width = 0, channels = 3;
  std::vector<std::uint8_t> pixels;

  Image() = default;
  Image(std::size_t h, std::size_t w, std::size_t c = 3, std::uint8_t fill = 0)
      : height(h), width(w), channels(c), pixels(h * w * c, fill) {}

  std::uint8_t& at(std::size_t y, std::size_t x, std::size_t c) { return pixels[(y * width + x) * channels + c]; }
  std::uint8_t at(std::size_t y, std::size_t x, std::size_t c) const { return pixels[(y * width + x) * channels + c]; }

  friend bool operator==(const Image&, const Image&) = default;
};

// H x W values in {0, 1}.
struct BinaryMask {
  std::size_t height = 0, width = 0;
  std::vector<std::uint8_t> values;

  BinaryMask() = default;
  BinaryMask(std::size_t h, std::size_t w, std::uint8_t fill = 0) : height(h), width(w), values(h * w, fill) {}

  std::uint8_t& at(std::size_t y, std::size_t x) { return values[y * width + x]; }
  std::uint8_t at(std::size_t y, std::size_t x) const { return values[y * width + x]; }

  std::size_t count() const {
    std::size_t n = 0;
    for (auto v : values) n += v != 0;
    return n;
  }

  friend bool operator==(const BinaryMask&, const BinaryMask&) = default;
};

// (1, C, H, W) tensor with values scaled to [0, 1].
inline Tensor<float> to_tensor(const Image& img) {
  Tensor<float> t(Shape{1, img.channels, img.height, img.width});
  for (std::size_t y = 0; y < img.height; ++y)
    for (std::size_t x = 0; x < img.width; ++x)
      for (std::size_t c = 0; c < img.channels; ++c) t.at(0, c, y, x) = static_cast<float>(img.at(y, x, c)) / 255.0f;
  return t;
}

// Bilinear resampling with half-pixel centres and edge clamping.
inline Image resize_bilinear(const Image& src, std::size_t out_h, std::size_t out_w) {
  if (out_h == 0 || out_w == 0) throw ValidationError("resize_bilinear: empty target");
  Image dst(out_h, out_w, src.channels);
  const double sy = static_cast<double>(src.height) / static_cast<double>(out_h);
  const double sx = static_cast<double>(src.width) / static_cast<double>(out_w);
  for (std::size_t y = 0; y < out_h; ++y) {
    const double fy = std::clamp((static_cast<double>(y) + 0.5) * sy - 0.5, 0.0, static_cast<double>(src.height - 1));
    const std::size_t y0 = static_cast<std::size_t>(fy);
    const std::size_t y1 = std::min(y0 + 1, src.height - 1);
    const double wy = fy - static_cast<double>(y0);
    for (std::size_t x = 0; x < out_w; ++x) {
      const double fx = std::clamp((static_cast<double>(x) + 0.5) * sx - 0.5, 0.0, static_cast<double>(src.width - 1));
      const std::size_t x0 = static_cast<std::size_t>(fx);
      const std::size_t x1 = std::min(x0 + 1, src.width - 1);
      const double wx = fx - static_cast<double>(x0);
      for (std::size_t c = 0; c < src.channels; ++c) {
        const double v = (1 - wy) * ((1 - wx) * src.at(y0, x0, c) + wx * src.at(y0, x1, c)) +
                         wy * ((1 - wx) * src.at(y1, x0, c) + wx * src.at(y1, x1, c));
        dst.at(y, x, c) = static_cast<std::uint8_t>(std::clamp(std::lround(v), 0L, 255L));
      }
    }
  }
  return dst;
}

inline BinaryMask resize_nearest(const BinaryMask& src, std::size_t out_h, std::size_t out_w) {
  if (out_h == 0 || out_w == 0) throw ValidationError("resize_nearest: empty target");
  BinaryMask dst(out_h, out_w);
  for (std::size_t y = 0; y < out_h; ++y) {
    const std::size_t yy = std::min(src.height - 1, static_cast<std::size_t>((static_cast<double>(y) + 0.5) *
                                                                                static_cast<double>(src.height) /
                                                                                static_cast<double>(out_h)));
    for (std::size_t x = 0; x < out_w; ++x) {
      const std::size_t xx = std::min(src.width - 1, static_cast<std::size_t>((static_cast<double>(x) + 0.5) *
                                                                                 static_cast<double>(src.width) /
                                                                                 static_cast<double>(out_w)));
      dst.at(y, x) = src.at(yy, xx);
    }
  }
  return dst;
}

namespace detail {

inline void png_check(int ok, png_image& img, const std::filesystem::path& path, const char* what) {
  if (!ok) {
    const std::string msg = std::string(what) + " " + path.string() + ": " + img.message;
    png_image_free(&img);
    throw ValidationError(msg);
  }
}

inline std::vector<std::uint8_t> read_png_raw(const std::filesystem::path& path, png_uint_32 format,
                                              std::size_t& h, std::size_t& w) {
  png_image img{};
  img.version = PNG_IMAGE_VERSION;
  png_check(png_image_begin_read_from_file(&img, path.c_str()), img, path, "cannot read PNG");
  img.format = format;
  std::vector<std::uint8_t> buf(PNG_IMAGE_SIZE(img));
  png_check(png_image_finish_read(&img, nullptr, buf.data(), 0, nullptr), img, path, "cannot decode PNG");
  h = img.height;
  w = img.width;
  return buf;
}

inline void write_png_raw(const std::filesystem::path& path, png_uint_32 format, std::size_t h, std::size_t w,
                          const std::vector<std::uint8_t>& buf) {
  png_image img{};
  img.version = PNG_IMAGE_VERSION;
  img.width = static_cast<png_uint_32>(w);
  img.height = static_cast<png_uint_32>(h);
  img.format = format;
  png_check(png_image_write_to_file(&img, path.c_str(), 0, buf.data(), 0, nullptr), img, path, "cannot write PNG");
}

}  // namespace detail

inline Image read_png(const std::filesystem::path& path) {
  Image img;
  img.channels = 3;
  img.pixels = detail::read_png_raw(path, PNG_FORMAT_RGB, img.height, img.width);
  return img;
}

inline void write_png(const Image& img, const std::filesystem::path& path) {
  if (img.channels != 3 && img.channels != 1) throw ValidationError("write_png: only 1 or 3 channels supported");
  detail::write_png_raw(path, img.channels == 3 ? PNG_FORMAT_RGB : PNG_FORMAT_GRAY, img.height, img.width, img.pixels);
}

// Grey values above 127 read as 1.
inline BinaryMask read_mask_png(const std::filesystem::path& path) {
  BinaryMask m;
  m.values = detail::read_png_raw(path, PNG_FORMAT_GRAY, m.height, m.width);
  for (auto& v : m.values) v = v > 127 ? 1 : 0;
  return m;
}

// Stored as 0 / 255 greyscale.
inline void write_mask_png(const BinaryMask& mask, const std::filesystem::path& path) {
  std::vector<std::uint8_t> buf(mask.values.size());
  for (std::size_t i = 0; i < buf.size(); ++i) buf[i] = mask.values[i] ? 255 : 0;
  detail::write_png_raw(path, PNG_FORMAT_GRAY, mask.height, mask.width, buf);
}

}  // namespace flowclas
