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

// Outlier exposure: paste an object from an auxiliary image into an
// anomaly-free image, x_mix = (1 - y_mix) * x_in + y_mix * x_out'.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <cstdio>
#include <filesystem>
#include <random>
#include <string>
#include <vector>

#include "json.hpp"

#include "flowclas/error.hpp"
#include "flowclas/image.hpp"
#include "flowclas/manifest.hpp"

namespace flowclas {

// The object could not be placed inside the target.
class PlacementError : public Error {
 public:
  using Error::Error;
};

struct PastePlacement {
  double scale = 1.0;  // resize factor applied to the object's bounding box
  std::size_t top = 0, left = 0;
};

struct MixedSample {
  Image image;
  BinaryMask mask;
  std::string source_in, source_out;
  PastePlacement placement;
};

inline constexpr double kMinObjectFraction = 0.1;
inline constexpr double kMaxObjectFraction = 0.5;
inline constexpr int kPlacementAttempts = 10;

// The object resized and positioned on a canvas of the target size.
struct PlacedObject {
  Image pixels;
  BinaryMask mask;
};

namespace detail {

struct Box {
  std::size_t y0, x0, h, w;
};

inline Box bounding_box(const BinaryMask& m) {
  std::size_t y0 = m.height, x0 = m.width, y1 = 0, x1 = 0;
  for (std::size_t y = 0; y < m.height; ++y)
    for (std::size_t x = 0; x < m.width; ++x)
      if (m.at(y, x)) {
        y0 = std::min(y0, y);
        x0 = std::min(x0, x);
        y1 = std::max(y1, y);
        x1 = std::max(x1, x);
      }
  if (y0 > y1 || x0 > x1) throw ValidationError("paste_object: object mask is empty");
  return {y0, x0, y1 - y0 + 1, x1 - x0 + 1};
}

inline void check_inputs(const Image& x_in, const Image& x_out, const BinaryMask& y_out) {
  if (x_in.channels != x_out.channels) throw ValidationError("paste_object: images differ in channel count");
  if (y_out.height != x_out.height || y_out.width != x_out.width) {
    throw ValidationError("paste_object: object mask does not match its image");
  }
  if (y_out.count() == 0) throw ValidationError("paste_object: object mask is empty");
}

}  // namespace detail

// Crops the object to its bounding box, resizes it (bilinear pixels, nearest
// mask) and places it at the given offset on a target-sized canvas.
inline PlacedObject place_object(const Image& x_out, const BinaryMask& y_out, const PastePlacement& p,
                                 std::size_t target_h, std::size_t target_w) {
  const detail::Box box = detail::bounding_box(y_out);
  const std::size_t oh = std::max<std::size_t>(1, static_cast<std::size_t>(std::lround(box.h * p.scale)));
  const std::size_t ow = std::max<std::size_t>(1, static_cast<std::size_t>(std::lround(box.w * p.scale)));
  if (!(p.scale > 0) || p.top + oh > target_h || p.left + ow > target_w) {
    throw PlacementError("paste_object: object does not fit inside the target");
  }
  Image crop(box.h, box.w, x_out.channels);
  BinaryMask crop_mask(box.h, box.w);
  for (std::size_t y = 0; y < box.h; ++y)
    for (std::size_t x = 0; x < box.w; ++x) {
      crop_mask.at(y, x) = y_out.at(box.y0 + y, box.x0 + x);
      for (std::size_t c = 0; c < x_out.channels; ++c) crop.at(y, x, c) = x_out.at(box.y0 + y, box.x0 + x, c);
    }
  const Image obj = (oh == box.h && ow == box.w) ? crop : resize_bilinear(crop, oh, ow);
  const BinaryMask obj_mask = (oh == box.h && ow == box.w) ? crop_mask : resize_nearest(crop_mask, oh, ow);
  if (obj_mask.count() == 0) throw PlacementError("paste_object: object vanished after resizing");
  PlacedObject placed{Image(target_h, target_w, x_out.channels), BinaryMask(target_h, target_w)};
  for (std::size_t y = 0; y < oh; ++y)
    for (std::size_t x = 0; x < ow; ++x) {
      placed.mask.at(p.top + y, p.left + x) = obj_mask.at(y, x);
      for (std::size_t c = 0; c < x_out.channels; ++c) placed.pixels.at(p.top + y, p.left + x, c) = obj.at(y, x, c);
    }
  return placed;
}

inline Image composite(const Image& x_in, const PlacedObject& obj) {
  Image out = x_in;
  for (std::size_t y = 0; y < x_in.height; ++y)
    for (std::size_t x = 0; x < x_in.width; ++x)
      if (obj.mask.at(y, x))
        for (std::size_t c = 0; c < x_in.channels; ++c) out.at(y, x, c) = obj.pixels.at(y, x, c);
  return out;
}

inline MixedSample paste_object_at(const Image& x_in, const Image& x_out, const BinaryMask& y_out, const PastePlacement& p) {
  detail::check_inputs(x_in, x_out, y_out);
  PlacedObject obj = place_object(x_out, y_out, p, x_in.height, x_in.width);
  MixedSample s;
  s.image = composite(x_in, obj);
  s.mask = std::move(obj.mask);
  s.placement = p;
  return s;
}

// Random scale (object's longer side uniform in [0.1, 0.5] of the target's
// shorter side) and uniform offset; retries up to 10 placements.
inline MixedSample paste_object(const Image& x_in, const Image& x_out, const BinaryMask& y_out, std::uint64_t seed) {
  detail::check_inputs(x_in, x_out, y_out);
  const detail::Box box = detail::bounding_box(y_out);
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> frac(kMinObjectFraction, kMaxObjectFraction);
  const double shorter = static_cast<double>(std::min(x_in.height, x_in.width));
  for (int attempt = 0; attempt < kPlacementAttempts; ++attempt) {
    PastePlacement p;
    p.scale = frac(rng) * shorter / static_cast<double>(std::max(box.h, box.w));
    const std::size_t oh = std::max<std::size_t>(1, static_cast<std::size_t>(std::lround(box.h * p.scale)));
    const std::size_t ow = std::max<std::size_t>(1, static_cast<std::size_t>(std::lround(box.w * p.scale)));
    if (oh > x_in.height || ow > x_in.width) continue;
    p.top = std::uniform_int_distribution<std::size_t>(0, x_in.height - oh)(rng);
    p.left = std::uniform_int_distribution<std::size_t>(0, x_in.width - ow)(rng);
    try {
      return paste_object_at(x_in, x_out, y_out, p);
    } catch (const PlacementError&) {
      continue;
    }
  }
  throw PlacementError("paste_object: no valid placement after " + std::to_string(kPlacementAttempts) + " attempts");
}

// Output pixel is 1 iff any input pixel in its block is 1. Block edges are
// rounded, so any input/output size pair is accepted.
inline BinaryMask downsample_mask(const BinaryMask& m, std::size_t out_h, std::size_t out_w) {
  if (out_h == 0 || out_w == 0 || m.height == 0 || m.width == 0) throw ValidationError("downsample_mask: empty size");
  auto edge = [](std::size_t i, std::size_t in, std::size_t out) {
    return static_cast<std::size_t>(std::lround(static_cast<double>(i) * static_cast<double>(in) / static_cast<double>(out)));
  };
  BinaryMask d(out_h, out_w);
  for (std::size_t oy = 0; oy < out_h; ++oy) {
    const std::size_t y0 = std::min(edge(oy, m.height, out_h), m.height - 1);
    const std::size_t y1 = std::max(y0 + 1, std::min(edge(oy + 1, m.height, out_h), m.height));
    for (std::size_t ox = 0; ox < out_w; ++ox) {
      const std::size_t x0 = std::min(edge(ox, m.width, out_w), m.width - 1);
      const std::size_t x1 = std::max(x0 + 1, std::min(edge(ox + 1, m.width, out_w), m.width));
      std::uint8_t any = 0;
      for (std::size_t y = y0; y < y1 && !any; ++y)
        for (std::size_t x = x0; x < x1; ++x)
          if (m.at(y, x)) {
            any = 1;
            break;
          }
      d.at(oy, ox) = any;
    }
  }
  return d;
}

struct MixedDatasetReport {
  std::vector<nlohmann::json> records;
  std::vector<std::string> skipped;  // human-readable reasons
};

// Generates `count` mixed samples into `out_dir` (mix_NNNNN.png, mix_NNNNN.mask.png,
// mixed.jsonl). Sample i draws from a generator seeded with seed ^ i.
inline MixedDatasetReport build_mixed_dataset(const Manifest& inliers, const Manifest& outliers, std::size_t count,
                                              std::uint64_t seed, const std::filesystem::path& out_dir) {
  std::filesystem::create_directories(out_dir);
  MixedDatasetReport report;
  if (count == 0) {
    write_manifest(out_dir / "mixed.jsonl", {});
    return report;
  }

  struct Source {
    std::string id;
    Image image;
    BinaryMask mask;
  };
  std::vector<Source> ins, outs;
  for (const auto& r : inliers.records) {
    try {
      ins.push_back({r.image, read_png(inliers.resolve(r.image)), {}});
    } catch (const Error& e) {
      report.skipped.push_back(std::string("unreadable inlier: ") + e.what());
    }
  }
  for (const auto& r : outliers.records) {
    try {
      if (!r.mask) throw ValidationError("outlier record " + r.image + " has no mask");
      Source s{r.image, read_png(outliers.resolve(r.image)), read_mask_png(outliers.resolve(*r.mask))};
      if (s.mask.height != s.image.height || s.mask.width != s.image.width || s.mask.count() == 0) {
        throw ValidationError("outlier record " + r.image + " has an empty or mismatched mask");
      }
      outs.push_back(std::move(s));
    } catch (const Error& e) {
      report.skipped.push_back(std::string("unreadable outlier: ") + e.what());
    }
  }
  if (ins.empty() || outs.empty()) throw ValidationError("build_mixed_dataset: no readable inlier or outlier entries");

  for (std::size_t i = 0; i < count; ++i) {
    std::mt19937_64 rng(seed ^ static_cast<std::uint64_t>(i));
    const Source& a = ins[std::uniform_int_distribution<std::size_t>(0, ins.size() - 1)(rng)];
    const Source& b = outs[std::uniform_int_distribution<std::size_t>(0, outs.size() - 1)(rng)];
    MixedSample s;
    try {
      s = paste_object(a.image, b.image, b.mask, rng());
    } catch (const Error& e) {
      report.skipped.push_back("sample " + std::to_string(i) + ": " + e.what());
      continue;
    }
    char stem[32];
    std::snprintf(stem, sizeof(stem), "mix_%05zu", i);
    const std::string image_name = std::string(stem) + ".png";
    const std::string mask_name = std::string(stem) + ".mask.png";
    write_png(s.image, out_dir / image_name);
    write_mask_png(s.mask, out_dir / mask_name);
    report.records.push_back({{"image", image_name},
                              {"mask", mask_name},
                              {"source_in", a.id},
                              {"source_out", b.id},
                              {"scale", s.placement.scale},
                              {"offset", {s.placement.top, s.placement.left}}});
  }
  if (report.records.empty()) throw ValidationError("build_mixed_dataset: every sample failed");
  write_manifest(out_dir / "mixed.jsonl", report.records);
  return report;
}

}  // namespace flowclas
