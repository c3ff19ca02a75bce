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

// Per-pixel anomaly scores in nats per dimension, NPD = -(1/C) log p_Z(z),
// and their export as raw tensors plus heatmap PNGs.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <filesystem>
#include <string>
#include <utility>
#include <vector>

#include "flowclas/flow.hpp"
#include "flowclas/image.hpp"
#include "flowclas/io.hpp"
#include "flowclas/latent.hpp"

namespace flowclas {

struct ScoreMap {
  Tensor<float> native;     // (H', W')
  Tensor<float> upsampled;  // (H, W), empty until upsampled
  std::string id;
};

// (N, 1, H, W) NPD map. With `logdet`, adds -(1/C) logdet as well.
template <typename T>
Tensor<T> npd_map(const Tensor<T>& z, DiagonalGaussianLatent<T>& latent, const Tensor<T>* logdet = nullptr) {
  Tape<T> tape(false);
  Tensor<T> lp = latent.log_prob_map(tape, tape.constant(z)).value();
  const T inv_c = T(1) / static_cast<T>(latent.channels());
  for (std::size_t i = 0; i < lp.size(); ++i) {
    T ll = lp[i];
    if (logdet) ll += (*logdet)[i];
    lp[i] = -inv_c * ll;
  }
  return lp;
}

// (N, 1, H, W) -> N separate (H, W) maps.
template <typename T>
std::vector<Tensor<T>> split_maps(const Tensor<T>& npd) {
  const std::size_t n = npd.dim(0), h = npd.dim(2), w = npd.dim(3);
  std::vector<Tensor<T>> maps;
  for (std::size_t b = 0; b < n; ++b) {
    Tensor<T> m(Shape{h, w});
    std::copy_n(npd.data().data() + b * h * w, h * w, m.data().data());
    maps.push_back(std::move(m));
  }
  return maps;
}

// Features (N, C, H', W') through the flow to one NPD map per image.
template <typename T>
std::vector<Tensor<T>> score_features(FlowStack<T>& flow, DiagonalGaussianLatent<T>& latent, const Tensor<T>& features,
                                      bool include_logdet = false) {
  Tape<T> tape(false);
  FlowOutput<T> out = flow.forward(tape, tape.constant(features));
  return split_maps(npd_map(out.z.value(), latent, include_logdet ? &out.logdet.value() : nullptr));
}

// Bilinear resampling of an (H, W) map with half-pixel centres and edge clamping.
inline Tensor<float> upsample_bilinear(const Tensor<float>& src, std::size_t out_h, std::size_t out_w) {
  if (src.rank() != 2) throw ShapeError("upsample_bilinear: expected (H, W), got " + shape_string(src.shape()));
  if (out_h == 0 || out_w == 0) throw ValidationError("upsample_bilinear: target dimensions must be positive");
  const std::size_t ih = src.dim(0), iw = src.dim(1);
  Tensor<float> dst(Shape{out_h, out_w});
  const double sy = static_cast<double>(ih) / static_cast<double>(out_h);
  const double sx = static_cast<double>(iw) / static_cast<double>(out_w);
  for (std::size_t y = 0; y < out_h; ++y) {
    const double fy = std::clamp((static_cast<double>(y) + 0.5) * sy - 0.5, 0.0, static_cast<double>(ih - 1));
    const std::size_t y0 = static_cast<std::size_t>(fy), y1 = std::min(y0 + 1, ih - 1);
    const double wy = fy - static_cast<double>(y0);
    for (std::size_t x = 0; x < out_w; ++x) {
      const double fx = std::clamp((static_cast<double>(x) + 0.5) * sx - 0.5, 0.0, static_cast<double>(iw - 1));
      const std::size_t x0 = static_cast<std::size_t>(fx), x1 = std::min(x0 + 1, iw - 1);
      const double wx = fx - static_cast<double>(x0);
      const double v = (1 - wy) * ((1 - wx) * src[y0 * iw + x0] + wx * src[y0 * iw + x1]) +
                       wy * ((1 - wx) * src[y1 * iw + x0] + wx * src[y1 * iw + x1]);
      dst[y * out_w + x] = static_cast<float>(v);
    }
  }
  return dst;
}

// Blue -> cyan -> yellow -> red ramp over per-image min-max; a constant map is mid-grey.
inline Image heatmap_image(const Tensor<float>& scores) {
  const std::size_t h = scores.dim(0), w = scores.dim(1);
  Image img(h, w, 3);
  const auto [lo_it, hi_it] = std::minmax_element(scores.data().begin(), scores.data().end());
  const float lo = *lo_it, hi = *hi_it;
  for (std::size_t i = 0; i < h * w; ++i) {
    std::uint8_t rgb[3] = {128, 128, 128};
    if (hi > lo) {
      const double v = (scores[i] - lo) / (hi - lo);
      const double r = std::clamp(1.5 - std::abs(4.0 * v - 3.0), 0.0, 1.0);
      const double g = std::clamp(1.5 - std::abs(4.0 * v - 2.0), 0.0, 1.0);
      const double b = std::clamp(1.5 - std::abs(4.0 * v - 1.0), 0.0, 1.0);
      rgb[0] = static_cast<std::uint8_t>(std::lround(255 * r));
      rgb[1] = static_cast<std::uint8_t>(std::lround(255 * g));
      rgb[2] = static_cast<std::uint8_t>(std::lround(255 * b));
    }
    for (int c = 0; c < 3; ++c) img.pixels[i * 3 + c] = rgb[c];
  }
  return img;
}

struct HeatmapFiles {
  std::filesystem::path scores, heatmap;
};

// Upsamples to (H, W) and writes <stem>.score.ft (raw) and <stem>.heat.png.
inline HeatmapFiles export_heatmap(ScoreMap& score, std::size_t target_h, std::size_t target_w,
                                   const std::filesystem::path& out_dir, const std::string& stem) {
  score.upsampled = upsample_bilinear(score.native, target_h, target_w);
  HeatmapFiles files{out_dir / (stem + ".score.ft"), out_dir / (stem + ".heat.png")};
  io::write_features(score.upsampled, files.scores);
  write_png(heatmap_image(score.upsampled), files.heatmap);
  return files;
}

}  // namespace flowclas
