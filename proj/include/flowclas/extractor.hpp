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

// Frozen, seeded stand-in for a pre-trained encoder:
//   3x3 conv stride 2 -> relu -> 3x3 conv stride 2 -> relu -> 1x1 conv to C channels.
// Weights are drawn once from the seed and never trained.

#include <cmath>
#include <cstddef>
#include <cstdint>
#include <random>

#include "flowclas/image.hpp"
#include "flowclas/kernels.hpp"
#include "flowclas/tensor.hpp"

namespace flowclas {

struct ExtractorOptions {
  std::uint64_t seed = 7;
  std::size_t hidden = 32;
  std::size_t channels = 16;
};

class ToyExtractor {
 public:
  explicit ToyExtractor(const ExtractorOptions& opt = {}) : options_(opt) {
    if (opt.hidden == 0 || opt.channels == 0) throw ValidationError("ToyExtractor: widths must be positive");
    std::mt19937_64 rng(opt.seed);
    auto fill = [&rng](std::vector<float>& v, double stddev) {
      std::normal_distribution<double> d(0.0, stddev);
      for (auto& x : v) x = static_cast<float>(d(rng));
    };
    w1_.resize(opt.hidden * 3 * 9);
    b1_.resize(opt.hidden);
    w2_.resize(opt.hidden * opt.hidden * 9);
    b2_.resize(opt.hidden);
    w3_.resize(opt.channels * opt.hidden);
    b3_.resize(opt.channels);
    fill(w1_, std::sqrt(2.0 / 27.0));
    fill(b1_, 0.1);
    fill(w2_, std::sqrt(2.0 / (9.0 * static_cast<double>(opt.hidden))));
    fill(b2_, 0.1);
    fill(w3_, std::sqrt(1.0 / static_cast<double>(opt.hidden)));
    fill(b3_, 0.1);
  }

  const ExtractorOptions& options() const { return options_; }
  std::size_t channels() const { return options_.channels; }

  static std::size_t output_size(std::size_t n) { return (n + 3) / 4; }

  // (1, C, ceil(H/4), ceil(W/4)) features of an RGB image scaled to [0, 1].
  Tensor<float> extract(const Image& img) const {
    if (img.channels != 3) throw ValidationError("extract_features: expected a 3-channel image");
    return extract(to_tensor(img));
  }

  Tensor<float> extract(const Tensor<float>& x) const {
    if (x.rank() != 4 || x.dim(1) != 3) throw ShapeError("extract_features: expected (N, 3, H, W), got " + shape_string(x.shape()));
    const std::size_t n = x.dim(0), hd = options_.hidden;
    const kernels::ConvGeometry g1{n, 3, hd, x.dim(2), x.dim(3), 3, 2, 1};
    Tensor<float> h1(Shape{n, hd, g1.out_h(), g1.out_w()});
    kernels::conv2d_forward<float>(g1, x.data(), w1_, b1_, h1.data());
    relu_inplace(h1);
    const kernels::ConvGeometry g2{n, hd, hd, g1.out_h(), g1.out_w(), 3, 2, 1};
    Tensor<float> h2(Shape{n, hd, g2.out_h(), g2.out_w()});
    kernels::conv2d_forward<float>(g2, h1.data(), w2_, b2_, h2.data());
    relu_inplace(h2);
    const kernels::ConvGeometry g3{n, hd, options_.channels, g2.out_h(), g2.out_w(), 1, 1, 0};
    Tensor<float> out(Shape{n, options_.channels, g2.out_h(), g2.out_w()});
    kernels::conv2d_forward<float>(g3, h2.data(), w3_, b3_, out.data());
    return out;
  }

  const std::vector<float>& w1() const { return w1_; }
  const std::vector<float>& b1() const { return b1_; }
  const std::vector<float>& w2() const { return w2_; }
  const std::vector<float>& b2() const { return b2_; }
  const std::vector<float>& w3() const { return w3_; }
  const std::vector<float>& b3() const { return b3_; }

 private:
  static void relu_inplace(Tensor<float>& t) {
    for (auto& v : t.data()) v = v > 0.0f ? v : 0.0f;
  }

  ExtractorOptions options_;
  std::vector<float> w1_, b1_, w2_, b2_, w3_, b3_;
};

}  // namespace flowclas
