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

// Seeded procedural textures and scenes for the synthetic benchmark.
// Three disjoint families: A dresses inlier scenes, B supplies the auxiliary
// pseudo-outlier objects, C the held-out test objects.

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <numbers>
#include <random>
#include <vector>

#include "flowclas/image.hpp"
#include "flowclas/synth.hpp"

namespace flowclas::textures {

enum class Family { kA, kB, kC };

using Rgb = std::array<double, 3>;

namespace detail {

inline std::uint8_t to_byte(double v) { return static_cast<std::uint8_t>(std::lround(std::clamp(v, 0.0, 1.0) * 255.0)); }

inline Rgb lerp(const Rgb& a, const Rgb& b, double t) {
  return {a[0] + (b[0] - a[0]) * t, a[1] + (b[1] - a[1]) * t, a[2] + (b[2] - a[2]) * t};
}

inline Rgb jitter(Rgb c, double amount, std::mt19937_64& rng) {
  std::uniform_real_distribution<double> u(-amount, amount);
  for (double& v : c) v = std::clamp(v + u(rng), 0.0, 1.0);
  return c;
}

template <typename F>
Image render(std::size_t h, std::size_t w, double noise, std::mt19937_64& rng, F&& colour_at) {
  Image img(h, w, 3);
  std::normal_distribution<double> grain(0.0, noise);
  for (std::size_t y = 0; y < h; ++y)
    for (std::size_t x = 0; x < w; ++x) {
      const Rgb c = colour_at(static_cast<double>(y), static_cast<double>(x));
      for (std::size_t k = 0; k < 3; ++k) img.at(y, x, k) = to_byte(c[k] + grain(rng));
    }
  return img;
}

// Oriented sinusoidal stripes between two colours.
inline Image stripes(std::size_t h, std::size_t w, const Rgb& a, const Rgb& b, std::mt19937_64& rng) {
  std::uniform_real_distribution<double> angle(0.0, std::numbers::pi), period(4.0, 9.0), phase(0.0, 2 * std::numbers::pi);
  const double th = angle(rng), f = 2 * std::numbers::pi / period(rng), ph = phase(rng);
  const double cy = std::sin(th), cx = std::cos(th);
  return render(h, w, 0.03, rng, [&](double y, double x) {
    return lerp(a, b, 0.5 + 0.5 * std::sin(f * (x * cx + y * cy) + ph));
  });
}

// Two crossed gratings.
inline Image plaid(std::size_t h, std::size_t w, const Rgb& a, const Rgb& b, std::mt19937_64& rng) {
  std::uniform_real_distribution<double> period(5.0, 10.0), phase(0.0, 2 * std::numbers::pi);
  const double f1 = 2 * std::numbers::pi / period(rng), f2 = 2 * std::numbers::pi / period(rng);
  const double p1 = phase(rng), p2 = phase(rng);
  return render(h, w, 0.03, rng, [&](double y, double x) {
    return lerp(a, b, 0.5 + 0.25 * std::sin(f1 * x + p1) + 0.25 * std::sin(f2 * y + p2));
  });
}

// Axis-aligned checkerboard.
inline Image checker(std::size_t h, std::size_t w, const Rgb& a, const Rgb& b, std::mt19937_64& rng) {
  std::uniform_int_distribution<int> cell(3, 8);
  const int s = cell(rng);
  return render(h, w, 0.03, rng, [&](double y, double x) {
    const int k = (static_cast<int>(y) / s + static_cast<int>(x) / s) % 2;
    return k ? a : b;
  });
}

// Near-flat colour with a slow linear ramp.
inline Image ramp(std::size_t h, std::size_t w, const Rgb& a, const Rgb& b, std::mt19937_64& rng) {
  std::uniform_real_distribution<double> angle(0.0, 2 * std::numbers::pi);
  const double th = angle(rng), cy = std::sin(th), cx = std::cos(th);
  const double span = static_cast<double>(std::max(h, w));
  return render(h, w, 0.02, rng, [&](double y, double x) {
    return lerp(a, b, std::clamp(0.5 + 0.5 * (x * cx + y * cy) / span, 0.0, 1.0));
  });
}

// Disks on a jittered grid.
inline Image dots(std::size_t h, std::size_t w, const Rgb& a, const Rgb& b, std::mt19937_64& rng) {
  std::uniform_real_distribution<double> pitch(6.0, 10.0);
  const double p = pitch(rng), r = 0.3 * p;
  return render(h, w, 0.03, rng, [&](double y, double x) {
    const double dy = std::fmod(y, p) - p / 2, dx = std::fmod(x, p) - p / 2;
    return dy * dy + dx * dx < r * r ? a : b;
  });
}

// Concentric rings around a random centre.
inline Image rings(std::size_t h, std::size_t w, const Rgb& a, const Rgb& b, std::mt19937_64& rng) {
  std::uniform_real_distribution<double> cy(0.0, static_cast<double>(h)), cx(0.0, static_cast<double>(w)),
      period(5.0, 9.0);
  const double y0 = cy(rng), x0 = cx(rng), f = 2 * std::numbers::pi / period(rng);
  return render(h, w, 0.03, rng, [&](double y, double x) {
    return lerp(a, b, 0.5 + 0.5 * std::sin(f * std::hypot(y - y0, x - x0)));
  });
}

}  // namespace detail

// Families B and C are low-contrast patterns around one colour, offset from
// the mean inlier colour (0.475, 0.5, 0.275) by 0.3 towards blue. Close enough
// that a density fit on A alone ranks many of their pixels as inliers.
inline constexpr Rgb kOutlierBase{0.175, 0.20, 0.575};

// One texture of the given family, h x w RGB.
inline Image render_texture(Family family, std::size_t h, std::size_t w, std::mt19937_64& rng) {
  std::uniform_int_distribution<int> coin(0, 1);
  const bool alt = coin(rng) == 1;
  switch (family) {
    case Family::kA: {
      const Rgb a = detail::jitter({0.30, 0.45, 0.20}, 0.08, rng), b = detail::jitter({0.65, 0.55, 0.35}, 0.08, rng);
      return alt ? detail::stripes(h, w, a, b, rng) : detail::plaid(h, w, a, b, rng);
    }
    case Family::kB: {
      const Rgb m = detail::jitter(kOutlierBase, 0.08, rng);
      const Rgb a = detail::jitter(m, 0.10, rng), b = detail::jitter(m, 0.10, rng);
      return alt ? detail::checker(h, w, a, b, rng) : detail::ramp(h, w, a, b, rng);
    }
    case Family::kC: {
      const Rgb m = detail::jitter(kOutlierBase, 0.08, rng);
      const Rgb a = detail::jitter(m, 0.10, rng), b = detail::jitter(m, 0.10, rng);
      return alt ? detail::dots(h, w, a, b, rng) : detail::rings(h, w, a, b, rng);
    }
  }
  return Image(h, w, 3);
}

// Random star-convex blob filling roughly half of an h x w canvas.
inline BinaryMask random_blob(std::size_t h, std::size_t w, std::mt19937_64& rng) {
  std::uniform_real_distribution<double> amp(0.0, 0.25), phase(0.0, 2 * std::numbers::pi);
  const double a2 = amp(rng), a3 = amp(rng), p2 = phase(rng), p3 = phase(rng);
  const double cy = (static_cast<double>(h) - 1) / 2, cx = (static_cast<double>(w) - 1) / 2;
  const double r0 = 0.38 * static_cast<double>(std::min(h, w));
  BinaryMask m(h, w);
  for (std::size_t y = 0; y < h; ++y)
    for (std::size_t x = 0; x < w; ++x) {
      const double dy = static_cast<double>(y) - cy, dx = static_cast<double>(x) - cx;
      const double th = std::atan2(dy, dx);
      const double r = r0 * (1 + a2 * std::sin(2 * th + p2) + a3 * std::sin(3 * th + p3));
      m.at(y, x) = std::hypot(dy, dx) <= r ? 1 : 0;
    }
  return m;
}

struct ObjectImage {
  Image image;
  BinaryMask mask;
};

// A family-B or family-C blob on a neutral grey background.
inline ObjectImage render_object(Family family, std::size_t h, std::size_t w, std::mt19937_64& rng) {
  Image tex = render_texture(family, h, w, rng);
  BinaryMask mask = random_blob(h, w, rng);
  for (std::size_t y = 0; y < h; ++y)
    for (std::size_t x = 0; x < w; ++x)
      if (!mask.at(y, x))
        for (std::size_t c = 0; c < 3; ++c) tex.at(y, x, c) = 128;
  return {std::move(tex), std::move(mask)};
}

struct BenchmarkData {
  std::vector<Image> inliers;           // family A scenes
  std::vector<ObjectImage> auxiliary;   // family B objects
  std::vector<Image> test_images;       // family A scene with one family C object
  std::vector<BinaryMask> test_masks;
};

struct BenchmarkOptions {
  std::size_t size = 64;
  std::size_t inliers = 64;
  std::size_t auxiliary = 32;
  std::size_t tests = 32;
  double test_min_fraction = 0.5;  // test object's longer side, as a fraction of the image side
  double test_max_fraction = 0.8;
};

inline BenchmarkData make_benchmark(std::uint64_t seed, const BenchmarkOptions& opt = {}) {
  std::mt19937_64 rng(seed);
  const std::size_t s = opt.size;
  BenchmarkData d;
  for (std::size_t i = 0; i < opt.inliers; ++i) d.inliers.push_back(render_texture(Family::kA, s, s, rng));
  for (std::size_t i = 0; i < opt.auxiliary; ++i) d.auxiliary.push_back(render_object(Family::kB, s, s, rng));
  std::uniform_real_distribution<double> frac(opt.test_min_fraction, opt.test_max_fraction);
  for (std::size_t i = 0; i < opt.tests; ++i) {
    const Image scene = render_texture(Family::kA, s, s, rng);
    const ObjectImage obj = render_object(Family::kC, s, s, rng);
    const auto box = flowclas::detail::bounding_box(obj.mask);
    PastePlacement p;
    p.scale = frac(rng) * static_cast<double>(s) / static_cast<double>(std::max(box.h, box.w));
    const std::size_t oh = static_cast<std::size_t>(std::lround(box.h * p.scale));
    const std::size_t ow = static_cast<std::size_t>(std::lround(box.w * p.scale));
    p.top = std::uniform_int_distribution<std::size_t>(0, s - std::min(s, oh))(rng);
    p.left = std::uniform_int_distribution<std::size_t>(0, s - std::min(s, ow))(rng);
    MixedSample m = paste_object_at(scene, obj.image, obj.mask, p);
    d.test_images.push_back(std::move(m.image));
    d.test_masks.push_back(std::move(m.mask));
  }
  return d;
}

}  // namespace flowclas::textures
