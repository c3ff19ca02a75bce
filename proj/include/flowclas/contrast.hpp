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

// Projection of standardized latents (or neck features) to C' unit vectors and
// class-balanced sampling of the anchor/candidate sets for the contrastive loss.

#include <cmath>
#include <cstddef>
#include <cstdint>
#include <optional>
#include <random>
#include <string>
#include <vector>

#include "flowclas/autodiff.hpp"
#include "flowclas/losses.hpp"
#include "flowclas/ops.hpp"

namespace flowclas {

enum class Placement { kLatent, kFeature };

inline Placement parse_placement(const std::string& s) {
  if (s == "latent") return Placement::kLatent;
  if (s == "feature") return Placement::kFeature;
  throw ValidationError("unknown contrast space '" + s + "' (expected latent or feature)");
}

inline const char* to_string(Placement p) { return p == Placement::kLatent ? "latent" : "feature"; }

// 1x1 convolution C -> C' followed by channel-wise L2 normalisation.
template <typename T>
class ProjectionHead {
 public:
  ProjectionHead() = default;
  ProjectionHead(std::size_t in_channels, std::size_t out_channels, std::uint64_t seed,
                 Placement placement = Placement::kLatent)
      : w("proj.w", Tensor<T>(Shape{out_channels, in_channels, 1, 1})),
        b("proj.b", Tensor<T>(Shape{out_channels})),
        placement(placement) {
    if (in_channels == 0 || out_channels == 0) throw ValidationError("ProjectionHead: channel counts must be positive");
    std::mt19937_64 rng(seed);
    std::normal_distribution<double> init(0.0, 1.0 / std::sqrt(static_cast<double>(in_channels)));
    for (auto& v : w.value.data()) v = static_cast<T>(init(rng));
  }

  Parameter<T> w;
  Parameter<T> b;
  Placement placement = Placement::kLatent;

  std::size_t in_channels() const { return w.value.dim(1); }
  std::size_t out_channels() const { return w.value.dim(0); }
  std::vector<Parameter<T>*> parameters() { return {&w, &b}; }

  Var<T> project(Tape<T>& tape, const Var<T>& x) {
    return l2_normalize_channelwise(conv2d_1x1(x, tape.parameter(w), tape.parameter(b)));
  }
};

// Trainable 1x1 convolution C -> C between the frozen encoder and the flow,
// used when the contrastive head sits in feature space. Starts as the identity.
template <typename T>
class FeatureNeck {
 public:
  FeatureNeck() = default;
  explicit FeatureNeck(std::size_t channels)
      : w("neck.w", Tensor<T>(Shape{channels, channels, 1, 1})), b("neck.b", Tensor<T>(Shape{channels})) {
    for (std::size_t c = 0; c < channels; ++c) w.value[c * channels + c] = T(1);
  }

  Parameter<T> w;
  Parameter<T> b;

  std::vector<Parameter<T>*> parameters() { return {&w, &b}; }

  Var<T> forward(Tape<T>& tape, const Var<T>& x) { return conv2d_1x1(x, tape.parameter(w), tape.parameter(b)); }
};

struct AnchorIndices {
  std::vector<PixelIndex> a_in, a_ood, b_in, b_ood;  // b_in empty unless natural-image mode
};

template <typename T>
struct AnchorSets {
  Var<T> a_in, a_ood, b_ood;
  std::optional<Var<T>> b_in;
  AnchorIndices sources;
};

namespace detail {

inline std::vector<PixelIndex> sample_region(const std::vector<PixelIndex>& region, std::size_t n,
                                             std::mt19937_64& rng) {
  std::vector<PixelIndex> out;
  out.reserve(n);
  if (region.size() >= n) {
    std::vector<PixelIndex> pool = region;
    for (std::size_t i = 0; i < n; ++i) {
      std::uniform_int_distribution<std::size_t> pick(i, pool.size() - 1);
      std::swap(pool[i], pool[pick(rng)]);
      out.push_back(pool[i]);
    }
  } else {
    std::uniform_int_distribution<std::size_t> pick(0, region.size() - 1);
    for (std::size_t i = 0; i < n; ++i) out.push_back(region[pick(rng)]);
  }
  return out;
}

}  // namespace detail

// Draws n pixels from each region: inliers and outliers of the mixed batch
// (A sets), outliers of the outlier batch (B_ood) and, in natural-image mode,
// its background (B_in). Without replacement when the region is large enough.
template <typename T>
AnchorIndices sample_anchor_indices(const Tensor<T>& mask_mix, const Tensor<T>& mask_out, std::size_t n,
                                    std::uint64_t seed, bool natural_image_mode) {
  if (n == 0) throw ValidationError("sample_anchor_indices: n_per_set must be positive");
  const auto mix_in = mask_pixels(mask_mix, false);
  const auto mix_ood = mask_pixels(mask_mix, true);
  const auto out_ood = mask_pixels(mask_out, true);
  const auto out_in = mask_pixels(mask_out, false);
  if (mix_in.empty() || mix_ood.empty() || out_ood.empty() || (natural_image_mode && out_in.empty())) {
    throw DegenerateBatch("sample_anchor_indices: a required region is empty");
  }
  std::mt19937_64 rng(seed);
  AnchorIndices idx;
  idx.a_in = detail::sample_region(mix_in, n, rng);
  idx.a_ood = detail::sample_region(mix_ood, n, rng);
  idx.b_ood = detail::sample_region(out_ood, n, rng);
  if (natural_image_mode) idx.b_in = detail::sample_region(out_in, n, rng);
  return idx;
}

template <typename T>
AnchorSets<T> gather_anchor_sets(const Var<T>& projected_mix, const Var<T>& projected_out, AnchorIndices idx) {
  AnchorSets<T> sets;
  sets.a_in = gather_pixels(projected_mix, idx.a_in);
  sets.a_ood = gather_pixels(projected_mix, idx.a_ood);
  sets.b_ood = gather_pixels(projected_out, idx.b_ood);
  if (!idx.b_in.empty()) sets.b_in = gather_pixels(projected_out, idx.b_in);
  sets.sources = std::move(idx);
  return sets;
}

template <typename T>
AnchorSets<T> sample_anchor_sets(const Var<T>& projected_mix, const Tensor<T>& mask_mix, const Var<T>& projected_out,
                                 const Tensor<T>& mask_out, std::size_t n, std::uint64_t seed,
                                 bool natural_image_mode) {
  return gather_anchor_sets(projected_mix, projected_out,
                            sample_anchor_indices(mask_mix, mask_out, n, seed, natural_image_mode));
}

// Contrastive loss with anchors A_in and A_ood against candidates
// A_in, A_ood, B_ood (and B_in when present). Label 0 = inlier, 1 = outlier.
template <typename T>
ContrastiveTerm<T> supervised_contrastive(const AnchorSets<T>& sets, T tau) {
  std::vector<Var<T>> rows{sets.a_in, sets.a_ood, sets.b_ood};
  std::vector<int> labels;
  labels.insert(labels.end(), sets.a_in.dim(0), 0);
  labels.insert(labels.end(), sets.a_ood.dim(0), 1);
  labels.insert(labels.end(), sets.b_ood.dim(0), 1);
  if (sets.b_in) {
    rows.push_back(*sets.b_in);
    labels.insert(labels.end(), sets.b_in->dim(0), 0);
  }
  const std::size_t anchors = sets.a_in.dim(0) + sets.a_ood.dim(0);
  return supervised_contrastive(concat(rows, 0), labels, anchors, tau);
}

}  // namespace flowclas
