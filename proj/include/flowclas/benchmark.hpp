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

// In-memory synthetic benchmark: texture scenes -> mixed training set,
// auxiliary outliers and held-out test scenes -> train -> pixel-level metrics.

#include <cstdint>
#include <vector>

#include "flowclas/metrics.hpp"
#include "flowclas/scorer.hpp"
#include "flowclas/textures.hpp"
#include "flowclas/trainer.hpp"

namespace flowclas {

struct PreparedBenchmark {
  FeatureSet mixed;
  FeatureSet outliers;
  Tensor<float> test_features;  // (N, C, H', W')
  std::vector<BinaryMask> test_masks;
};

inline Tensor<float> stack_features(const ToyExtractor& ex, const std::vector<Image>& images) {
  std::vector<Tensor<float>> feats;
  for (const Image& img : images) feats.push_back(ex.extract(img));
  return make_feature_set(feats, std::vector<BinaryMask>(feats.size(), BinaryMask(1, 1))).features;
}

inline PreparedBenchmark prepare_benchmark(std::uint64_t seed, const textures::BenchmarkOptions& opt,
                                           const ExtractorOptions& ex_opt, std::size_t mixed_count) {
  const textures::BenchmarkData data = textures::make_benchmark(seed, opt);
  const ToyExtractor ex(ex_opt);
  std::vector<Tensor<float>> feats;
  std::vector<BinaryMask> masks;
  std::mt19937_64 rng(derive_seed(seed, 11));
  for (std::size_t i = 0; i < mixed_count; ++i) {
    const Image& inlier = data.inliers[i % data.inliers.size()];
    const auto& aux = data.auxiliary[std::uniform_int_distribution<std::size_t>(0, data.auxiliary.size() - 1)(rng)];
    MixedSample m = paste_object(inlier, aux.image, aux.mask, derive_seed(seed, 12, i));
    feats.push_back(ex.extract(m.image));
    masks.push_back(std::move(m.mask));
  }
  PreparedBenchmark b;
  b.mixed = make_feature_set(feats, masks);
  feats.clear();
  masks.clear();
  for (const auto& aux : data.auxiliary) {
    feats.push_back(ex.extract(aux.image));
    masks.push_back(aux.mask);
  }
  b.outliers = make_feature_set(feats, masks);
  b.test_features = stack_features(ex, data.test_images);
  b.test_masks = data.test_masks;
  return b;
}

// Scores every test image at full resolution and pools all pixels.
inline metrics::EvalResult evaluate_model(Model& model, const Tensor<float>& features,
                                          const std::vector<BinaryMask>& masks, bool include_logdet,
                                          std::size_t bins = metrics::kDefaultBins) {
  const std::vector<Tensor<float>> maps = model.score(features, include_logdet);
  std::vector<double> scores;
  std::vector<std::uint8_t> labels;
  for (std::size_t i = 0; i < maps.size(); ++i) {
    const Tensor<float> up = upsample_bilinear(maps[i], masks[i].height, masks[i].width);
    for (std::size_t p = 0; p < up.size(); ++p) {
      scores.push_back(up[p]);
      labels.push_back(masks[i].values[p]);
    }
  }
  return metrics::evaluate(scores, labels, bins);
}

}  // namespace flowclas
