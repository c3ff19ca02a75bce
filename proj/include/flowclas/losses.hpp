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

// Training objectives: masked inlier NLL, supervised contrastive loss,
// outlier likelihood minimisation and their weighted total.

#include <cstddef>
#include <optional>
#include <string>
#include <vector>

#include "flowclas/autodiff.hpp"
#include "flowclas/ops.hpp"

namespace flowclas {

enum class Variant { kContrastive, kMin, kMlOnly };

inline Variant parse_variant(const std::string& s) {
  if (s == "contrastive") return Variant::kContrastive;
  if (s == "min") return Variant::kMin;
  if (s == "ml_only") return Variant::kMlOnly;
  throw ValidationError("unknown variant '" + s + "' (expected contrastive, min or ml_only)");
}

inline const char* to_string(Variant v) {
  switch (v) {
    case Variant::kContrastive: return "contrastive";
    case Variant::kMin: return "min";
    case Variant::kMlOnly: return "ml_only";
  }
  return "?";
}

// Weight of the outlier likelihood term in the `min` variant.
inline constexpr double kMinLossWeight = 1.0;

struct LossCounts {
  std::size_t inlier_pixels = 0;
  std::size_t outlier_pixels = 0;
  std::size_t anchors = 0;
  std::size_t pairs = 0;
};

struct LossBreakdown {
  double l_ml = 0.0;
  double l_con = 0.0;
  double l_min = 0.0;
  double total = 0.0;
  LossCounts counts;
};

namespace detail {

template <typename T>
void check_maps(const Var<T>& log_prob, const Var<T>& logdet, const Tensor<T>& mask, const char* op) {
  if (log_prob.shape() != logdet.shape() || log_prob.value().size() != mask.size()) {
    throw ShapeError(std::string(op) + ": log_prob " + shape_string(log_prob.shape()) + ", logdet " +
                     shape_string(logdet.shape()) + ", mask " + shape_string(mask.shape()));
  }
}

template <typename T>
Tensor<T> indicator(const Tensor<T>& mask, bool value, const Shape& shape, std::size_t& count) {
  Tensor<T> out(shape);
  count = 0;
  for (std::size_t i = 0; i < mask.size(); ++i) {
    const bool hit = (mask[i] > T(0.5)) == value;
    out[i] = hit ? T(1) : T(0);
    count += hit;
  }
  return out;
}

}  // namespace detail

// Mean over pixels with mask == 0 of -(log_prob + logdet).
// Throws DegenerateBatch when every pixel is masked.
template <typename T>
Var<T> masked_nll(const Var<T>& log_prob, const Var<T>& logdet, const Tensor<T>& mask_down) {
  detail::check_maps(log_prob, logdet, mask_down, "masked_nll");
  std::size_t count = 0;
  Tensor<T> keep = detail::indicator(mask_down, false, log_prob.shape(), count);
  if (count == 0) throw DegenerateBatch("masked_nll: no inlier pixels in batch");
  Tape<T>& tape = *log_prob.tape();
  Var<T> ll = add(log_prob, logdet);
  return scale(sum(mul(ll, tape.constant(std::move(keep)))), T(-1) / static_cast<T>(count));
}

// Mean over pixels with mask == 1 of +(log_prob + logdet); zero when no outlier pixels.
template <typename T>
Var<T> outlier_likelihood_min(const Var<T>& log_prob, const Var<T>& logdet, const Tensor<T>& mask_down,
                              std::size_t* count_out = nullptr) {
  detail::check_maps(log_prob, logdet, mask_down, "outlier_likelihood_min");
  std::size_t count = 0;
  Tensor<T> keep = detail::indicator(mask_down, true, log_prob.shape(), count);
  if (count_out) *count_out = count;
  Tape<T>& tape = *log_prob.tape();
  if (count == 0) return tape.constant(Tensor<T>::scalar(T(0)));
  Var<T> ll = add(log_prob, logdet);
  return scale(sum(mul(ll, tape.constant(std::move(keep)))), T(1) / static_cast<T>(count));
}

template <typename T>
struct ContrastiveTerm {
  Var<T> loss;
  std::size_t pairs = 0;
  std::size_t anchors_used = 0;
  std::size_t anchors_skipped = 0;
};

// Supervised contrastive loss over unit-norm rows of `embeddings` (M x D).
// The first `anchor_count` rows are anchors; every row is a candidate.
// For anchor i and positive p (same label, p != i):
//   -log[ exp(s_ip/tau) / (exp(s_ip/tau) + sum_{n: other label} exp(s_in/tau)) ]
// averaged over all anchor-positive pairs. Anchors lacking a positive or a
// negative are skipped; DegenerateBatch if all are.
template <typename T>
ContrastiveTerm<T> supervised_contrastive(const Var<T>& embeddings, const std::vector<int>& labels,
                                          std::size_t anchor_count, T tau) {
  const Shape& s = embeddings.shape();
  if (s.size() != 2 || labels.size() != s[0] || anchor_count > s[0]) {
    throw ShapeError("supervised_contrastive: embeddings " + shape_string(s) + ", " + std::to_string(labels.size()) +
                     " labels, " + std::to_string(anchor_count) + " anchors");
  }
  if (!(tau > T(0))) throw ValidationError("supervised_contrastive: tau must be positive");
  const std::size_t m = s[0];
  Tape<T>& tape = *embeddings.tape();

  Tensor<T> pos(Shape{anchor_count, m}), neg(Shape{anchor_count, m});
  ContrastiveTerm<T> out;
  for (std::size_t i = 0; i < anchor_count; ++i) {
    std::size_t np = 0, nn = 0;
    for (std::size_t j = 0; j < m; ++j) {
      if (j == i) continue;
      (labels[j] == labels[i] ? np : nn) += 1;
    }
    if (np == 0 || nn == 0) {
      ++out.anchors_skipped;
      continue;
    }
    ++out.anchors_used;
    out.pairs += np;
    for (std::size_t j = 0; j < m; ++j) {
      if (j == i) continue;
      (labels[j] == labels[i] ? pos : neg)[i * m + j] = T(1);
    }
  }
  if (out.pairs == 0) throw DegenerateBatch("supervised_contrastive: every anchor lacks a positive or a negative");

  Var<T> anchors = anchor_count == m ? embeddings : slice_rows(embeddings, 0, anchor_count);
  // Shifting every logit by -1/tau leaves each term unchanged and keeps exp() bounded for unit vectors.
  Var<T> logits = shift(scale(matmul(anchors, embeddings, true), T(1) / tau), T(-1) / tau);
  Var<T> e = exp(logits);
  Var<T> neg_sum = sum_axis(mul(e, tape.constant(std::move(neg))), 1);
  Var<T> terms = sub(log(add(e, neg_sum)), logits);
  out.loss = scale(sum(mul(terms, tape.constant(std::move(pos)))), T(1) / static_cast<T>(out.pairs));
  return out;
}

// alpha * l_ml + l_con | alpha * l_ml + beta * l_min | alpha * l_ml.
inline double total_loss(const LossBreakdown& parts, double alpha, Variant variant) {
  switch (variant) {
    case Variant::kContrastive: return alpha * parts.l_ml + parts.l_con;
    case Variant::kMin: return alpha * parts.l_ml + kMinLossWeight * parts.l_min;
    case Variant::kMlOnly: return alpha * parts.l_ml;
  }
  return 0.0;
}

template <typename T>
Var<T> total_loss(const Var<T>& l_ml, const std::optional<Var<T>>& l_con, const std::optional<Var<T>>& l_min,
                  T alpha, Variant variant) {
  Var<T> total = scale(l_ml, alpha);
  if (variant == Variant::kContrastive && l_con) total = add(total, *l_con);
  if (variant == Variant::kMin && l_min) total = add(total, scale(*l_min, static_cast<T>(kMinLossWeight)));
  return total;
}

}  // namespace flowclas
