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

// Pixel-level evaluation: AUPRC and FPR at a target TPR over threshold sweeps,
// and per-class score histograms. Anomalies are the positive class and are
// predicted where score >= threshold.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <numeric>
#include <span>
#include <string>
#include <vector>

#include "flowclas/error.hpp"

namespace flowclas::metrics {

// Sentinel for `bins`: use every distinct score as a threshold.
inline constexpr std::size_t kExhaustive = 0;
inline constexpr std::size_t kDefaultBins = 5000;

struct SweepPoint {
  double threshold;
  std::size_t tp, fp;
};

struct Sweep {
  std::vector<SweepPoint> points;  // thresholds in descending order
  std::size_t positives = 0, negatives = 0;
};

namespace detail {

inline void validate(std::span<const double> scores, std::span<const std::uint8_t> labels, std::size_t bins) {
  if (scores.size() != labels.size()) throw ValidationError("metrics: scores and labels differ in length");
  if (bins == 1) throw ValidationError("metrics: bins must be at least 2");
  std::size_t pos = 0;
  for (auto l : labels) pos += l != 0;
  if (pos == 0 || pos == labels.size()) throw ValidationError("metrics: need at least one positive and one negative");
}

}  // namespace detail

// Descending thresholds: `bins` equally spaced values over [min, max], or all
// distinct scores when bins == kExhaustive.
inline std::vector<double> thresholds(std::span<const double> scores, std::size_t bins) {
  std::vector<double> t;
  if (scores.empty()) return t;
  if (bins == kExhaustive) {
    t.assign(scores.begin(), scores.end());
    std::sort(t.begin(), t.end(), std::greater<>());
    t.erase(std::unique(t.begin(), t.end()), t.end());
    return t;
  }
  const auto [lo_it, hi_it] = std::minmax_element(scores.begin(), scores.end());
  const double lo = *lo_it, hi = *hi_it;
  t.reserve(bins);
  for (std::size_t k = bins; k-- > 0;) {
    const double v = k + 1 == bins ? hi : lo + (hi - lo) * static_cast<double>(k) / static_cast<double>(bins - 1);
    if (t.empty() || v < t.back()) t.push_back(v);
  }
  return t;
}

inline Sweep sweep(std::span<const double> scores, std::span<const std::uint8_t> labels, std::size_t bins) {
  detail::validate(scores, labels, bins);
  std::vector<std::size_t> order(scores.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return scores[a] > scores[b]; });
  Sweep s;
  for (auto l : labels) (l ? s.positives : s.negatives) += 1;
  std::size_t i = 0, tp = 0, fp = 0;
  for (double t : thresholds(scores, bins)) {
    while (i < order.size() && scores[order[i]] >= t) {
      (labels[order[i]] ? tp : fp) += 1;
      ++i;
    }
    s.points.push_back({t, tp, fp});
  }
  return s;
}

// Step integration of precision over recall, starting from (recall 0, precision 1).
inline double auprc(std::span<const double> scores, std::span<const std::uint8_t> labels,
                    std::size_t bins = kDefaultBins) {
  const Sweep s = sweep(scores, labels, bins);
  double area = 0.0, prev_recall = 0.0;
  for (const SweepPoint& p : s.points) {
    if (p.tp + p.fp == 0) continue;
    const double recall = static_cast<double>(p.tp) / static_cast<double>(s.positives);
    const double precision = static_cast<double>(p.tp) / static_cast<double>(p.tp + p.fp);
    area += (recall - prev_recall) * precision;
    prev_recall = recall;
  }
  return std::clamp(area, 0.0, 1.0);
}

// FPR at the first threshold (from the top) whose TPR reaches `tpr_target`,
// linearly interpolated against the preceding threshold.
inline double fpr_at_tpr(std::span<const double> scores, std::span<const std::uint8_t> labels,
                         double tpr_target = 0.95, std::size_t bins = kDefaultBins) {
  if (!(tpr_target > 0.0 && tpr_target <= 1.0)) throw ValidationError("fpr_at_tpr: target must lie in (0, 1]");
  const Sweep s = sweep(scores, labels, bins);
  const double np = static_cast<double>(s.positives), nn = static_cast<double>(s.negatives);
  bool have_prev = false;
  double prev_tpr = 0.0, prev_fpr = 0.0;
  for (const SweepPoint& p : s.points) {
    const double tpr = static_cast<double>(p.tp) / np;
    const double fpr = static_cast<double>(p.fp) / nn;
    if (tpr >= tpr_target) {
      if (!have_prev || tpr == tpr_target || tpr == prev_tpr) return fpr;
      const double f = (tpr_target - prev_tpr) / (tpr - prev_tpr);
      return std::clamp(prev_fpr + f * (fpr - prev_fpr), 0.0, 1.0);
    }
    have_prev = true;
    prev_tpr = tpr;
    prev_fpr = fpr;
  }
  return 1.0;
}

struct Histograms {
  std::vector<double> edges;  // n_buckets + 1 shared edges
  std::vector<std::size_t> inlier, outlier;
  double overlap = 0.0;  // sum_b min(p_in(b), p_ood(b))
};

inline Histograms score_histograms(std::span<const double> scores, std::span<const std::uint8_t> labels,
                                   std::size_t n_buckets) {
  if (n_buckets == 0) throw ValidationError("score_histograms: need at least one bucket");
  if (scores.size() != labels.size()) throw ValidationError("score_histograms: scores and labels differ in length");
  Histograms h;
  h.inlier.assign(n_buckets, 0);
  h.outlier.assign(n_buckets, 0);
  std::size_t n_in = 0, n_out = 0;
  for (auto l : labels) (l ? n_out : n_in) += 1;
  if (n_in == 0 || n_out == 0) throw ValidationError("score_histograms: a class is empty");
  const auto [lo_it, hi_it] = std::minmax_element(scores.begin(), scores.end());
  const double lo = *lo_it, hi = *hi_it, width = hi - lo;
  for (std::size_t b = 0; b <= n_buckets; ++b) {
    h.edges.push_back(b == n_buckets ? hi : lo + width * static_cast<double>(b) / static_cast<double>(n_buckets));
  }
  for (std::size_t i = 0; i < scores.size(); ++i) {
    std::size_t b = 0;
    if (width > 0) {
      b = static_cast<std::size_t>((scores[i] - lo) / width * static_cast<double>(n_buckets));
      b = std::min(b, n_buckets - 1);
    }
    (labels[i] ? h.outlier : h.inlier)[b] += 1;
  }
  for (std::size_t b = 0; b < n_buckets; ++b) {
    h.overlap += std::min(static_cast<double>(h.inlier[b]) / static_cast<double>(n_in),
                          static_cast<double>(h.outlier[b]) / static_cast<double>(n_out));
  }
  return h;
}

struct EvalResult {
  double auprc = 0.0;
  double fpr95 = 0.0;
  std::size_t bins = kDefaultBins;
  std::size_t positives = 0, negatives = 0;
  Histograms histogram;
};

inline EvalResult evaluate(std::span<const double> scores, std::span<const std::uint8_t> labels,
                           std::size_t bins = kDefaultBins, std::size_t n_buckets = 100) {
  EvalResult r;
  r.bins = bins;
  r.auprc = auprc(scores, labels, bins);
  r.fpr95 = fpr_at_tpr(scores, labels, 0.95, bins);
  for (auto l : labels) (l ? r.positives : r.negatives) += 1;
  r.histogram = score_histograms(scores, labels, n_buckets);
  return r;
}

}  // namespace flowclas::metrics
