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

// Learning-rate schedule and the adaptive-moment optimiser with decoupled
// weight decay and global gradient-norm clipping.

#include <cmath>
#include <cstddef>
#include <map>
#include <numbers>
#include <string>
#include <vector>

#include "flowclas/autodiff.hpp"
#include "flowclas/error.hpp"

namespace flowclas {

// Linear warmup 0 -> lr_max over `warmup_steps`, then half-cosine decay to 0 at `total_steps`.
inline double lr_at(std::size_t step, std::size_t total_steps, std::size_t warmup_steps, double lr_max) {
  if (warmup_steps >= total_steps) throw ValidationError("lr_at: warmup_steps must be below total_steps");
  if (step > total_steps) throw ValidationError("lr_at: step past total_steps");
  if (step < warmup_steps) return lr_max * static_cast<double>(step) / static_cast<double>(warmup_steps);
  const double progress =
      static_cast<double>(step - warmup_steps) / static_cast<double>(total_steps - warmup_steps);
  return lr_max * 0.5 * (1.0 + std::cos(std::numbers::pi * progress));
}

struct AdamWOptions {
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
  double weight_decay = 1e-5;
  double clip_norm = 10.0;  // <= 0 disables clipping
};

template <typename T>
class AdamW {
 public:
  struct Moments {
    Tensor<T> m, v;
  };

  AdamW() = default;
  explicit AdamW(const AdamWOptions& opt) : options_(opt) {}

  const AdamWOptions& options() const { return options_; }
  std::size_t step_count() const { return steps_; }
  void set_step_count(std::size_t n) { steps_ = n; }
  std::map<std::string, Moments>& moments() { return moments_; }
  const std::map<std::string, Moments>& moments() const { return moments_; }

  // L2 norm over every trainable gradient, accumulated in double.
  static double grad_norm(const std::vector<Parameter<T>*>& params) {
    double sq = 0.0;
    for (const Parameter<T>* p : params) {
      if (!p->trainable) continue;
      for (T g : p->grad.data()) sq += static_cast<double>(g) * static_cast<double>(g);
    }
    return std::sqrt(sq);
  }

  // One update at learning rate `lr`. Returns the pre-clip gradient norm.
  // Parameters without a gradient buffer are treated as having zero gradient.
  double step(const std::vector<Parameter<T>*>& params, double lr) {
    for (Parameter<T>* p : params)
      if (p->trainable && p->grad.shape() != p->value.shape()) p->zero_grad();
    const double norm = grad_norm(params);
    if (!std::isfinite(norm)) throw NumericError("AdamW: non-finite gradient norm");
    const double clip = options_.clip_norm > 0 && norm > options_.clip_norm ? options_.clip_norm / norm : 1.0;
    ++steps_;
    const double t = static_cast<double>(steps_);
    const double bc1 = 1.0 - std::pow(options_.beta1, t);
    const double bc2 = 1.0 - std::pow(options_.beta2, t);
    const double decay = 1.0 - lr * options_.weight_decay;
    for (Parameter<T>* p : params) {
      if (!p->trainable) continue;
      Moments& mo = moments_[p->name];
      if (mo.m.shape() != p->value.shape()) {
        mo.m = Tensor<T>(p->value.shape());
        mo.v = Tensor<T>(p->value.shape());
      }
      for (std::size_t i = 0; i < p->value.size(); ++i) {
        const double g = static_cast<double>(p->grad[i]) * clip;
        const double m = options_.beta1 * mo.m[i] + (1.0 - options_.beta1) * g;
        const double v = options_.beta2 * mo.v[i] + (1.0 - options_.beta2) * g * g;
        mo.m[i] = static_cast<T>(m);
        mo.v[i] = static_cast<T>(v);
        const double update = (m / bc1) / (std::sqrt(v / bc2) + options_.eps);
        p->value[i] = static_cast<T>(static_cast<double>(p->value[i]) * decay - lr * update);
      }
    }
    return norm;
  }

 private:
  AdamWOptions options_;
  std::map<std::string, Moments> moments_;
  std::size_t steps_ = 0;
};

}  // namespace flowclas
