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

#include <cmath>
#include <cstddef>
#include <numbers>

#include "flowclas/autodiff.hpp"
#include "flowclas/ops.hpp"

namespace flowclas {

// p_Z = N(mu, diag(exp(log_var))) with learnable mu and log_var, both (1, C, 1, 1).
template <typename T>
class DiagonalGaussianLatent {
 public:
  DiagonalGaussianLatent() = default;
  explicit DiagonalGaussianLatent(std::size_t channels)
      : mu("latent.mu", Tensor<T>(Shape{1, channels, 1, 1})),
        log_var("latent.log_var", Tensor<T>(Shape{1, channels, 1, 1})) {}

  Parameter<T> mu;
  Parameter<T> log_var;

  std::size_t channels() const { return mu.value.dim(1); }

  std::vector<Parameter<T>*> parameters() { return {&mu, &log_var}; }

  // Per-pixel sum_c [-0.5 log 2pi - 0.5 log_var_c - 0.5 (z_c - mu_c)^2 / var_c], shape (N, 1, H, W).
  Var<T> log_prob_map(Tape<T>& tape, const Var<T>& z) {
    check(z.shape());
    Var<T> m = tape.parameter(mu);
    Var<T> lv = tape.parameter(log_var);
    Var<T> d = sub(z, m);
    Var<T> quad = mul(mul(d, d), exp(scale(lv, T(-1))));
    Var<T> per_channel = shift(scale(add(quad, lv), T(-0.5)), static_cast<T>(-0.5 * std::log(2.0 * std::numbers::pi)));
    return sum_axis(per_channel, 1);
  }

  // (z - mu) / sigma, per channel.
  Var<T> standardize(Tape<T>& tape, const Var<T>& z) {
    check(z.shape());
    Var<T> m = tape.parameter(mu);
    Var<T> lv = tape.parameter(log_var);
    return mul(sub(z, m), exp(scale(lv, T(-0.5))));
  }

  // mu + sigma * zbar, evaluated without recording.
  Tensor<T> unstandardize(const Tensor<T>& zbar) const {
    check(zbar.shape());
    Tensor<T> out(zbar.shape());
    const std::size_t n = zbar.dim(0), c = zbar.dim(1), plane = zbar.dim(2) * zbar.dim(3);
    for (std::size_t b = 0; b < n; ++b)
      for (std::size_t ch = 0; ch < c; ++ch) {
        const T sigma = std::exp(T(0.5) * log_var.value[ch]);
        for (std::size_t p = 0; p < plane; ++p) {
          const std::size_t k = (b * c + ch) * plane + p;
          out[k] = mu.value[ch] + sigma * zbar[k];
        }
      }
    return out;
  }

 private:
  void check(const Shape& s) const {
    if (s.size() != 4 || s[1] != channels()) {
      throw ShapeError("latent: expected (N, " + std::to_string(channels()) + ", H, W), got " + shape_string(s));
    }
  }
};

}  // namespace flowclas
