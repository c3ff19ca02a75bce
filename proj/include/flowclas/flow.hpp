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

// Invertible flow over (N, C, H, W) feature maps. Each block applies
// ActNorm -> fixed channel permutation -> affine coupling, and reports its
// per-pixel log|det J| contribution as an (N, 1, H, W) map.

#include <cmath>
#include <cstddef>
#include <cstdint>
#include <numeric>
#include <random>
#include <string>
#include <vector>

#include "flowclas/autodiff.hpp"
#include "flowclas/ops.hpp"

namespace flowclas {

template <typename T>
class ActNorm {
 public:
  static constexpr double kVarianceFloor = 1e-6;

  ActNorm() = default;
  ActNorm(const std::string& prefix, std::size_t channels)
      : scale(prefix + ".scale", Tensor<T>(Shape{1, channels, 1, 1}, T(1))),
        bias(prefix + ".bias", Tensor<T>(Shape{1, channels, 1, 1}, T(0))) {}

  Parameter<T> scale;
  Parameter<T> bias;
  bool initialized = false;

  std::size_t channels() const { return scale.value.dim(1); }

  // Sets scale/bias so the batch leaves with zero mean and unit variance per channel.
  void initialize_from(const Tensor<T>& x) {
    const std::size_t n = x.dim(0), c = x.dim(1), plane = x.dim(2) * x.dim(3);
    const double count = static_cast<double>(n * plane);
    for (std::size_t ch = 0; ch < c; ++ch) {
      double s = 0.0;
      for (std::size_t b = 0; b < n; ++b)
        for (std::size_t p = 0; p < plane; ++p) s += x[(b * c + ch) * plane + p];
      const double mu = s / count;
      double ss = 0.0;
      for (std::size_t b = 0; b < n; ++b)
        for (std::size_t p = 0; p < plane; ++p) {
          const double d = x[(b * c + ch) * plane + p] - mu;
          ss += d * d;
        }
      const double var = std::max(ss / count, kVarianceFloor);
      const double sc = 1.0 / std::sqrt(var);
      scale.value[ch] = static_cast<T>(sc);
      bias.value[ch] = static_cast<T>(-mu * sc);
    }
    initialized = true;
  }

  // y = scale * x + bias; log-det per pixel = sum_c log|scale_c|.
  Var<T> forward(Tape<T>& tape, const Var<T>& x, Var<T>& logdet) {
    Var<T> s = tape.parameter(scale);
    Var<T> b = tape.parameter(bias);
    Var<T> y = add(mul(x, s), b);
    Var<T> ld = sum(flowclas::scale(log(mul(s, s)), T(0.5)));
    logdet = add(logdet, ld);
    return y;
  }

  Tensor<T> inverse(const Tensor<T>& y) const {
    Tensor<T> x(y.shape());
    const std::size_t n = y.dim(0), c = y.dim(1), plane = y.dim(2) * y.dim(3);
    for (std::size_t b = 0; b < n; ++b)
      for (std::size_t ch = 0; ch < c; ++ch)
        for (std::size_t p = 0; p < plane; ++p) {
          const std::size_t k = (b * c + ch) * plane + p;
          x[k] = (y[k] - bias.value[ch]) / scale.value[ch];
        }
    return x;
  }
};

class ChannelPermutation {
 public:
  ChannelPermutation() = default;

  explicit ChannelPermutation(std::vector<std::size_t> perm) : perm_(std::move(perm)), inverse_(perm_.size()) {
    std::vector<bool> seen(perm_.size(), false);
    for (std::size_t i = 0; i < perm_.size(); ++i) {
      if (perm_[i] >= perm_.size() || seen[perm_[i]]) throw ValidationError("ChannelPermutation: not a bijection");
      seen[perm_[i]] = true;
      inverse_[perm_[i]] = i;
    }
  }

  static ChannelPermutation identity(std::size_t channels) {
    std::vector<std::size_t> p(channels);
    std::iota(p.begin(), p.end(), std::size_t{0});
    return ChannelPermutation(std::move(p));
  }

  static ChannelPermutation random(std::size_t channels, std::mt19937_64& rng) {
    std::vector<std::size_t> p(channels);
    std::iota(p.begin(), p.end(), std::size_t{0});
    std::shuffle(p.begin(), p.end(), rng);
    return ChannelPermutation(std::move(p));
  }

  const std::vector<std::size_t>& forward_indices() const { return perm_; }
  const std::vector<std::size_t>& inverse_indices() const { return inverse_; }

 private:
  std::vector<std::size_t> perm_;
  std::vector<std::size_t> inverse_;
};

// Transforms the last floor(C/2) channels with a scale and shift predicted from
// the first ceil(C/2) by a 3x3 -> relu -> 3x3 subnet.
template <typename T>
class AffineCoupling {
 public:
  AffineCoupling() = default;
  AffineCoupling(const std::string& prefix, std::size_t channels, T s_max)
      : w1(prefix + ".w1", Tensor<T>(Shape{cond(channels), cond(channels), 3, 3})),
        b1(prefix + ".b1", Tensor<T>(Shape{cond(channels)})),
        w2(prefix + ".w2", Tensor<T>(Shape{2 * transformed(channels), cond(channels), 3, 3})),
        b2(prefix + ".b2", Tensor<T>(Shape{2 * transformed(channels)})),
        channels_(channels),
        s_max_(s_max) {}

  static std::size_t cond(std::size_t c) { return (c + 1) / 2; }
  static std::size_t transformed(std::size_t c) { return c / 2; }

  Parameter<T> w1, b1, w2, b2;

  T s_max() const { return s_max_; }

  Var<T> forward(Tape<T>& tape, const Var<T>& x, Var<T>& logdet) {
    const std::size_t nc = cond(channels_), nt = transformed(channels_);
    if (nt == 0) return x;
    Var<T> x1 = slice_channels(x, 0, nc);
    Var<T> x2 = slice_channels(x, nc, channels_);
    auto [s, t] = scale_shift(tape, x1);
    Var<T> y2 = add(mul(x2, exp(s)), t);
    logdet = add(logdet, sum_axis(s, 1));
    return concat<T>({x1, y2}, 1);
  }

  Tensor<T> inverse(const Tensor<T>& y) {
    const std::size_t nc = cond(channels_), nt = transformed(channels_);
    if (nt == 0) return y;
    Tape<T> tape(false);
    Var<T> yv = tape.constant(y);
    Var<T> y1 = slice_channels(yv, 0, nc);
    Var<T> y2 = slice_channels(yv, nc, channels_);
    auto [s, t] = scale_shift(tape, y1);
    Var<T> x2 = mul(sub(y2, t), exp(flowclas::scale(s, T(-1))));
    return concat<T>({y1, x2}, 1).value();
  }

 private:
  struct ScaleShift {
    Var<T> log_scale;
    Var<T> shift;
  };

  // Soft-clamped log-scale s = s_max * tanh(s_raw / s_max) and shift t.
  ScaleShift scale_shift(Tape<T>& tape, const Var<T>& x1) {
    const std::size_t nt = transformed(channels_);
    Var<T> h = relu(conv2d_3x3(x1, tape.parameter(w1), tape.parameter(b1)));
    Var<T> out = conv2d_3x3(h, tape.parameter(w2), tape.parameter(b2));
    Var<T> s_raw = slice_channels(out, 0, nt);
    Var<T> t = slice_channels(out, nt, 2 * nt);
    Var<T> s = flowclas::scale(flowclas::tanh(flowclas::scale(s_raw, T(1) / s_max_)), s_max_);
    return {s, t};
  }

  std::size_t channels_ = 0;
  T s_max_ = T(2);
};

template <typename T>
struct FlowBlock {
  ActNorm<T> actnorm;
  ChannelPermutation permutation;
  AffineCoupling<T> coupling;
};

template <typename T>
struct FlowOutput {
  Var<T> z;
  Var<T> logdet;                      // (N, 1, H, W), sum over blocks
  std::vector<Var<T>> block_logdets;  // per block, same shape
};

struct FlowOptions {
  std::size_t channels = 16;
  std::size_t steps = 8;
  double s_max = 2.0;
  std::uint64_t seed = 0;
  bool strict = false;  // reject forward() before init and repeated init
};

template <typename T>
class FlowStack {
 public:
  FlowStack() = default;

  // Permutations come from the seed; couplings start at the identity
  // (zero output conv) with a He-initialised first conv.
  explicit FlowStack(const FlowOptions& opt) : options_(opt) {
    if (opt.channels == 0 || opt.steps == 0) throw ValidationError("FlowStack: channels and steps must be positive");
    if (!(opt.s_max > 0)) throw ValidationError("FlowStack: s_max must be positive");
    std::mt19937_64 rng(opt.seed);
    const std::size_t nc = AffineCoupling<T>::cond(opt.channels);
    std::normal_distribution<double> he(0.0, std::sqrt(2.0 / (9.0 * static_cast<double>(nc))));
    for (std::size_t i = 0; i < opt.steps; ++i) {
      const std::string prefix = "block" + std::to_string(i);
      FlowBlock<T> block{ActNorm<T>(prefix + ".actnorm", opt.channels), ChannelPermutation::random(opt.channels, rng),
                         AffineCoupling<T>(prefix + ".coupling", opt.channels, static_cast<T>(opt.s_max))};
      for (auto& v : block.coupling.w1.value.data()) v = static_cast<T>(he(rng));
      blocks_.push_back(std::move(block));
    }
  }

  const FlowOptions& options() const { return options_; }
  std::size_t channels() const { return options_.channels; }
  std::size_t steps() const { return blocks_.size(); }
  std::vector<FlowBlock<T>>& blocks() { return blocks_; }
  const std::vector<FlowBlock<T>>& blocks() const { return blocks_; }

  bool initialized() const {
    for (const auto& b : blocks_)
      if (!b.actnorm.initialized) return false;
    return true;
  }

  std::vector<Parameter<T>*> parameters() {
    std::vector<Parameter<T>*> out;
    for (auto& b : blocks_) {
      out.insert(out.end(), {&b.actnorm.scale, &b.actnorm.bias, &b.coupling.w1, &b.coupling.b1, &b.coupling.w2,
                             &b.coupling.b2});
    }
    return out;
  }

  // Data-dependent ActNorm initialisation, block by block, from one batch.
  // Returns false (non-strict) or throws (strict) when already initialised.
  bool init_data_dependent(const Tensor<T>& batch) {
    check_input(batch.shape());
    if (initialized()) {
      if (options_.strict) throw ValidationError("init_data_dependent: ActNorm layers already initialised");
      return false;
    }
    Tape<T> tape(false);
    Var<T> h = tape.constant(batch);
    Var<T> logdet = tape.constant(Tensor<T>(Shape{batch.dim(0), 1, batch.dim(2), batch.dim(3)}));
    for (auto& b : blocks_) {
      b.actnorm.initialize_from(h.value());
      h = block_forward(tape, b, h, logdet);
    }
    return true;
  }

  FlowOutput<T> forward(Tape<T>& tape, const Var<T>& x) {
    check_input(x.shape());
    if (options_.strict && !initialized()) throw ValidationError("forward: ActNorm not initialised (strict mode)");
    const Shape& s = x.shape();
    FlowOutput<T> out;
    Var<T> h = x;
    Var<T> total = tape.constant(Tensor<T>(Shape{s[0], 1, s[2], s[3]}));
    for (auto& b : blocks_) {
      Var<T> ld = tape.constant(Tensor<T>(Shape{s[0], 1, s[2], s[3]}));
      h = block_forward(tape, b, h, ld);
      out.block_logdets.push_back(ld);
      total = add(total, ld);
    }
    out.z = h;
    out.logdet = total;
    return out;
  }

  Tensor<T> inverse(const Tensor<T>& z) {
    check_input(z.shape());
    Tensor<T> h = z;
    for (std::size_t i = blocks_.size(); i-- > 0;) {
      FlowBlock<T>& b = blocks_[i];
      h = b.coupling.inverse(h);
      Tape<T> tape(false);
      h = permute_channels(tape.constant(h), b.permutation.inverse_indices()).value();
      h = b.actnorm.inverse(h);
    }
    return h;
  }

 private:
  Var<T> block_forward(Tape<T>& tape, FlowBlock<T>& b, const Var<T>& x, Var<T>& logdet) {
    Var<T> h = b.actnorm.forward(tape, x, logdet);
    h = permute_channels(h, b.permutation.forward_indices());
    return b.coupling.forward(tape, h, logdet);
  }

  void check_input(const Shape& s) const {
    if (s.size() != 4 || s[1] != options_.channels) {
      throw ShapeError("flow: expected (N, " + std::to_string(options_.channels) + ", H, W), got " + shape_string(s));
    }
  }

  FlowOptions options_;
  std::vector<FlowBlock<T>> blocks_;
};

}  // namespace flowclas
