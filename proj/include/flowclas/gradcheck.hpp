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

// Central finite-difference checks of the reverse-mode gradients, per module,
// on tiny double-precision instances. Backs the `gradcheck` subcommand.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <functional>
#include <random>
#include <string>
#include <vector>

#include "flowclas/contrast.hpp"
#include "flowclas/flow.hpp"
#include "flowclas/latent.hpp"
#include "flowclas/losses.hpp"
#include "flowclas/ops.hpp"

namespace flowclas {

struct GradCheckResult {
  std::string module;
  double max_rel_error = 0.0;
  std::size_t checked = 0;
};

using LossFn = std::function<Var<double>(Tape<double>&)>;

// |analytic - numeric| / max(|analytic|, |numeric|, floor), maximised over every
// coordinate of every parameter. `floor` keeps near-zero gradients from
// dominating through round-off.
inline double max_relative_error(const LossFn& f, const std::vector<Parameter<double>*>& params, double h = 1e-4,
                                 double floor = 1e-3, std::size_t* checked = nullptr) {
  for (Parameter<double>* p : params) p->zero_grad();
  {
    Tape<double> tape;
    tape.backward(f(tape));
  }
  auto eval = [&] {
    Tape<double> tape(false);
    return f(tape).value().item();
  };
  double worst = 0.0;
  std::size_t n = 0;
  for (Parameter<double>* p : params) {
    for (std::size_t i = 0; i < p->value.size(); ++i) {
      const double orig = p->value[i];
      p->value[i] = orig + h;
      const double up = eval();
      p->value[i] = orig - h;
      const double down = eval();
      p->value[i] = orig;
      const double numeric = (up - down) / (2 * h);
      const double analytic = p->grad[i];
      const double denom = std::max({std::abs(analytic), std::abs(numeric), floor});
      worst = std::max(worst, std::abs(analytic - numeric) / denom);
      ++n;
    }
  }
  if (checked) *checked = n;
  return worst;
}

namespace detail {

inline void randomize(Parameter<double>& p, std::mt19937_64& rng, double stddev) {
  std::normal_distribution<double> d(0.0, stddev);
  for (double& v : p.value.data()) v = d(rng);
}

inline Tensor<double> random_tensor(const Shape& s, std::mt19937_64& rng, double stddev = 1.0) {
  Tensor<double> t(s);
  std::normal_distribution<double> d(0.0, stddev);
  for (double& v : t.data()) v = d(rng);
  return t;
}

inline Tensor<double> random_mask(const Shape& s, std::mt19937_64& rng) {
  Tensor<double> m(s);
  std::bernoulli_distribution b(0.4);
  for (double& v : m.data()) v = b(rng) ? 1.0 : 0.0;
  m[0] = 0.0;  // keep both classes present
  m[1] = 1.0;
  return m;
}

}  // namespace detail

// One result per module: tensor-core primitives, flow, latent, projection
// head and the three losses.
inline std::vector<GradCheckResult> run_gradcheck(std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::vector<GradCheckResult> out;
  auto record = [&](const std::string& name, const LossFn& f, const std::vector<Parameter<double>*>& params) {
    GradCheckResult r{name, 0.0, 0};
    r.max_rel_error = max_relative_error(f, params, 1e-4, 1e-3, &r.checked);
    out.push_back(r);
  };

  {
    Parameter<double> a("a", detail::random_tensor({2, 3, 2, 2}, rng));
    Parameter<double> b("b", detail::random_tensor({1, 3, 1, 1}, rng));
    Parameter<double> w("w", detail::random_tensor({3, 3, 3, 3}, rng, 0.3));
    Parameter<double> bias("bias", detail::random_tensor({3}, rng));
    Parameter<double> m("m", detail::random_tensor({4, 3}, rng));
    const Tensor<double> weights = detail::random_tensor({2, 3, 2, 2}, rng);
    record("tensor-core",
           [&](Tape<double>& t) {
             Var<double> x = mul(add(t.parameter(a), t.parameter(b)), tanh(t.parameter(a)));
             Var<double> c = conv2d_3x3(x, t.parameter(w), t.parameter(bias));
             Var<double> r = sum(mul(relu(shift(c, 0.1)), t.constant(weights)));
             Var<double> n = l2_normalize_channelwise(t.parameter(m));
             Var<double> g = matmul(n, n, true);
             Var<double> e = mean(exp(scale(sum_axis(t.parameter(a), 1), 0.3)));
             return add(add(r, sum(mul(g, g))), log(shift(e, 1.0)));
           },
           {&a, &b, &w, &bias, &m});
  }

  {
    FlowStack<double> flow(FlowOptions{4, 2, 2.0, seed, false});
    for (auto& blk : flow.blocks()) {
      detail::randomize(blk.actnorm.scale, rng, 0.3);
      for (double& v : blk.actnorm.scale.value.data()) v += 1.0;
      detail::randomize(blk.actnorm.bias, rng, 0.3);
      detail::randomize(blk.coupling.w2, rng, 0.2);
      detail::randomize(blk.coupling.b2, rng, 0.2);
      blk.actnorm.initialized = true;
    }
    const Tensor<double> x = detail::random_tensor({2, 4, 3, 3}, rng);
    const Tensor<double> rz = detail::random_tensor({2, 4, 3, 3}, rng);
    record("flow-net",
           [&](Tape<double>& t) {
             FlowOutput<double> o = flow.forward(t, t.constant(x));
             return add(sum(mul(o.z, t.constant(rz))), sum(o.logdet));
           },
           flow.parameters());
  }

  {
    DiagonalGaussianLatent<double> latent(3);
    detail::randomize(latent.mu, rng, 0.5);
    detail::randomize(latent.log_var, rng, 0.5);
    const Tensor<double> z = detail::random_tensor({2, 3, 2, 2}, rng);
    const Tensor<double> r = detail::random_tensor({2, 3, 2, 2}, rng);
    record("latent-gaussian",
           [&](Tape<double>& t) {
             Var<double> zc = t.constant(z);
             return add(sum(latent.log_prob_map(t, zc)), sum(mul(latent.standardize(t, zc), t.constant(r))));
           },
           latent.parameters());
  }

  {
    ProjectionHead<double> head(4, 3, seed);
    detail::randomize(head.b, rng, 0.3);
    const Tensor<double> x_mix = detail::random_tensor({2, 4, 3, 3}, rng);
    const Tensor<double> x_out = detail::random_tensor({2, 4, 3, 3}, rng);
    const Tensor<double> y_mix = detail::random_mask({2, 1, 3, 3}, rng);
    const Tensor<double> y_out = detail::random_mask({2, 1, 3, 3}, rng);
    const AnchorIndices idx = sample_anchor_indices(y_mix, y_out, 3, seed, true);
    record("contrast-sampler",
           [&](Tape<double>& t) {
             Var<double> e_mix = head.project(t, t.constant(x_mix));
             Var<double> e_out = head.project(t, t.constant(x_out));
             return supervised_contrastive(gather_anchor_sets(e_mix, e_out, idx), 0.5).loss;
           },
           head.parameters());
  }

  {
    Parameter<double> lp("log_prob", detail::random_tensor({2, 1, 3, 3}, rng));
    Parameter<double> ld("logdet", detail::random_tensor({2, 1, 3, 3}, rng));
    Parameter<double> emb("embeddings", detail::random_tensor({6, 3}, rng));
    const Tensor<double> mask = detail::random_mask({2, 1, 3, 3}, rng);
    const std::vector<int> labels{0, 1, 0, 1, 1, 0};
    record("losses",
           [&](Tape<double>& t) {
             Var<double> p = t.parameter(lp), d = t.parameter(ld);
             Var<double> l_ml = masked_nll(p, d, mask);
             Var<double> l_min = outlier_likelihood_min(p, d, mask);
             Var<double> l_con = supervised_contrastive(l2_normalize_channelwise(t.parameter(emb)), labels, 4, 0.1).loss;
             return add(add(scale(l_ml, 0.7), l_con), l_min);
           },
           {&lp, &ld, &emb});
  }
  return out;
}

}  // namespace flowclas
