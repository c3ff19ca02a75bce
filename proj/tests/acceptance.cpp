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

// Acceptance checks, one PASS/FAIL line each.
//   acceptance            run all of them
//   acceptance 3 5        run only checks 3 and 5
// Exit status is the number of failures.

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iterator>
#include <map>
#include <optional>
#include <random>
#include <string>
#include <vector>

#include <unistd.h>

#include "flowclas.hpp"
#include "json.hpp"
#include "support/oracles.hpp"

using namespace flowclas;
namespace fs = std::filesystem;

namespace {

struct Outcome {
  bool pass = false;
  std::string detail;
};

std::string fmt(const char* f, auto... args) {
  char buf[512];
  std::snprintf(buf, sizeof buf, f, args...);
  return buf;
}

// ---- 1: invertibility

Outcome invertibility() {
  double worst = 0;
  for (std::size_t l : {1u, 8u, 16u})
    for (std::size_t c : {4u, 16u}) {
      std::mt19937_64 rng(l * 100 + c);
      FlowStack<float> flow(FlowOptions{c, l, 2.0, l * 31 + c});
      // Perturbed couplings, then ActNorm initialised on data through them.
      std::normal_distribution<double> d(0.0, 0.05);
      for (auto& b : flow.blocks())
        for (Parameter<float>* p : {&b.coupling.b1, &b.coupling.w2, &b.coupling.b2})
          for (auto& v : p->value.data()) v = static_cast<float>(d(rng));
      flow.init_data_dependent(oracle::random_tensor_f({8, c, 4, 4}, rng));
      const Tensor<float> x = oracle::random_tensor_f({100, c, 4, 4}, rng);
      Tape<float> tape(false);
      const Tensor<float> back = flow.inverse(flow.forward(tape, tape.constant(x)).z.value());
      for (std::size_t i = 0; i < x.size(); ++i) worst = std::max(worst, static_cast<double>(std::abs(back[i] - x[i])));
    }
  return {worst < 1e-4, fmt("max |inverse(forward(x)) - x| = %.3e over L in {1,8,16}, C in {4,16}", worst)};
}

// ---- 2: log-det vs numeric Jacobian

std::vector<double> forward_z(FlowStack<double>& flow, const Tensor<double>& x) {
  Tape<double> tape(false);
  return flow.forward(tape, tape.constant(x)).z.value().vec();
}

Outcome logdet_exactness() {
  double worst = 0;
  std::size_t flows = 0;
  for (std::size_t c : {2u, 4u, 6u})
    for (std::uint64_t k = 0; k < 20; ++k) {
      std::mt19937_64 rng(c * 1000 + k);
      FlowStack<double> flow(FlowOptions{c, 1 + k % 4, 2.0, k});
      std::normal_distribution<double> d(0.0, 0.4);
      for (auto& b : flow.blocks()) {
        for (auto& v : b.actnorm.scale.value.data()) v = 1.0 + d(rng);
        for (Parameter<double>* p : {&b.actnorm.bias, &b.coupling.b1, &b.coupling.w2, &b.coupling.b2})
          for (auto& v : p->value.data()) v = d(rng);
        b.actnorm.initialized = true;
      }
      const Tensor<double> x = oracle::random_tensor({1, c, 1, 1}, rng);
      std::vector<std::vector<double>> jac(c, std::vector<double>(c));
      const double h = 1e-5;
      for (std::size_t j = 0; j < c; ++j) {
        Tensor<double> up = x, down = x;
        up[j] += h;
        down[j] -= h;
        const auto zu = forward_z(flow, up), zd = forward_z(flow, down);
        for (std::size_t i = 0; i < c; ++i) jac[i][j] = (zu[i] - zd[i]) / (2 * h);
      }
      const double numeric = oracle::log_abs_det(jac);
      Tape<double> tape(false);
      const double analytic = flow.forward(tape, tape.constant(x)).logdet.value()[0];
      worst = std::max(worst, std::abs(analytic - numeric) / std::max(std::abs(numeric), 1e-12));
      ++flows;
    }
  return {worst < 1e-3, fmt("%zu flows, worst relative log-det error %.3e", flows, worst)};
}

// ---- 3: gradient suite

Tensor<double> bernoulli(const Shape& s, std::mt19937_64& rng, double p = 0.4) {
  Tensor<double> m(s);
  std::bernoulli_distribution b(p);
  for (auto& v : m.data()) v = b(rng) ? 1.0 : 0.0;
  m[0] = 0.0;
  m[1] = 1.0;
  return m;
}

Outcome gradient_suite() {
  std::map<std::string, double> err;
  std::mt19937_64 rng(21);

  for (std::size_t c : {3u, 4u}) {
    FlowStack<double> flow(FlowOptions{c, 3, 2.0, c});
    std::normal_distribution<double> d(0.0, 0.3);
    for (auto& b : flow.blocks()) {
      for (auto& v : b.actnorm.scale.value.data()) v = 1.0 + d(rng);
      for (Parameter<double>* p : {&b.actnorm.bias, &b.coupling.b1, &b.coupling.w2, &b.coupling.b2})
        for (auto& v : p->value.data()) v = d(rng);
      b.actnorm.initialized = true;
    }
    DiagonalGaussianLatent<double> latent(c);
    for (Parameter<double>* p : latent.parameters())
      for (auto& v : p->value.data()) v = d(rng);
    const Tensor<double> x = oracle::random_tensor({2, c, 3, 3}, rng);
    const Tensor<double> mask = bernoulli({2, 1, 3, 3}, rng);
    std::vector<Parameter<double>*> params = flow.parameters();
    for (auto* p : latent.parameters()) params.push_back(p);
    const double e = oracle::gradient_error(
        [&](Tape<double>& t) {
          FlowOutput<double> o = flow.forward(t, t.constant(x));
          Var<double> lp = latent.log_prob_map(t, o.z);
          return add(masked_nll(lp, o.logdet, mask), outlier_likelihood_min(lp, o.logdet, mask));
        },
        params);
    err["flow+latent C=" + std::to_string(c)] = e;
  }

  {
    ProjectionHead<double> head(5, 3, 4);
    std::normal_distribution<double> d(0.0, 0.3);
    for (auto& v : head.b.value.data()) v = d(rng);
    const Tensor<double> x_mix = oracle::random_tensor({2, 5, 3, 3}, rng);
    const Tensor<double> x_out = oracle::random_tensor({1, 5, 3, 3}, rng);
    const Tensor<double> y_mix = bernoulli({2, 1, 3, 3}, rng), y_out = bernoulli({1, 1, 3, 3}, rng);
    const AnchorIndices idx = sample_anchor_indices(y_mix, y_out, 4, 9, true);
    err["projection+contrastive"] = oracle::gradient_error(
        [&](Tape<double>& t) {
          return supervised_contrastive(
                     gather_anchor_sets(head.project(t, t.constant(x_mix)), head.project(t, t.constant(x_out)), idx),
                     0.2)
              .loss;
        },
        head.parameters());
  }

  {
    Parameter<double> emb("emb", oracle::random_tensor({7, 4}, rng));
    const std::vector<int> labels{0, 1, 1, 0, 1, 0, 0};
    err["contrastive embeddings"] = oracle::gradient_error(
        [&](Tape<double>& t) {
          return supervised_contrastive(l2_normalize_channelwise(t.parameter(emb)), labels, 5, 0.1).loss;
        },
        {&emb});
  }

  // The full objective, built the way a training step builds it, in both placements.
  for (Placement pl : {Placement::kLatent, Placement::kFeature}) {
    const std::size_t c = 4;
    FlowStack<double> flow(FlowOptions{c, 2, 2.0, 8});
    DiagonalGaussianLatent<double> latent(c);
    ProjectionHead<double> head(c, 2, 6, pl);
    FeatureNeck<double> neck(c);
    std::vector<Parameter<double>*> params = flow.parameters();
    for (auto* p : latent.parameters()) params.push_back(p);
    for (auto* p : head.parameters()) params.push_back(p);
    if (pl == Placement::kFeature)
      for (auto* p : neck.parameters()) params.push_back(p);
    std::normal_distribution<double> d(0.0, 0.2);
    for (Parameter<double>* p : params)
      for (auto& v : p->value.data()) v += d(rng);
    for (auto& b : flow.blocks()) b.actnorm.initialized = true;
    const Tensor<double> x_mix = oracle::random_tensor({2, c, 3, 3}, rng);
    const Tensor<double> x_out = oracle::random_tensor({1, c, 3, 3}, rng);
    const Tensor<double> y_mix = bernoulli({2, 1, 3, 3}, rng), y_out = bernoulli({1, 1, 3, 3}, rng);
    const AnchorIndices idx = sample_anchor_indices(y_mix, y_out, 4, 3, true);
    err[std::string("total loss, ") + to_string(pl) + " placement"] = oracle::gradient_error(
        [&](Tape<double>& t) {
          auto input = [&](const Tensor<double>& x) {
            return pl == Placement::kFeature ? neck.forward(t, t.constant(x)) : t.constant(x);
          };
          Var<double> h_mix = input(x_mix), h_out = input(x_out);
          FlowOutput<double> o = flow.forward(t, h_mix);
          Var<double> l_ml = masked_nll(latent.log_prob_map(t, o.z), o.logdet, y_mix);
          Var<double> e_mix, e_out;
          if (pl == Placement::kLatent) {
            e_mix = head.project(t, latent.standardize(t, o.z));
            e_out = head.project(t, latent.standardize(t, flow.forward(t, h_out).z));
          } else {
            e_mix = head.project(t, h_mix);
            e_out = head.project(t, h_out);
          }
          Var<double> l_con = supervised_contrastive(gather_anchor_sets(e_mix, e_out, idx), 0.3).loss;
          return total_loss<double>(l_ml, l_con, std::nullopt, 0.5, Variant::kContrastive);
        },
        params);
  }

  double worst = 0;
  std::string detail;
  for (const auto& [name, e] : err) {
    worst = std::max(worst, e);
    detail += fmt("%s%s %.1e", detail.empty() ? "" : "; ", name.c_str(), e);
  }
  for (const GradCheckResult& r : run_gradcheck(5)) {
    worst = std::max(worst, r.max_rel_error);
    detail += fmt("; gradcheck %s %.1e", r.module.c_str(), r.max_rel_error);
  }
  return {worst < 1e-3, fmt("worst %.2e: ", worst) + detail};
}

// ---- 4: density normalisation

Outcome density_normalization() {
  FlowStack<double> flow(FlowOptions{1, 4, 2.0, 4});
  DiagonalGaussianLatent<double> latent(1);
  std::mt19937_64 rng(44);
  auto sample = [&](std::size_t n) {
    Tensor<double> x(Shape{n, 1, 1, 1});
    std::bernoulli_distribution side(0.35);
    std::normal_distribution<double> a(-1.5, 0.6), b(2.0, 0.8);
    for (auto& v : x.data()) v = side(rng) ? a(rng) : b(rng);
    return x;
  };
  flow.init_data_dependent(sample(512));
  std::vector<Parameter<double>*> params = flow.parameters();
  for (auto* p : latent.parameters()) params.push_back(p);
  AdamW<double> opt(AdamWOptions{0.9, 0.999, 1e-8, 0.0, 10.0});
  const Tensor<double> none(Shape{128, 1, 1, 1});
  for (std::size_t step = 0; step < 500; ++step) {
    for (auto* p : params) p->zero_grad();
    Tape<double> tape;
    FlowOutput<double> o = flow.forward(tape, tape.constant(sample(128)));
    tape.backward(masked_nll(latent.log_prob_map(tape, o.z), o.logdet, none));
    opt.step(params, lr_at(step, 500, 20, 1e-2));
  }
  const std::size_t points = 4001;
  Tensor<double> grid(Shape{points, 1, 1, 1});
  for (std::size_t i = 0; i < points; ++i) grid[i] = -10.0 + 20.0 * static_cast<double>(i) / (points - 1);
  Tape<double> tape(false);
  FlowOutput<double> o = flow.forward(tape, tape.constant(grid));
  const Tensor<double> lp = latent.log_prob_map(tape, o.z).value();
  const double h = 20.0 / (points - 1);
  double integral = 0;
  for (std::size_t i = 0; i < points; ++i) {
    const double p = std::exp(lp[i] + o.logdet.value()[i]);
    integral += (i == 0 || i + 1 == points ? 0.5 : 1.0) * p * h;
  }
  return {integral >= 0.98 && integral <= 1.02, fmt("integral of p_X over [-10, 10] = %.6f", integral)};
}

// ---- 5: metric oracles

Outcome metric_oracles() {
  std::mt19937_64 rng(55);
  double worst_binned_pr = 0, worst_binned_fpr = 0, worst_exact = 0;
  std::size_t binned_fail = 0;
  for (int k = 0; k < 200; ++k) {
    const std::size_t n = std::uniform_int_distribution<std::size_t>(20, 1000)(rng);
    const double prevalence = std::uniform_real_distribution<double>(0.1, 0.9)(rng);
    const double shift = std::uniform_real_distribution<double>(0.0, 3.0)(rng);
    std::vector<double> s(n);
    std::vector<std::uint8_t> l(n);
    std::bernoulli_distribution pos(prevalence);
    std::normal_distribution<double> g;
    for (std::size_t i = 0; i < n; ++i) {
      l[i] = pos(rng);
      s[i] = g(rng) + (l[i] ? shift : 0.0);
    }
    l[0] = 1;
    l[1] = 0;
    const double o_pr = oracle::auprc(s, l), o_fpr = oracle::fpr_at_tpr(s, l);
    const double db = std::abs(metrics::auprc(s, l) - o_pr), df = std::abs(metrics::fpr_at_tpr(s, l) - o_fpr);
    worst_binned_pr = std::max(worst_binned_pr, db);
    worst_binned_fpr = std::max(worst_binned_fpr, df);
    if (db >= 1e-3 || df >= 1e-3) ++binned_fail;
    worst_exact = std::max({worst_exact, std::abs(metrics::auprc(s, l, metrics::kExhaustive) - o_pr),
                            std::abs(metrics::fpr_at_tpr(s, l, 0.95, metrics::kExhaustive) - o_fpr)});
  }
  return {binned_fail == 0 && worst_exact < 1e-9,
          fmt("5000 bins: %zu/200 instances off by >= 1e-3 (worst auprc %.2e, fpr95 %.2e); exhaustive worst %.2e",
              binned_fail, worst_binned_pr, worst_binned_fpr, worst_exact)};
}

// ---- 6: compositing and mask downsampling

Outcome compositing() {
  std::mt19937_64 rng(66);
  std::size_t mismatches = 0;
  auto uni = [&](std::size_t lo, std::size_t hi) { return std::uniform_int_distribution<std::size_t>(lo, hi)(rng); };
  for (int k = 0; k < 100; ++k) {
    const std::size_t h = uni(8, 48), w = uni(8, 48), oh = uni(4, 32), ow = uni(4, 32);
    Image x_in(h, w), x_out(oh, ow);
    for (auto& p : x_in.pixels) p = static_cast<std::uint8_t>(uni(0, 255));
    for (auto& p : x_out.pixels) p = static_cast<std::uint8_t>(uni(0, 255));
    BinaryMask y_out(oh, ow);
    std::bernoulli_distribution b(std::uniform_real_distribution<double>(0.05, 0.9)(rng));
    for (auto& v : y_out.values) v = b(rng);
    y_out.at(oh / 2, ow / 2) = 1;
    const MixedSample s = paste_object(x_in, x_out, y_out, static_cast<std::uint64_t>(k));
    const PlacedObject obj = place_object(x_out, y_out, s.placement, h, w);
    if (s.image.pixels != oracle::composite(x_in, obj.pixels, obj.mask).pixels) ++mismatches;
    if (s.mask.values != obj.mask.values) ++mismatches;
    const std::size_t dh = uni(1, h), dw = uni(1, w);
    if (downsample_mask(s.mask, dh, dw).values != oracle::block_max(s.mask, dh, dw).values) ++mismatches;
  }
  return {mismatches == 0, fmt("%zu mismatches over 100 composites and 100 downsamplings", mismatches)};
}

// ---- 7: contrastive closed forms

double con(const std::vector<std::vector<double>>& rows, const std::vector<int>& labels, std::size_t anchors, double tau) {
  Tensor<double> t(Shape{rows.size(), rows[0].size()});
  for (std::size_t i = 0; i < rows.size(); ++i)
    for (std::size_t k = 0; k < rows[i].size(); ++k) t[i * rows[i].size() + k] = rows[i][k];
  Tape<double> tape(false);
  return supervised_contrastive(tape.constant(t), labels, anchors, tau).loss.value().item();
}

Outcome contrastive_forms() {
  const double c = 0.3, s = std::sqrt(1 - c * c);
  const double sym = std::abs(con({{1, 0, 0}, {c, s, 0}, {c, -s, 0}}, {0, 0, 1}, 1, 0.1) - std::log(2.0));
  const double sep = std::abs(con({{1, 0}, {1, 0}, {-1, 0}}, {0, 0, 1}, 1, 0.1) - 2.061e-9);
  std::mt19937_64 rng(77);
  double worst = 0;
  for (int k = 0; k < 50; ++k) {
    const std::size_t n = std::uniform_int_distribution<std::size_t>(4, 40)(rng);
    const std::size_t d = std::uniform_int_distribution<std::size_t>(2, 16)(rng);
    const double tau = std::uniform_real_distribution<double>(0.05, 1.0)(rng);
    std::normal_distribution<double> g;
    std::vector<std::vector<double>> rows(n, std::vector<double>(d));
    for (auto& r : rows) {
      double norm = 0;
      for (auto& v : r) {
        v = g(rng);
        norm += v * v;
      }
      for (auto& v : r) v /= std::sqrt(norm);
    }
    std::vector<int> labels(n);
    for (auto& v : labels) v = static_cast<int>(rng() % 2);
    labels[0] = 0;
    labels[1] = 0;
    labels[2] = 1;
    const std::size_t anchors = std::uniform_int_distribution<std::size_t>(1, n)(rng);
    worst = std::max(worst, std::abs(con(rows, labels, anchors, tau) - oracle::contrastive(rows, labels, anchors, tau)));
  }
  return {sym < 1e-9 && sep < 1e-9 && worst < 1e-6,
          fmt("log 2 case off by %.1e, separated case off by %.1e, 50 random instances worst %.1e", sym, sep, worst)};
}

// ---- 8 and 9: synthetic benchmark

struct VariantResult {
  double auprc = 0, fpr95 = 1;
  bool ok = false;
  std::string error;
};

struct BenchmarkRun {
  std::map<Variant, std::vector<VariantResult>> results;
  std::map<std::string, std::string> files;  // relative path -> content
};

TrainConfig benchmark_config(std::uint64_t seed, Variant v) {
  TrainConfig cfg;
  cfg.extractor.channels = 16;
  cfg.flow_steps = 4;
  cfg.batch_size = 8;
  cfg.max_steps = 300;
  cfg.epochs = 1000;
  cfg.proj_dim = 8;
  cfg.tau = 0.1;
  cfg.lr_max = 3e-3;
  cfg.n_per_set = 256;
  cfg.seed = seed;
  cfg.variant = v;
  return cfg;
}

BenchmarkRun run_benchmark(const fs::path& dir) {
  BenchmarkRun run;
  for (std::uint64_t seed = 0; seed < 3; ++seed) {
    const PreparedBenchmark b =
        prepare_benchmark(100 + seed, textures::BenchmarkOptions{}, benchmark_config(seed, Variant::kMlOnly).extractor, 128);
    for (Variant v : {Variant::kMlOnly, Variant::kMin, Variant::kContrastive}) {
      const fs::path out = dir / (std::string(to_string(v)) + "_seed" + std::to_string(seed));
      fs::create_directories(out);
      VariantResult r;
      try {
        Trainer trainer(benchmark_config(seed, v), b.mixed, b.outliers);
        const TrainResult tr = trainer.run(out);
        if (tr.status == TrainStatus::kDiverged) throw NumericError(tr.message);
        const metrics::EvalResult e = evaluate_model(trainer.model(), b.test_features, b.test_masks, false);
        r = {e.auprc, e.fpr95, true, ""};
        const nlohmann::json j{{"auprc", e.auprc}, {"fpr95", e.fpr95}, {"bins", e.bins},
                               {"positives", e.positives}, {"negatives", e.negatives},
                               {"histogram_overlap", e.histogram.overlap}};
        std::ofstream(out / "eval.json", std::ios::binary) << j.dump(2) << '\n';
      } catch (const std::exception& e) {
        r.error = e.what();
      }
      std::printf("  seed %llu %-12s auprc %.4f fpr95 %.4f%s%s\n", static_cast<unsigned long long>(seed), to_string(v),
                  r.auprc, r.fpr95, r.ok ? "" : "  error: ", r.error.c_str());
      std::fflush(stdout);
      run.results[v].push_back(r);
      for (const char* f : {"loss.csv", "eval.json"})
        if (std::ifstream in{out / f, std::ios::binary})
          run.files[(out.filename() / f).string()] = {std::istreambuf_iterator<char>(in), {}};
    }
  }
  return run;
}

Outcome benchmark_outcome(const BenchmarkRun& run) {
  auto mean = [&](Variant v, double VariantResult::*field) {
    double s = 0;
    for (const auto& r : run.results.at(v)) s += r.*field;
    return s / static_cast<double>(run.results.at(v).size());
  };
  for (const auto& [v, rs] : run.results)
    for (const auto& r : rs)
      if (!r.ok) return {false, std::string(to_string(v)) + " failed: " + r.error};
  const double con_pr = mean(Variant::kContrastive, &VariantResult::auprc);
  const double con_fpr = mean(Variant::kContrastive, &VariantResult::fpr95);
  const double ml_pr = mean(Variant::kMlOnly, &VariantResult::auprc);
  const double min_fpr = mean(Variant::kMin, &VariantResult::fpr95);
  const bool pass = con_pr > 0.90 && con_fpr < 0.15 && con_pr >= ml_pr + 0.05 && con_fpr <= min_fpr;
  return {pass, fmt("seed means: contrastive auprc %.4f fpr95 %.4f; ml_only auprc %.4f; min fpr95 %.4f", con_pr, con_fpr,
                    ml_pr, min_fpr)};
}

Outcome determinism(const BenchmarkRun& a, const BenchmarkRun& b) {
  if (a.files.empty()) return {false, "no output files"};
  std::size_t differing = 0;
  for (const auto& [name, bytes] : a.files) {
    auto it = b.files.find(name);
    if (it == b.files.end() || it->second != bytes) ++differing;
  }
  if (b.files.size() != a.files.size()) ++differing;
  return {differing == 0, fmt("%zu files compared, %zu differ", a.files.size(), differing)};
}

}  // namespace

int main(int argc, char** argv) {
  std::vector<int> wanted;
  for (int i = 1; i < argc; ++i) wanted.push_back(std::atoi(argv[i]));
  if (wanted.empty()) wanted = {1, 2, 3, 4, 5, 6, 7, 8, 9};

  const fs::path tmp = fs::temp_directory_path() / ("flowclas_acceptance_" + std::to_string(::getpid()));
  struct Cleanup {
    fs::path p;
    ~Cleanup() {
      std::error_code ec;
      fs::remove_all(p, ec);
    }
  } cleanup{tmp};
  std::optional<BenchmarkRun> first;
  auto benchmark_once = [&](const char* tag) {
    std::printf("  benchmark run %s\n", tag);
    return run_benchmark(tmp / tag);
  };

  const std::map<int, std::pair<const char*, std::function<Outcome()>>> checks{
      {1, {"invertibility", invertibility}},
      {2, {"log-det exactness", logdet_exactness}},
      {3, {"gradient suite", gradient_suite}},
      {4, {"density normalization", density_normalization}},
      {5, {"metric oracle equivalence", metric_oracles}},
      {6, {"compositing and mask downsampling", compositing}},
      {7, {"contrastive closed forms", contrastive_forms}},
      {8, {"synthetic benchmark", [&] {
             if (!first) first = benchmark_once("a");
             return benchmark_outcome(*first);
           }}},
      {9, {"determinism", [&] {
             if (!first) first = benchmark_once("a");
             return determinism(*first, benchmark_once("b"));
           }}},
  };

  int failures = 0;
  for (int id : wanted) {
    auto it = checks.find(id);
    if (it == checks.end()) {
      std::fprintf(stderr, "unknown check %d\n", id);
      return 64;
    }
    const auto t0 = std::chrono::steady_clock::now();
    Outcome o;
    try {
      o = it->second.second();
    } catch (const std::exception& e) {
      o = {false, std::string("exception: ") + e.what()};
    }
    const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    std::printf("%s %d %s: %s (%.1fs)\n", o.pass ? "PASS" : "FAIL", id, it->second.first, o.detail.c_str(), secs);
    std::fflush(stdout);
    failures += o.pass ? 0 : 1;
  }
  return failures;
}
