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

// Optimisation loop: per-step batches, losses per variant, AdamW update,
// ActNorm initialisation on the first batch, checkpoints and resume.

#include <algorithm>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <functional>
#include <numeric>
#include <optional>
#include <random>
#include <string>
#include <vector>

#include "flowclas/image.hpp"
#include "flowclas/manifest.hpp"
#include "flowclas/model.hpp"
#include "flowclas/synth.hpp"

namespace flowclas {

// Encoder features and feature-resolution masks for one split, stacked.
struct FeatureSet {
  Tensor<float> features;  // (N, C, H', W')
  Tensor<float> masks;     // (N, 1, H', W'), 1 = outlier
  std::vector<std::string> ids;

  std::size_t size() const { return features.empty() ? 0 : features.dim(0); }

  Tensor<float> gather(const Tensor<float>& src, const std::vector<std::size_t>& idx) const {
    Shape s = src.shape();
    const std::size_t per = src.size() / s[0];
    s[0] = idx.size();
    Tensor<float> out(s);
    for (std::size_t i = 0; i < idx.size(); ++i)
      std::copy_n(src.data().data() + idx[i] * per, per, out.data().data() + i * per);
    return out;
  }
};

// Stacks per-image (1, C, H', W') features with full-resolution masks, which
// are downsampled to H' x W' with the any-rule.
inline FeatureSet make_feature_set(const std::vector<Tensor<float>>& features, const std::vector<BinaryMask>& masks,
                                   std::vector<std::string> ids = {}) {
  if (features.size() != masks.size()) throw ValidationError("feature set: feature and mask counts differ");
  FeatureSet set;
  set.ids = std::move(ids);
  if (features.empty()) return set;
  const Shape s0 = features[0].shape();
  if (s0.size() != 4 || s0[0] != 1) throw ShapeError("feature set: expected (1, C, H, W), got " + shape_string(s0));
  const std::size_t n = features.size(), per = features[0].size(), h = s0[2], w = s0[3];
  set.features = Tensor<float>(Shape{n, s0[1], h, w});
  set.masks = Tensor<float>(Shape{n, 1, h, w});
  for (std::size_t i = 0; i < n; ++i) {
    if (features[i].shape() != s0) {
      throw ShapeError("feature set: item " + std::to_string(i) + " has shape " + shape_string(features[i].shape()) +
                       ", expected " + shape_string(s0));
    }
    std::copy_n(features[i].data().data(), per, set.features.data().data() + i * per);
    const BinaryMask d = downsample_mask(masks[i], h, w);
    for (std::size_t p = 0; p < h * w; ++p) set.masks[i * h * w + p] = d.values[p] ? 1.0f : 0.0f;
  }
  return set;
}

// Features come from a record's `features` file when present, otherwise from the extractor.
inline FeatureSet load_feature_set(const Manifest& m, const ToyExtractor& extractor) {
  std::vector<Tensor<float>> feats;
  std::vector<BinaryMask> masks;
  std::vector<std::string> ids;
  for (const ManifestRecord& r : m.records) {
    if (!r.mask) throw ValidationError(m.path.string() + ":" + std::to_string(r.line) + ": record has no mask");
    BinaryMask mask = read_mask_png(m.resolve(*r.mask));
    if (r.features) {
      Tensor<float> f = io::read_features(m.resolve(*r.features));
      if (f.rank() == 3) f = f.reshaped(Shape{1, f.dim(0), f.dim(1), f.dim(2)});
      feats.push_back(std::move(f));
    } else {
      feats.push_back(extractor.extract(read_png(m.resolve(r.image))));
    }
    masks.push_back(std::move(mask));
    ids.push_back(r.image);
  }
  return make_feature_set(feats, masks, std::move(ids));
}

struct StepRecord {
  std::size_t step = 0;  // 1-based update index
  double l_ml = 0, l_con = 0, l_min = 0, total = 0, lr = 0;
  bool contrastive_skipped = false;
};

enum class TrainStatus { kCompleted, kDiverged };

struct TrainResult {
  TrainStatus status = TrainStatus::kCompleted;
  std::size_t steps_done = 0;
  std::size_t skipped = 0;
  std::vector<StepRecord> log;
  std::string message;
};

inline std::string csv_header() { return "step,l_ml,l_con,l_min,total,lr"; }

inline std::string csv_row(const StepRecord& r) {
  char buf[256];
  std::snprintf(buf, sizeof buf, "%zu,%.9g,%.9g,%.9g,%.9g,%.9g", r.step, r.l_ml, r.l_con, r.l_min, r.total, r.lr);
  return buf;
}

class Trainer {
 public:
  using Logger = std::function<void(const std::string&)>;

  Trainer(const TrainConfig& cfg, const FeatureSet& mixed, const FeatureSet& outliers)
      : cfg_(cfg),
        mixed_(mixed),
        outliers_(outliers),
        model_(cfg),
        opt_(AdamWOptions{0.9, 0.999, 1e-8, cfg.weight_decay, cfg.grad_clip}) {
    cfg_.validate();
    if (mixed_.size() == 0) throw ValidationError("train: mixed set is empty");
    if (mixed_.features.dim(1) != cfg_.channels()) {
      throw ValidationError("train: features have " + std::to_string(mixed_.features.dim(1)) + " channels, config says " +
                            std::to_string(cfg_.channels()));
    }
    const bool needs_outliers = cfg_.variant == Variant::kContrastive;
    if (needs_outliers && outliers_.size() == 0) throw ValidationError("train: contrastive variant needs outlier images");
    if (outliers_.size() > 0 && outliers_.features.shape() != Shape{outliers_.size(), cfg_.channels(),
                                                                    mixed_.features.dim(2), mixed_.features.dim(3)}) {
      throw ValidationError("train: outlier features " + shape_string(outliers_.features.shape()) +
                            " do not match mixed features " + shape_string(mixed_.features.shape()));
    }
    total_ = cfg_.total_steps(mixed_.size());
    warmup_ = cfg_.warmup_for(total_);
    if (total_ > 0 && warmup_ >= total_) throw ValidationError("config: warmup_steps must be below the total step count");
  }

  const TrainConfig& config() const { return cfg_; }
  Model& model() { return model_; }
  AdamW<float>& optimizer() { return opt_; }
  std::size_t step() const { return step_; }
  std::size_t total_steps() const { return total_; }
  std::size_t steps_per_epoch() const { return (mixed_.size() + cfg_.batch_size - 1) / cfg_.batch_size; }
  void set_logger(Logger log) { log_ = std::move(log); }

  double lr_for_step(std::size_t k) const { return lr_at(k + 1, total_, warmup_, cfg_.lr_max); }

  // Mixed-batch indices for step k: epoch-wise shuffle seeded by (seed, epoch).
  std::vector<std::size_t> mixed_batch(std::size_t k) const {
    const std::size_t per = steps_per_epoch(), epoch = k / per, pos = k % per;
    std::vector<std::size_t> order(mixed_.size());
    std::iota(order.begin(), order.end(), std::size_t{0});
    std::mt19937_64 rng(derive_seed(cfg_.seed, seed_stream::kShuffle, epoch));
    std::shuffle(order.begin(), order.end(), rng);
    const std::size_t b = pos * cfg_.batch_size, e = std::min(b + cfg_.batch_size, order.size());
    return {order.begin() + static_cast<std::ptrdiff_t>(b), order.begin() + static_cast<std::ptrdiff_t>(e)};
  }

  // Outlier-batch indices for step k, without replacement when the set is large enough.
  std::vector<std::size_t> outlier_batch(std::size_t k) const {
    std::mt19937_64 rng(derive_seed(cfg_.seed, seed_stream::kOutlierBatch, k));
    const std::size_t n = outliers_.size(), want = cfg_.batch_size;
    std::vector<std::size_t> idx;
    if (n >= want) {
      std::vector<std::size_t> pool(n);
      std::iota(pool.begin(), pool.end(), std::size_t{0});
      for (std::size_t i = 0; i < want; ++i) {
        std::uniform_int_distribution<std::size_t> pick(i, n - 1);
        std::swap(pool[i], pool[pick(rng)]);
        idx.push_back(pool[i]);
      }
    } else {
      std::uniform_int_distribution<std::size_t> pick(0, n - 1);
      for (std::size_t i = 0; i < want; ++i) idx.push_back(pick(rng));
    }
    return idx;
  }

  // Runs step `step()` and advances. Returns nothing when the batch was skipped
  // as degenerate. Throws NumericError on divergence, leaving parameters untouched.
  std::optional<StepRecord> step_once() {
    if (step_ >= total_) throw Error("train: no steps left");
    const std::size_t k = step_;
    const auto mix_idx = mixed_batch(k);
    const Tensor<float> x_mix = mixed_.gather(mixed_.features, mix_idx);
    const Tensor<float> y_mix = mixed_.gather(mixed_.masks, mix_idx);

    if (!model_.flow.initialized()) {
      Tape<float> init_tape(false);
      model_.flow.init_data_dependent(model_.flow_input(init_tape, x_mix).value());
    }

    const auto params = model_.parameters();
    for (Parameter<float>* p : params) p->zero_grad();

    Tape<float> tape;
    Var<float> h_mix = model_.flow_input(tape, x_mix);
    FlowOutput<float> out = model_.flow.forward(tape, h_mix);
    Var<float> logp = model_.latent.log_prob_map(tape, out.z);
    StepRecord rec;
    rec.step = k + 1;
    rec.lr = lr_for_step(k);
    Var<float> l_ml;
    try {
      l_ml = masked_nll(logp, out.logdet, y_mix);
    } catch (const DegenerateBatch& e) {
      note("step " + std::to_string(k + 1) + ": skipped (" + e.what() + ")");
      ++step_;
      ++skipped_;
      return std::nullopt;
    }
    std::optional<Var<float>> l_con, l_min;
    if (cfg_.variant == Variant::kMin) l_min = outlier_likelihood_min(logp, out.logdet, y_mix);
    if (cfg_.variant == Variant::kContrastive) {
      const auto out_idx = outlier_batch(k);
      const Tensor<float> x_out = outliers_.gather(outliers_.features, out_idx);
      const Tensor<float> y_out = outliers_.gather(outliers_.masks, out_idx);
      try {
        const AnchorIndices idx = sample_anchor_indices(y_mix, y_out, cfg_.n_per_set,
                                                        derive_seed(cfg_.seed, seed_stream::kAnchors, k),
                                                        cfg_.natural_image_mode);
        Var<float> e_mix, e_out;
        if (cfg_.contrast_space == Placement::kLatent) {
          FlowOutput<float> out_o = model_.flow.forward(tape, model_.flow_input(tape, x_out));
          e_mix = model_.proj.project(tape, model_.latent.standardize(tape, out.z));
          e_out = model_.proj.project(tape, model_.latent.standardize(tape, out_o.z));
        } else {
          e_mix = model_.proj.project(tape, h_mix);
          e_out = model_.proj.project(tape, model_.flow_input(tape, x_out));
        }
        l_con = supervised_contrastive(gather_anchor_sets(e_mix, e_out, idx), static_cast<float>(cfg_.tau)).loss;
      } catch (const DegenerateBatch& e) {
        rec.contrastive_skipped = true;
        note("step " + std::to_string(k + 1) + ": contrastive term skipped (" + e.what() + ")");
      }
    }
    Var<float> total = total_loss(l_ml, l_con, l_min, static_cast<float>(cfg_.alpha), cfg_.variant);
    tape.backward(total);
    opt_.step(params, rec.lr);

    rec.l_ml = l_ml.value().item();
    rec.l_con = l_con ? l_con->value().item() : 0.0;
    rec.l_min = l_min ? l_min->value().item() : 0.0;
    rec.total = total.value().item();
    ++step_;
    return rec;
  }

  // Trains to the end. With `out_dir`, writes checkpoint.ckpt at every epoch
  // boundary and at the end, and loss.csv (appended to when resuming).
  TrainResult run(const std::optional<std::filesystem::path>& out_dir = std::nullopt) {
    TrainResult result;
    std::vector<StepRecord> pending;
    if (out_dir) {
      std::filesystem::create_directories(*out_dir);
      if (step_ == 0 || !std::filesystem::exists(*out_dir / "loss.csv")) {
        std::ofstream(*out_dir / "loss.csv", std::ios::trunc) << csv_header() << '\n';
      }
    }
    auto flush = [&] {
      if (!out_dir) return;
      std::ofstream csv(*out_dir / "loss.csv", std::ios::app);
      for (const StepRecord& r : pending) csv << csv_row(r) << '\n';
      pending.clear();
      if (!csv) throw Error("train: cannot write " + (*out_dir / "loss.csv").string());
    };
    const std::size_t per = steps_per_epoch();
    while (step_ < total_) {
      std::optional<StepRecord> rec;
      try {
        rec = step_once();
      } catch (const NumericError& e) {
        flush();
        result.status = TrainStatus::kDiverged;
        result.message = "diverged at step " + std::to_string(step_ + 1) + ": " + e.what();
        note(result.message);
        break;
      }
      if (rec) {
        result.log.push_back(*rec);
        pending.push_back(*rec);
      }
      if (out_dir && (step_ % per == 0 || step_ == total_)) {
        flush();
        io::save_checkpoint(checkpoint(), *out_dir / "checkpoint.ckpt");
      }
    }
    if (out_dir && total_ == 0) io::save_checkpoint(checkpoint(), *out_dir / "checkpoint.ckpt");
    result.steps_done = step_;
    result.skipped = skipped_;
    return result;
  }

  io::Checkpoint checkpoint() {
    io::Checkpoint ckpt;
    model_.write_entries(ckpt);
    for (const auto& [name, mo] : opt_.moments()) {
      ckpt.entries.emplace_back("opt.m." + name, mo.m);
      ckpt.entries.emplace_back("opt.v." + name, mo.v);
    }
    nlohmann::json j{{"config", to_json(cfg_)},
                     {"state",
                      {{"step", step_},
                       {"optimizer_steps", opt_.step_count()},
                       {"skipped", skipped_},
                       {"actnorm_initialized", model_.flow.initialized()},
                       {"contrast_space", to_string(model_.proj.placement)}}}};
    ckpt.config_json = j.dump();
    return ckpt;
  }

  // Continues from a checkpoint written by a compatible configuration.
  void resume(const io::Checkpoint& ckpt) {
    nlohmann::json j;
    TrainConfig saved;
    try {
      j = nlohmann::json::parse(ckpt.config_json);
      saved = config_from_json(j.at("config"));
    } catch (const nlohmann::json::exception& e) {
      throw ValidationError(std::string("resume: malformed checkpoint config: ") + e.what());
    }
    check_compatible(saved);
    const auto& st = j.at("state");
    model_.read_entries(ckpt, st.at("actnorm_initialized").get<bool>());
    opt_.moments().clear();
    for (Parameter<float>* p : model_.parameters()) {
      const Tensor<float>* m = ckpt.find("opt.m." + p->name);
      const Tensor<float>* v = ckpt.find("opt.v." + p->name);
      if (!m || !v) continue;
      if (m->shape() != p->value.shape() || v->shape() != p->value.shape()) {
        throw ValidationError("resume: optimizer moments for '" + p->name + "' have the wrong shape");
      }
      opt_.moments()[p->name] = {*m, *v};
    }
    opt_.set_step_count(st.at("optimizer_steps").get<std::size_t>());
    step_ = st.at("step").get<std::size_t>();
    skipped_ = st.value("skipped", std::size_t{0});
    if (step_ > total_) throw ValidationError("resume: checkpoint step is past the configured total");
  }

 private:
  void check_compatible(const TrainConfig& saved) const {
    auto mismatch = [](const std::string& what, const std::string& a, const std::string& b) {
      throw ValidationError("resume: " + what + " changed (checkpoint " + a + ", config " + b + ")");
    };
    auto num = [&](const char* what, std::size_t a, std::size_t b) {
      if (a != b) mismatch(what, std::to_string(a), std::to_string(b));
    };
    num("flow_steps", saved.flow_steps, cfg_.flow_steps);
    num("channels", saved.extractor.channels, cfg_.extractor.channels);
    num("extractor_hidden", saved.extractor.hidden, cfg_.extractor.hidden);
    num("extractor_seed", saved.extractor.seed, cfg_.extractor.seed);
    num("proj_dim", saved.proj_dim, cfg_.proj_dim);
    if (saved.contrast_space != cfg_.contrast_space) {
      mismatch("contrast_space", to_string(saved.contrast_space), to_string(cfg_.contrast_space));
    }
    if (saved.s_max != cfg_.s_max) mismatch("s_max", std::to_string(saved.s_max), std::to_string(cfg_.s_max));
  }

  void note(const std::string& msg) const {
    if (log_) log_(msg);
  }

  TrainConfig cfg_;
  const FeatureSet& mixed_;
  const FeatureSet& outliers_;
  Model model_;
  AdamW<float> opt_;
  std::size_t total_ = 0, warmup_ = 0, step_ = 0, skipped_ = 0;
  Logger log_;
};

// Rebuilds the model stored in a checkpoint, for scoring.
inline std::pair<TrainConfig, Model> load_model(const io::Checkpoint& ckpt) {
  nlohmann::json j;
  TrainConfig cfg;
  try {
    j = nlohmann::json::parse(ckpt.config_json);
    cfg = config_from_json(j.at("config"));
  } catch (const nlohmann::json::exception& e) {
    throw ValidationError(std::string("checkpoint: malformed config: ") + e.what());
  }
  Model model(cfg);
  model.read_entries(ckpt, j.at("state").at("actnorm_initialized").get<bool>());
  return {cfg, std::move(model)};
}

}  // namespace flowclas
