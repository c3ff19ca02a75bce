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

// Training configuration and the trainable model bundle (flow, latent
// Gaussian, projection head, optional feature neck) with checkpoint mapping.

#include <cmath>
#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "flowclas/contrast.hpp"
#include "flowclas/extractor.hpp"
#include "flowclas/flow.hpp"
#include "flowclas/io.hpp"
#include "flowclas/latent.hpp"
#include "flowclas/losses.hpp"
#include "flowclas/optim.hpp"
#include "flowclas/scorer.hpp"
#include "json.hpp"

namespace flowclas {

struct TrainConfig {
  double alpha = 1.0;
  double tau = 0.10;
  std::size_t proj_dim = 256;
  std::size_t flow_steps = 8;
  double lr_max = 1e-5;
  double weight_decay = 1e-5;
  std::optional<std::size_t> warmup_steps;  // default: 3% of the total
  std::size_t epochs = 1;
  std::size_t max_steps = 0;  // 0: epochs alone decide the step count
  std::size_t batch_size = 32;
  std::uint64_t seed = 0;
  std::size_t n_per_set = 256;
  Placement contrast_space = Placement::kLatent;
  Variant variant = Variant::kContrastive;
  bool natural_image_mode = false;
  double s_max = 2.0;
  double grad_clip = 10.0;
  bool score_logdet = false;  // add -(1/C) logdet to scores
  ExtractorOptions extractor;

  std::size_t channels() const { return extractor.channels; }

  std::size_t total_steps(std::size_t dataset_size) const {
    const std::size_t per_epoch = (dataset_size + batch_size - 1) / batch_size;
    const std::size_t n = epochs * per_epoch;
    return max_steps > 0 ? std::min(n, max_steps) : n;
  }

  std::size_t warmup_for(std::size_t total) const {
    return warmup_steps ? *warmup_steps : static_cast<std::size_t>(0.03 * static_cast<double>(total));
  }

  void validate() const {
    auto fail = [](const std::string& m) { throw ValidationError("config: " + m); };
    if (!(alpha >= 0) || !std::isfinite(alpha)) fail("alpha must be a finite non-negative number");
    if (!(tau > 0)) fail("tau must be positive");
    if (flow_steps == 0) fail("flow_steps must be positive");
    if (!(lr_max >= 0)) fail("lr_max must be non-negative");
    if (!(weight_decay >= 0)) fail("weight_decay must be non-negative");
    if (batch_size == 0) fail("batch_size must be positive");
    if (n_per_set == 0) fail("n_per_set must be positive");
    if (!(s_max > 0)) fail("s_max must be positive");
    if (extractor.channels == 0 || extractor.hidden == 0) fail("extractor widths must be positive");
    if (proj_dim == 0 || proj_dim >= extractor.channels) {
      fail("proj_dim must be in [1, channels) (got " + std::to_string(proj_dim) + " with " +
           std::to_string(extractor.channels) + " channels)");
    }
    if (contrast_space == Placement::kFeature && variant != Variant::kContrastive) {
      fail("contrast_space=feature requires variant=contrastive");
    }
  }
};

inline nlohmann::json to_json(const TrainConfig& c) {
  nlohmann::json j{{"alpha", c.alpha},
                   {"tau", c.tau},
                   {"proj_dim", c.proj_dim},
                   {"flow_steps", c.flow_steps},
                   {"lr_max", c.lr_max},
                   {"weight_decay", c.weight_decay},
                   {"epochs", c.epochs},
                   {"max_steps", c.max_steps},
                   {"batch_size", c.batch_size},
                   {"seed", c.seed},
                   {"n_per_set", c.n_per_set},
                   {"contrast_space", to_string(c.contrast_space)},
                   {"variant", to_string(c.variant)},
                   {"natural_image_mode", c.natural_image_mode},
                   {"s_max", c.s_max},
                   {"grad_clip", c.grad_clip},
                   {"score_logdet", c.score_logdet},
                   {"channels", c.extractor.channels},
                   {"extractor_hidden", c.extractor.hidden},
                   {"extractor_seed", c.extractor.seed}};
  j["warmup_steps"] = c.warmup_steps ? nlohmann::json(*c.warmup_steps) : nlohmann::json(nullptr);
  return j;
}

// Overlays `j` on `base`. Unknown keys are rejected so typos do not pass silently.
inline TrainConfig config_from_json(const nlohmann::json& j, TrainConfig c = {}) {
  if (!j.is_object()) throw ValidationError("config: expected a JSON object");
  try {
    for (const auto& [key, v] : j.items()) {
      if (key == "alpha") c.alpha = v.get<double>();
      else if (key == "tau") c.tau = v.get<double>();
      else if (key == "proj_dim") c.proj_dim = v.get<std::size_t>();
      else if (key == "flow_steps") c.flow_steps = v.get<std::size_t>();
      else if (key == "lr_max") c.lr_max = v.get<double>();
      else if (key == "weight_decay") c.weight_decay = v.get<double>();
      else if (key == "warmup_steps") c.warmup_steps = v.is_null() ? std::nullopt : std::optional(v.get<std::size_t>());
      else if (key == "epochs") c.epochs = v.get<std::size_t>();
      else if (key == "max_steps") c.max_steps = v.get<std::size_t>();
      else if (key == "batch_size") c.batch_size = v.get<std::size_t>();
      else if (key == "seed") c.seed = v.get<std::uint64_t>();
      else if (key == "n_per_set") c.n_per_set = v.get<std::size_t>();
      else if (key == "contrast_space") c.contrast_space = parse_placement(v.get<std::string>());
      else if (key == "variant") c.variant = parse_variant(v.get<std::string>());
      else if (key == "natural_image_mode") c.natural_image_mode = v.get<bool>();
      else if (key == "s_max") c.s_max = v.get<double>();
      else if (key == "grad_clip") c.grad_clip = v.get<double>();
      else if (key == "score_logdet") c.score_logdet = v.get<bool>();
      else if (key == "channels") c.extractor.channels = v.get<std::size_t>();
      else if (key == "extractor_hidden") c.extractor.hidden = v.get<std::size_t>();
      else if (key == "extractor_seed") c.extractor.seed = v.get<std::uint64_t>();
      else throw ValidationError("config: unknown key '" + key + "'");
    }
  } catch (const nlohmann::json::exception& e) {
    throw ValidationError(std::string("config: ") + e.what());
  }
  return c;
}

// splitmix64 finaliser; keeps per-purpose streams independent of call order.
inline std::uint64_t derive_seed(std::uint64_t seed, std::uint64_t stream, std::uint64_t index = 0) {
  std::uint64_t x = seed ^ (stream * 0x9E3779B97F4A7C15ULL) ^ (index * 0xD1B54A32D192ED03ULL);
  x += 0x9E3779B97F4A7C15ULL;
  x = (x ^ (x >> 30)) * 0xBF58476D1CE4E5B9ULL;
  x = (x ^ (x >> 27)) * 0x94D049BB133111EBULL;
  return x ^ (x >> 31);
}

namespace seed_stream {
inline constexpr std::uint64_t kFlow = 1, kProjection = 2, kShuffle = 3, kOutlierBatch = 4, kAnchors = 5;
}

class Model {
 public:
  explicit Model(const TrainConfig& cfg)
      : flow(FlowOptions{cfg.channels(), cfg.flow_steps, cfg.s_max, derive_seed(cfg.seed, seed_stream::kFlow)}),
        latent(cfg.channels()),
        proj(cfg.channels(), cfg.proj_dim, derive_seed(cfg.seed, seed_stream::kProjection), cfg.contrast_space) {
    if (cfg.contrast_space == Placement::kFeature) neck.emplace(cfg.channels());
  }

  FlowStack<float> flow;
  DiagonalGaussianLatent<float> latent;
  ProjectionHead<float> proj;
  std::optional<FeatureNeck<float>> neck;

  std::vector<Parameter<float>*> parameters() {
    std::vector<Parameter<float>*> out = flow.parameters();
    for (auto* p : latent.parameters()) out.push_back(p);
    for (auto* p : proj.parameters()) out.push_back(p);
    if (neck)
      for (auto* p : neck->parameters()) out.push_back(p);
    return out;
  }

  // Encoder features -> flow input (through the neck when present).
  Var<float> flow_input(Tape<float>& tape, const Tensor<float>& features) {
    Var<float> x = tape.constant(features);
    return neck ? neck->forward(tape, x) : x;
  }

  // One (H', W') NPD map per image of a (N, C, H', W') feature batch.
  std::vector<Tensor<float>> score(const Tensor<float>& features, bool include_logdet) {
    Tape<float> tape(false);
    FlowOutput<float> out = flow.forward(tape, flow_input(tape, features));
    return split_maps(npd_map(out.z.value(), latent, include_logdet ? &out.logdet.value() : nullptr));
  }

  // Parameter values and the block permutations as named tensors.
  void write_entries(io::Checkpoint& ckpt) {
    auto perm_entry = [](std::size_t i, const ChannelPermutation& p) {
      Tensor<float> t(Shape{p.forward_indices().size()});
      for (std::size_t c = 0; c < t.size(); ++c) t[c] = static_cast<float>(p.forward_indices()[c]);
      return std::pair{"block" + std::to_string(i) + ".perm", std::move(t)};
    };
    const auto& blocks = flow.blocks();
    for (std::size_t i = 0; i < blocks.size(); ++i) {
      const FlowBlock<float>& b = blocks[i];
      ckpt.entries.emplace_back(b.actnorm.scale.name, b.actnorm.scale.value);
      ckpt.entries.emplace_back(b.actnorm.bias.name, b.actnorm.bias.value);
      ckpt.entries.push_back(perm_entry(i, b.permutation));
      for (const Parameter<float>* p : {&b.coupling.w1, &b.coupling.b1, &b.coupling.w2, &b.coupling.b2})
        ckpt.entries.emplace_back(p->name, p->value);
    }
    for (auto* p : latent.parameters()) ckpt.entries.emplace_back(p->name, p->value);
    for (auto* p : proj.parameters()) ckpt.entries.emplace_back(p->name, p->value);
    if (neck)
      for (auto* p : neck->parameters()) ckpt.entries.emplace_back(p->name, p->value);
  }

  void read_entries(const io::Checkpoint& ckpt, bool actnorm_initialized) {
    auto& blocks = flow.blocks();
    for (std::size_t i = 0; i < blocks.size(); ++i) {
      const Tensor<float>& perm = ckpt.at("block" + std::to_string(i) + ".perm");
      std::vector<std::size_t> idx;
      for (float v : perm.data()) {
        if (!(v >= 0) || v != std::floor(v)) throw ValidationError("checkpoint: malformed permutation entry");
        idx.push_back(static_cast<std::size_t>(v));
      }
      blocks[i].permutation = ChannelPermutation(std::move(idx));
      if (blocks[i].permutation.forward_indices().size() != flow.channels()) {
        throw ValidationError("checkpoint: permutation size does not match channel count");
      }
      blocks[i].actnorm.initialized = actnorm_initialized;
    }
    for (Parameter<float>* p : parameters()) {
      const Tensor<float>& t = ckpt.at(p->name);
      if (t.shape() != p->value.shape()) {
        throw ValidationError("checkpoint: entry '" + p->name + "' has shape " + shape_string(t.shape()) +
                              ", expected " + shape_string(p->value.shape()));
      }
      p->value = t;
    }
  }
};

}  // namespace flowclas
