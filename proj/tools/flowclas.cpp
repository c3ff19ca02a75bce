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


// flowclas command-line front end: synth-mix, extract, train, score, eval, gradcheck.
// Exit codes: 0 success, 1 check failure (gradcheck, divergence), 2 usage or validation error.

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "flowclas.hpp"
#include "json.hpp"

namespace fs = std::filesystem;
using json = nlohmann::json;
using namespace flowclas;

namespace {

constexpr int kOk = 0;
constexpr int kCheckFailed = 1;
constexpr int kInvalid = 2;

void log_line(const std::string& msg) { std::cerr << "[flowclas] " << msg << '\n'; }

void print_resolved(const std::string& cmd, const json& cfg) {
  std::cerr << "[flowclas] " << cmd << " config: " << cfg.dump() << '\n';
  if (cfg.contains("seed")) std::cerr << "[flowclas] seed: " << cfg["seed"].dump() << '\n';
}

Manifest require_manifest(const std::string& path, bool masks) {
  if (!fs::exists(path)) throw ValidationError("manifest not found: " + path);
  Manifest m = load_manifest(path, masks);
  if (!m.missing.empty()) {
    throw ValidationError("manifest " + path + " references missing file(s), first: " + m.missing.front());
  }
  return m;
}

std::string stem_of(const std::string& image) { return fs::path(image).stem().string(); }

struct SynthArgs {
  std::string inliers, outliers, out;
  std::size_t count = 0;
  std::uint64_t seed = 0;
};

int run_synth(const SynthArgs& a) {
  print_resolved("synth-mix", {{"inliers", a.inliers}, {"outliers", a.outliers}, {"count", a.count},
                               {"seed", a.seed}, {"out", a.out}});
  const Manifest ins = require_manifest(a.inliers, false);
  const Manifest outs = require_manifest(a.outliers, true);
  const MixedDatasetReport r = build_mixed_dataset(ins, outs, a.count, a.seed, a.out);
  for (const auto& s : r.skipped) log_line("skipped " + s);
  log_line("wrote " + std::to_string(r.records.size()) + " mixed samples to " + a.out);
  return kOk;
}

struct ExtractArgs {
  std::string images, out;
  ExtractorOptions ex;
};

int run_extract(const ExtractArgs& a) {
  print_resolved("extract", {{"images", a.images}, {"out", a.out}, {"seed", a.ex.seed},
                             {"channels", a.ex.channels}, {"hidden", a.ex.hidden}});
  const Manifest m = require_manifest(a.images, false);
  const ToyExtractor ex(a.ex);
  fs::create_directories(a.out);
  std::vector<json> records;
  for (const ManifestRecord& r : m.records) {
    const std::string name = stem_of(r.image) + ".ft";
    io::write_features(ex.extract(read_png(m.resolve(r.image))), fs::path(a.out) / name);
    json rec = r.raw;
    rec["image"] = fs::absolute(m.resolve(r.image)).string();
    if (r.mask) rec["mask"] = fs::absolute(m.resolve(*r.mask)).string();
    rec["features"] = name;
    records.push_back(std::move(rec));
  }
  write_manifest(fs::path(a.out) / "features.jsonl", records);
  log_line("extracted " + std::to_string(records.size()) + " feature maps");
  return kOk;
}

struct TrainArgs {
  std::string config, mixed, outliers, out, resume;
  std::optional<std::size_t> epochs, max_steps, batch_size, flow_steps, proj_dim, n_per_set, warmup_steps;
  std::optional<std::uint64_t> seed;
  std::optional<double> lr, alpha, tau, weight_decay;
  std::optional<std::string> variant, contrast_space;
  bool natural_image_mode = false;
};

TrainConfig resolve_config(const TrainArgs& a) {
  TrainConfig cfg;
  if (!a.config.empty()) {
    std::ifstream in(a.config);
    if (!in) throw ValidationError("cannot open config " + a.config);
    json j;
    try {
      j = json::parse(in);
    } catch (const json::parse_error& e) {
      throw ValidationError("config " + a.config + ": " + e.what());
    }
    cfg = config_from_json(j);
  }
  if (a.epochs) cfg.epochs = *a.epochs;
  if (a.max_steps) cfg.max_steps = *a.max_steps;
  if (a.batch_size) cfg.batch_size = *a.batch_size;
  if (a.flow_steps) cfg.flow_steps = *a.flow_steps;
  if (a.proj_dim) cfg.proj_dim = *a.proj_dim;
  if (a.n_per_set) cfg.n_per_set = *a.n_per_set;
  if (a.warmup_steps) cfg.warmup_steps = *a.warmup_steps;
  if (a.seed) cfg.seed = *a.seed;
  if (a.lr) cfg.lr_max = *a.lr;
  if (a.alpha) cfg.alpha = *a.alpha;
  if (a.tau) cfg.tau = *a.tau;
  if (a.weight_decay) cfg.weight_decay = *a.weight_decay;
  if (a.variant) cfg.variant = parse_variant(*a.variant);
  if (a.contrast_space) cfg.contrast_space = parse_placement(*a.contrast_space);
  if (a.natural_image_mode) cfg.natural_image_mode = true;
  cfg.validate();
  return cfg;
}

int run_train(const TrainArgs& a) {
  const TrainConfig cfg = resolve_config(a);
  json shown = to_json(cfg);
  shown["mixed"] = a.mixed;
  shown["outliers"] = a.outliers;
  shown["out"] = a.out;
  if (!a.resume.empty()) shown["resume"] = a.resume;
  print_resolved("train", shown);

  const ToyExtractor ex(cfg.extractor);
  const FeatureSet mixed = load_feature_set(require_manifest(a.mixed, true), ex);
  FeatureSet outliers;
  if (!a.outliers.empty()) outliers = load_feature_set(require_manifest(a.outliers, true), ex);
  Trainer trainer(cfg, mixed, outliers);
  trainer.set_logger(log_line);
  if (!a.resume.empty()) {
    trainer.resume(io::load_checkpoint(a.resume));
    log_line("resumed at step " + std::to_string(trainer.step()));
  }
  const TrainResult r = trainer.run(fs::path(a.out));
  log_line("steps " + std::to_string(r.steps_done) + "/" + std::to_string(trainer.total_steps()) + ", skipped " +
           std::to_string(r.skipped));
  if (r.status == TrainStatus::kDiverged) {
    log_line(r.message + "; last good checkpoint kept in " + a.out);
    return kCheckFailed;
  }
  return kOk;
}

struct ScoreArgs {
  std::string ckpt, images, out;
  bool logdet = false;
};

int run_score(const ScoreArgs& a) {
  const io::Checkpoint ckpt = io::load_checkpoint(a.ckpt);
  auto [cfg, model] = load_model(ckpt);
  const bool with_logdet = a.logdet || cfg.score_logdet;
  print_resolved("score", {{"ckpt", a.ckpt}, {"images", a.images}, {"out", a.out}, {"logdet", with_logdet},
                           {"seed", cfg.seed}, {"model", to_json(cfg)}});
  const Manifest m = require_manifest(a.images, false);
  const ToyExtractor ex(cfg.extractor);
  fs::create_directories(a.out);
  for (const ManifestRecord& r : m.records) {
    const Image img = read_png(m.resolve(r.image));
    const Tensor<float> feats = r.features ? io::read_features(m.resolve(*r.features)) : ex.extract(img);
    ScoreMap s{model.score(feats.rank() == 3 ? feats.reshaped({1, feats.dim(0), feats.dim(1), feats.dim(2)}) : feats,
                           with_logdet)
                   .front(),
               {}, r.image};
    export_heatmap(s, img.height, img.width, a.out, stem_of(r.image));
  }
  log_line("scored " + std::to_string(m.records.size()) + " images");
  return kOk;
}

struct EvalArgs {
  std::string scores, masks, out;
  std::size_t bins = metrics::kDefaultBins;
  std::size_t buckets = 100;
};

int run_eval(const EvalArgs& a) {
  print_resolved("eval", {{"scores", a.scores}, {"masks", a.masks}, {"bins", a.bins}, {"out", a.out}});
  if (a.bins == 1) throw ValidationError("--bins must be 0 (exhaustive) or at least 2");
  const Manifest m = require_manifest(a.masks, true);
  std::vector<double> scores;
  std::vector<std::uint8_t> labels;
  for (const ManifestRecord& r : m.records) {
    const BinaryMask mask = read_mask_png(m.resolve(*r.mask));
    const fs::path score_path = fs::path(a.scores) / (stem_of(r.image) + ".score.ft");
    if (!fs::exists(score_path)) throw ValidationError("missing score file " + score_path.string());
    const Tensor<float> s = io::read_features(score_path, Shape{mask.height, mask.width});
    for (std::size_t i = 0; i < s.size(); ++i) {
      scores.push_back(s[i]);
      labels.push_back(mask.values[i]);
    }
  }
  const metrics::EvalResult e = metrics::evaluate(scores, labels, a.bins, a.buckets);
  const json out{{"auprc", e.auprc},
                 {"fpr95", e.fpr95},
                 {"bins", e.bins},
                 {"positives", e.positives},
                 {"negatives", e.negatives},
                 {"histogram_overlap", e.histogram.overlap},
                 {"fpr_interpolation", "linear"},
                 {"images", m.records.size()}};
  const fs::path out_path(a.out);
  if (out_path.has_parent_path()) fs::create_directories(out_path.parent_path());
  const std::string text = out.dump(2) + "\n";
  io::write_file(out_path, std::span(reinterpret_cast<const std::uint8_t*>(text.data()), text.size()));
  std::ofstream hist(out_path.parent_path() / "hist.csv", std::ios::trunc);
  hist << "bucket,lo,hi,inlier,outlier\n";
  char row[160];
  for (std::size_t b = 0; b < e.histogram.inlier.size(); ++b) {
    std::snprintf(row, sizeof row, "%zu,%.9g,%.9g,%zu,%zu\n", b, e.histogram.edges[b], e.histogram.edges[b + 1],
                  e.histogram.inlier[b], e.histogram.outlier[b]);
    hist << row;
  }
  std::printf("auprc %.6f fpr95 %.6f\n", e.auprc, e.fpr95);
  return kOk;
}

int run_gradcheck_cmd(std::uint64_t seed) {
  print_resolved("gradcheck", {{"seed", seed}, {"threshold", 1e-3}});
  bool ok = true;
  for (const GradCheckResult& r : run_gradcheck(seed)) {
    const bool pass = r.max_rel_error <= 1e-3;
    ok = ok && pass;
    std::printf("%-18s max_rel_error %.3e over %zu coordinates %s\n", r.module.c_str(), r.max_rel_error, r.checked,
                pass ? "ok" : "FAIL");
  }
  return ok ? kOk : kCheckFailed;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"flowclas: flow-based pixel anomaly scoring with contrastive outlier exposure"};
  app.require_subcommand(1);

  SynthArgs synth;
  auto* c_synth = app.add_subcommand("synth-mix", "paste auxiliary objects into inlier images");
  c_synth->add_option("--inliers", synth.inliers, "inlier manifest")->required();
  c_synth->add_option("--outliers", synth.outliers, "outlier manifest (with masks)")->required();
  c_synth->add_option("--count", synth.count, "number of mixed samples")->required();
  c_synth->add_option("--seed", synth.seed, "random seed")->required();
  c_synth->add_option("--out", synth.out, "output directory")->required();

  ExtractArgs extract;
  auto* c_extract = app.add_subcommand("extract", "run the frozen toy extractor over a manifest");
  c_extract->add_option("--images", extract.images, "image manifest")->required();
  c_extract->add_option("--out", extract.out, "output directory")->required();
  c_extract->add_option("--seed", extract.ex.seed, "extractor seed");
  c_extract->add_option("--channels", extract.ex.channels, "feature channels");
  c_extract->add_option("--hidden", extract.ex.hidden, "hidden width");

  TrainArgs train;
  auto* c_train = app.add_subcommand("train", "train the flow");
  c_train->add_option("--config", train.config, "JSON config (flags override it)");
  c_train->add_option("--mixed", train.mixed, "mixed-image manifest")->required();
  c_train->add_option("--outliers", train.outliers, "outlier manifest");
  c_train->add_option("--out", train.out, "output directory")->required();
  c_train->add_option("--resume", train.resume, "checkpoint to continue from");
  c_train->add_option("--epochs", train.epochs);
  c_train->add_option("--max-steps", train.max_steps);
  c_train->add_option("--batch-size", train.batch_size);
  c_train->add_option("--flow-steps", train.flow_steps);
  c_train->add_option("--proj-dim", train.proj_dim);
  c_train->add_option("--n-per-set", train.n_per_set);
  c_train->add_option("--warmup-steps", train.warmup_steps);
  c_train->add_option("--seed", train.seed);
  c_train->add_option("--lr", train.lr);
  c_train->add_option("--alpha", train.alpha);
  c_train->add_option("--tau", train.tau);
  c_train->add_option("--weight-decay", train.weight_decay);
  c_train->add_option("--variant", train.variant, "contrastive | min | ml_only");
  c_train->add_option("--contrast-space", train.contrast_space, "latent | feature");
  c_train->add_flag("--natural-image-mode", train.natural_image_mode);

  ScoreArgs score;
  auto* c_score = app.add_subcommand("score", "write per-pixel anomaly scores and heatmaps");
  c_score->add_option("--ckpt", score.ckpt, "checkpoint")->required();
  c_score->add_option("--images", score.images, "image manifest")->required();
  c_score->add_option("--out", score.out, "output directory")->required();
  c_score->add_flag("--logdet", score.logdet, "include the log-determinant term");

  EvalArgs eval;
  auto* c_eval = app.add_subcommand("eval", "pixel-level AUPRC and FPR95");
  c_eval->add_option("--scores", eval.scores, "directory of .score.ft files")->required();
  c_eval->add_option("--masks", eval.masks, "manifest with ground-truth masks")->required();
  c_eval->add_option("--bins", eval.bins, "threshold bins (0 = exhaustive)");
  c_eval->add_option("--buckets", eval.buckets, "histogram buckets");
  c_eval->add_option("--out", eval.out, "eval.json path")->required();

  std::uint64_t gc_seed = 0;
  auto* c_grad = app.add_subcommand("gradcheck", "finite-difference gradient check per module");
  c_grad->add_option("--seed", gc_seed, "random seed");

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return kInvalid;
  }

  try {
    if (c_synth->parsed()) return run_synth(synth);
    if (c_extract->parsed()) return run_extract(extract);
    if (c_train->parsed()) return run_train(train);
    if (c_score->parsed()) return run_score(score);
    if (c_eval->parsed()) return run_eval(eval);
    if (c_grad->parsed()) return run_gradcheck_cmd(gc_seed);
  } catch (const ValidationError& e) {
    log_line(std::string("error: ") + e.what());
    return kInvalid;
  } catch (const FormatError& e) {
    log_line(std::string("error: ") + e.what());
    return kInvalid;
  } catch (const ShapeError& e) {
    log_line(std::string("error: ") + e.what());
    return kInvalid;
  } catch (const std::exception& e) {
    log_line(std::string("error: ") + e.what());
    return kCheckFailed;
  }
  return kInvalid;
}
