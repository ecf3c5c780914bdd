#pragma once

// Harness producing score tables over generation variants: prior-only
// baseline, plain caption conditioning, BLEU-scaled conditioning and
// multi-caption conditioning.

#include <cstdint>
#include <functional>
#include <string>
#include <vector>

#include "mmvr/metrics.hpp"
#include "mmvr/optimizer.hpp"

namespace mmvr {

struct Variant {
  enum class Kind { kBaseline, kPpgn, kBleuScaled, kMultiCaption };
  Kind kind = Kind::kPpgn;
  int param = 0;  // BLEU order or caption count

  static Variant baseline() { return {Kind::kBaseline, 0}; }
  static Variant ppgn() { return {Kind::kPpgn, 0}; }
  static Variant bleu_scaled(int order) { return {Kind::kBleuScaled, order}; }
  static Variant multi_caption(int count) { return {Kind::kMultiCaption, count}; }
  /// Accepts baseline | ppgn | bleu | multi-caption (param from `param`).
  static Variant parse(const std::string& name, int param);

  std::string label() const;
  /// Update configuration for one caption, derived from `base`.
  UpdateConfig configure(const UpdateConfig& base, const Caption& caption, std::uint64_t paraphrase_seed) const;
};

struct ScoreReport {
  std::string method;
  double inception_mean = 0.0;
  double inception_std = 0.0;
  double detection = 0.0;  // mean over images
  std::size_t samples = 0;

  std::string to_json() const;
};

struct ExperimentOptions {
  UpdateConfig base;  // gammas and iteration budget; captions are ignored
  std::vector<std::uint64_t> seeds{1, 2};
  int splits = 10;
  double detection_threshold = kDetectionThreshold;
  unsigned jobs = 0;               // 0 = hardware concurrency
  std::size_t min_captions = 50;
};

/// One generated image per (caption, seed); both metrics over all of them.
ScoreReport run_experiment(const Variant& variant, const std::vector<Caption>& eval_captions, const ModelSet& models,
                           const ExperimentOptions& opts);

/// First caption of each of the first `count` entries.
std::vector<Caption> eval_captions(const DatasetManifest& manifest, std::size_t count);

/// Aligned "Method | Inception | Detection" table.
std::string format_table(const std::vector<ScoreReport>& reports);
std::string reports_to_json(const std::vector<ScoreReport>& reports);

/// Runs fn(i) for i in [0, n) over up to `jobs` threads.
void parallel_for(std::size_t n, unsigned jobs, const std::function<void(std::size_t)>& fn);

}  // namespace mmvr
