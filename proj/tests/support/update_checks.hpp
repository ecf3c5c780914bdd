#pragma once

// Update-rule algebra checks, shared by the unit tests and the acceptance
// run. Each returns the measured discrepancy so callers pin the tolerance.

#include <cmath>

#include "mmvr/optimizer.hpp"
#include "support/gradcheck.hpp"

namespace mmvr::testing {

inline Tensor start_latent(std::uint64_t seed, std::size_t dim = 64) {
  std::mt19937_64 rng = make_stream(seed);
  return random_tensor({dim}, rng, -1.5, 1.5);
}

inline LatentState state_at(const Tensor& h, std::uint64_t seed = 1) { return LatentState{h, 0, make_stream(seed, 1)}; }

/// Max |h' - h| after one step with all gammas zero.
inline double zero_gamma_drift(const MmvrModels& models, const Caption& caption, const Tensor& h) {
  UpdateConfig cfg;
  cfg.gamma1 = cfg.gamma2 = cfg.gamma3 = 0.0;
  cfg.captions = {caption};
  LatentState s = state_at(h);
  double drift = 0.0;
  for (int i = 0; i < 5; ++i) update_step(s, cfg, models);
  for (std::size_t i = 0; i < h.size(); ++i) drift = std::max(drift, std::abs(s.h.data[i] - h.data[i]));
  return drift;
}

/// Max |h' - h| for one step with gamma2 = gamma3 = 0 and BLEU scaling on,
/// where the target caption is the captioner's own decode of g(h) (F = 1).
/// Returns -1 if the decode is empty (no F = 1 target exists).
inline double perfect_bleu_drift(const MmvrModels& models, const Tensor& h, int order) {
  const Caption decoded = models.captioner.greedy_decode(models.generator.generate(h));
  if (decoded.ids.empty()) return -1.0;
  UpdateConfig cfg;
  cfg.gamma1 = 1.0;
  cfg.gamma2 = cfg.gamma3 = 0.0;
  cfg.ngram_order = order;
  cfg.captions = {decoded};
  LatentState s = state_at(h);
  const StepRecord rec = update_step(s, cfg, models);
  double drift = std::abs(rec.scale);
  for (std::size_t i = 0; i < h.size(); ++i) drift = std::max(drift, std::abs(s.h.data[i] - h.data[i]));
  return drift;
}

/// Max abs difference between the averaged gradient and the mean of the
/// per-caption gradients.
inline double averaging_error(const MmvrModels& models, const std::vector<Caption>& captions, const Tensor& h) {
  const Tensor avg = averaged_caption_gradient(models.generator, models.captioner, h, captions).grad;
  Tensor mean = Tensor::zeros(h.shape);
  for (const auto& c : captions) {
    const Tensor g = caption_gradient(models.generator, models.captioner, h, c).grad;
    for (std::size_t i = 0; i < g.size(); ++i) mean.data[i] += g.data[i] / static_cast<double>(captions.size());
  }
  double err = 0.0;
  for (std::size_t i = 0; i < h.size(); ++i) err = std::max(err, std::abs(avg.data[i] - mean.data[i]));
  return err;
}

/// Cosine between the one-step moves with and without BLEU scaling
/// (gamma2 = gamma3 = 0). Returns NaN when the scale factor is zero.
inline double scaled_direction_cosine(const MmvrModels& models, const Caption& caption, const Tensor& h, int order) {
  UpdateConfig cfg;
  cfg.gamma2 = cfg.gamma3 = 0.0;
  cfg.captions = {caption};
  LatentState plain = state_at(h), scaled = state_at(h);
  update_step(plain, cfg, models);
  cfg.ngram_order = order;
  if (update_step(scaled, cfg, models).scale == 0.0) return std::nan("");
  double dp = 0, np = 0, ns = 0;
  for (std::size_t i = 0; i < h.size(); ++i) {
    const double a = plain.h.data[i] - h.data[i], b = scaled.h.data[i] - h.data[i];
    dp += a * b;
    np += a * a;
    ns += b * b;
  }
  return dp / std::sqrt(np * ns);
}

/// Mean caption loss of the first and last `window` iterations of one run.
inline std::pair<double, double> loss_trend(const GenerationTrace& t, std::size_t window = 20) {
  double first = 0, last = 0;
  for (std::size_t i = 0; i < window; ++i) {
    first += t.records[i].loss;
    last += t.records[t.records.size() - 1 - i].loss;
  }
  return {first / static_cast<double>(window), last / static_cast<double>(window)};
}

}  // namespace mmvr::testing
