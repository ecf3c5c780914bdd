#include "mmvr/optimizer.hpp"

#include <cmath>

#include <json.hpp>

#include "mmvr/bleu.hpp"

namespace mmvr {
namespace {

CaptionGradient evaluate(const GeneratorModel& gen, const CaptionerModel& cap, const Tensor& h,
                         const std::vector<Caption>& captions, bool with_grad) {
  if (captions.empty()) throw Error("caption gradient: no captions");
  const std::size_t dim = gen.hyper().latent_dim;
  if (h.size() != dim) {
    throw Error("caption gradient: latent has " + std::to_string(h.size()) + " values, expected " +
                std::to_string(dim));
  }
  Tape tape;
  const auto gvars = gen.params().bind(tape, false);
  const auto cvars = cap.params().bind(tape, false);
  const Var z = tape.leaf(Tensor({dim}, h.data, with_grad));
  const Var image = gen.forward(tape, gvars, z);
  const Var feat = cap.encode(tape, cvars, image);
  const double weight = 1.0 / static_cast<double>(captions.size());
  Var total{};
  for (std::size_t i = 0; i < captions.size(); ++i) {
    const Var term = scale(tape, cap.decode_loss(tape, cvars, feat, {&captions[i]}), weight);
    total = i == 0 ? term : add(tape, total, term);
  }
  CaptionGradient out;
  out.loss = tape.value(total).item();
  out.image = unflatten_image(tape.value(image));
  out.grad = with_grad ? backward(tape, total).at(z) : Tensor::zeros({dim});
  return out;
}

}  // namespace

void UpdateConfig::validate() const {
  if (iterations < 1) throw Error("update config: iterations must be >= 1");
  if (captions.empty()) throw Error("update config: at least one caption is required");
  if (ngram_order < 0 || ngram_order > 4) throw Error("update config: n-gram order must be 0 (off) or 1..4");
  if (gamma3 < 0.0) throw Error("update config: gamma3 (noise std) must be >= 0");
  for (const auto& c : captions) {
    if (c.ids.empty()) throw Error("update config: empty caption");
  }
}

CaptionGradient caption_gradient(const GeneratorModel& gen, const CaptionerModel& cap, const Tensor& h,
                                 const Caption& target) {
  return evaluate(gen, cap, h, {target}, true);
}

CaptionGradient averaged_caption_gradient(const GeneratorModel& gen, const CaptionerModel& cap, const Tensor& h,
                                          const std::vector<Caption>& captions) {
  return evaluate(gen, cap, h, captions, true);
}

StepRecord update_step(LatentState& state, const UpdateConfig& cfg, const MmvrModels& models) {
  const CaptionGradient cg = evaluate(models.generator, models.captioner, state.h, cfg.captions, cfg.gamma1 != 0.0);
  StepRecord rec;
  rec.loss = cg.loss;
  rec.grad_norm = l2_norm(cg.grad.data);
  if (cfg.ngram_order >= 1) {
    rec.scale = scale_factor(models.captioner.greedy_decode(cg.image), cfg.captions, cfg.ngram_order);
  }
  const Tensor residual = dae_residual(models.dae, state.h);
  rec.dae_norm = l2_norm(residual.data);

  std::vector<double> next = state.h.data;
  const double step = cfg.gamma1 * rec.scale;
  for (std::size_t i = 0; i < next.size(); ++i) {
    next[i] += -step * cg.grad.data[i] + cfg.gamma2 * residual.data[i];
  }
  if (cfg.gamma3 > 0.0) {
    std::normal_distribution<double> noise(0.0, cfg.gamma3);
    for (double& v : next) v += noise(state.rng);
  }
  for (double v : next) {
    if (!std::isfinite(v)) {
      throw NumericalError("update_step: latent became non-finite at iteration " + std::to_string(state.t) +
                           " (loss " + std::to_string(rec.loss) + ", |grad| " + std::to_string(rec.grad_norm) +
                           ")");
    }
  }
  state.h.data = std::move(next);
  ++state.t;
  return rec;
}

GenerationTrace generate(const UpdateConfig& cfg, const MmvrModels& models) {
  cfg.validate();
  const std::size_t dim = models.generator.hyper().latent_dim;
  if (models.dae.hyper().latent_dim != dim) throw Error("generate: generator and DAE latent sizes differ");

  LatentState state{Tensor::zeros({dim}), 0, make_stream(cfg.seed, 1)};
  Rng init = make_stream(cfg.seed, 0);
  std::normal_distribution<double> normal(0.0, 1.0);
  for (double& v : state.h.data) v = normal(init);

  GenerationTrace trace;
  for (const auto& c : cfg.captions) trace.captions.push_back(c.text());
  trace.records.reserve(static_cast<std::size_t>(cfg.iterations));
  for (int it = 0; it < cfg.iterations; ++it) {
    try {
      trace.records.push_back(update_step(state, cfg, models));
    } catch (const NumericalError& e) {
      trace.final_latent = state.h;
      throw GenerationAborted(e.what(), std::move(trace));
    }
  }
  trace.final_latent = state.h;
  trace.final_image = models.generator.generate(state.h);
  return trace;
}

std::string GenerationTrace::to_json() const {
  nlohmann::json iters = nlohmann::json::array();
  for (std::size_t t = 0; t < records.size(); ++t) {
    const auto& r = records[t];
    iters.push_back({{"t", t}, {"loss", r.loss}, {"scale", r.scale}, {"grad_norm", r.grad_norm}, {"dae_norm", r.dae_norm}});
  }
  nlohmann::json j = {{"captions", captions}, {"iterations", iters}, {"final_latent", final_latent.data}};
  return j.dump(2) + "\n";
}

}  // namespace mmvr
