#pragma once

// Caption-conditioned generation by iterative latent optimization.
//
// Each step moves the latent h against the gradient of the teacher-forced
// caption loss (averaged over the conditioning captions, optionally scaled by
// (1 - BLEU)/n of the current greedy decode), toward its DAE reconstruction,
// and by Gaussian noise:
//
//   h <- h - gamma1 * s * grad + gamma2 * (dae(h) - h) + N(0, gamma3^2)

#include <cstdint>
#include <string>
#include <vector>

#include "mmvr/models.hpp"
#include "mmvr/rng.hpp"

namespace mmvr {

struct UpdateConfig {
  double gamma1 = 1.0;
  double gamma2 = 1e-3;
  double gamma3 = 1e-5;  // noise standard deviation
  int iterations = 200;
  int ngram_order = 0;  // 0 disables BLEU scaling, otherwise 1..4
  std::vector<Caption> captions;
  std::uint64_t seed = 0;

  void validate() const;
};

/// The three networks the update rule needs. Non-owning.
struct MmvrModels {
  const GeneratorModel& generator;
  const CaptionerModel& captioner;
  const DaeModel& dae;

  explicit MmvrModels(const ModelSet& set) : generator(set.generator), captioner(set.captioner), dae(set.dae) {}
  MmvrModels(const GeneratorModel& g, const CaptionerModel& c, const DaeModel& d)
      : generator(g), captioner(c), dae(d) {}
};

struct LatentState {
  Tensor h;
  int t = 0;
  Rng rng;
};

struct CaptionGradient {
  Tensor grad;        // d loss / d h, shape [H]
  double loss = 0.0;  // caption loss at h (mean over captions when averaged)
  Tensor image;       // generator output at h, [32,32,3]
};

/// Gradient of caption_loss(captioner, generator(h), target) w.r.t. h from
/// one forward and one backward pass.
CaptionGradient caption_gradient(const GeneratorModel& gen, const CaptionerModel& cap, const Tensor& h,
                                 const Caption& target);

/// Mean of caption_gradient over `captions`, computed on a single tape that
/// shares the generator and encoder forward pass.
CaptionGradient averaged_caption_gradient(const GeneratorModel& gen, const CaptionerModel& cap, const Tensor& h,
                                          const std::vector<Caption>& captions);

struct StepRecord {
  double loss = 0.0;       // mean caption loss at h_t
  double scale = 1.0;      // n-gram factor applied to the caption term
  double grad_norm = 0.0;  // ||averaged caption gradient||
  double dae_norm = 0.0;   // ||dae(h_t) - h_t||
};

/// Advances `state` by one update. Throws NumericalError if h becomes
/// non-finite.
StepRecord update_step(LatentState& state, const UpdateConfig& cfg, const MmvrModels& models);

struct GenerationTrace {
  std::vector<StepRecord> records;
  std::vector<std::string> captions;
  Tensor final_latent;
  Tensor final_image;

  std::string to_json() const;
};

/// h0 ~ N(0, I) from cfg.seed, then cfg.iterations update steps.
GenerationTrace generate(const UpdateConfig& cfg, const MmvrModels& models);

/// Thrown by generate() when an update diverges; carries the partial trace.
class GenerationAborted : public NumericalError {
 public:
  GenerationAborted(const std::string& what, GenerationTrace partial)
      : NumericalError(what), trace_(std::move(partial)) {}
  const GenerationTrace& trace() const { return trace_; }

 private:
  GenerationTrace trace_;
};

}  // namespace mmvr
