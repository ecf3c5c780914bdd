#pragma once

// The five toy networks MMVR composes. All are stacks of affine layers over
// flattened 32x32x3 images; every forward pass goes through a Tape so the
// same code serves training, inference and gradient checks.

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "mmvr/autodiff.hpp"
#include "mmvr/checkpoint.hpp"
#include "mmvr/corpus.hpp"
#include "mmvr/detection.hpp"
#include "mmvr/optim.hpp"
#include "mmvr/vocabulary.hpp"

namespace mmvr {

/// Ordered, named parameter tensors of one model.
class ParameterStore {
 public:
  ParameterStore() = default;

  std::size_t add(std::string name, Tensor t);
  std::size_t size() const { return entries_.size(); }
  Tensor& at(std::size_t i) { return entries_[i].second; }
  const Tensor& at(std::size_t i) const { return entries_[i].second; }
  const std::string& name(std::size_t i) const { return entries_[i].first; }

  /// Places every parameter on the tape (by reference) in declaration order.
  std::vector<Var> bind(Tape& tape, bool requires_grad) const;
  std::vector<BoundParam> bound(const std::vector<Var>& vars);

  std::size_t count() const;
  bool same_values(const ParameterStore& other) const;

  void to_checkpoint(ModelCheckpoint& ckpt) const;
  /// Replaces values from `ckpt`, checking names and shapes.
  void from_checkpoint(const ModelCheckpoint& ckpt);

 private:
  std::vector<std::pair<std::string, Tensor>> entries_;
};

/// Weight matrix [out, in] drawn from N(0, gain^2 / in).
Tensor init_weight(std::size_t out, std::size_t in, Rng& rng, double gain = 1.0);

// ------------------------------------------------------------- generator

/// latent [H] -> tanh hidden -> sigmoid image [3072].
class GeneratorModel {
 public:
  static constexpr const char* kKind = "generator";
  struct Hyper {
    std::size_t latent_dim = 64;
    std::size_t hidden = 128;
  };

  GeneratorModel(Hyper hyper, std::uint64_t seed);

  const Hyper& hyper() const { return hyper_; }
  std::uint64_t seed() const { return seed_; }
  ParameterStore& params() { return params_; }
  const ParameterStore& params() const { return params_; }

  /// h: [H] or [N,H] -> image [3072] or [N,3072]. `vars` from params().bind.
  Var forward(Tape& tape, const std::vector<Var>& vars, Var h) const;
  /// Convenience: [32,32,3] image for one latent.
  Tensor generate(const Tensor& h) const;

  /// Per-training-image latents (filled by training); saved with the model.
  std::optional<Tensor> latent_table;

  ModelCheckpoint checkpoint() const;
  static GeneratorModel from_checkpoint(const ModelCheckpoint& ckpt);

 private:
  Hyper hyper_;
  std::uint64_t seed_;
  ParameterStore params_;
};

// ------------------------------------------------------------- captioner

/// Image encoder (affine + tanh) feeding a single-layer recurrent decoder.
/// At each step the decoder sees [embedding(prev token), image feature,
/// previous hidden state] and emits a softmax over the vocabulary.
class CaptionerModel {
 public:
  static constexpr const char* kKind = "captioner";
  struct Hyper {
    std::size_t feature = 64;
    std::size_t hidden = 64;
    std::size_t embed = 16;
    std::size_t vocab = 0;  // 0 means the standard vocabulary size
  };

  CaptionerModel(Hyper hyper, std::uint64_t seed);

  const Hyper& hyper() const { return hyper_; }
  std::uint64_t seed() const { return seed_; }
  ParameterStore& params() { return params_; }
  const ParameterStore& params() const { return params_; }

  /// image [3072] or [N,3072] (or [32,32,3]) -> feature [F] / [N,F].
  Var encode(Tape& tape, const std::vector<Var>& vars, Var image) const;
  /// Teacher-forced mean per-token cross-entropy of `targets` (one caption
  /// per feature row); predictions cover every content word plus EOS.
  Var decode_loss(Tape& tape, const std::vector<Var>& vars, Var feature,
                  const std::vector<const Caption*>& targets) const;
  /// Greedy argmax decoding (never emits PAD/BOS).
  Caption greedy_decode(const Tensor& image) const;
  /// Per-step output distributions under teacher forcing on `target`.
  std::vector<Tensor> step_distributions(const Tensor& image, const Caption& target) const;

  ModelCheckpoint checkpoint() const;
  static CaptionerModel from_checkpoint(const ModelCheckpoint& ckpt);

 private:
  Var step(Tape& tape, const std::vector<Var>& vars, Var feature, Var hidden, Var one_hot,
           Var* next_hidden) const;
  Hyper hyper_;
  std::uint64_t seed_;
  ParameterStore params_;
};

/// Mean over target positions of the teacher-forced cross-entropy of
/// `target` given `image`; differentiable with respect to the image.
Var caption_loss(Tape& tape, const CaptionerModel& model, const std::vector<Var>& vars, Var image,
                 const Caption& target);
double caption_loss(const CaptionerModel& model, const Tensor& image, const Caption& target);

// ------------------------------------------------------------- DAE

/// dae(h) = h + decoder(tanh(encoder(h))). With a zero decoder the model is
/// the identity.
class DaeModel {
 public:
  static constexpr const char* kKind = "dae";
  struct Hyper {
    std::size_t latent_dim = 64;
    std::size_t hidden = 128;
  };

  DaeModel(Hyper hyper, std::uint64_t seed);
  static DaeModel identity(Hyper hyper);

  const Hyper& hyper() const { return hyper_; }
  std::uint64_t seed() const { return seed_; }
  ParameterStore& params() { return params_; }
  const ParameterStore& params() const { return params_; }

  Var forward(Tape& tape, const std::vector<Var>& vars, Var h) const;

  ModelCheckpoint checkpoint() const;
  static DaeModel from_checkpoint(const ModelCheckpoint& ckpt);

 private:
  Hyper hyper_;
  std::uint64_t seed_;
  ParameterStore params_;
};

/// R(h) = dae(h) - h.
Tensor dae_residual(const DaeModel& model, const Tensor& h);

// ------------------------------------------------------------- detector

/// Grid detector: per cell of the 4x4 grid, objectness (sigmoid), shape
/// class distribution (softmax) and box (sigmoid offsets within the cell
/// plus width/height as fractions of the image).
class DetectorModel {
 public:
  static constexpr const char* kKind = "detector";
  static constexpr std::size_t kBoxValues = 4;
  static constexpr std::size_t kClasses = kNumShapes;
  static constexpr std::size_t kHeadSize = kGridCells * (1 + kClasses + kBoxValues);

  struct Hyper {
    std::size_t hidden = 128;
  };

  /// Tape values of one forward pass over [N,3072] images.
  struct Outputs {
    Var objectness;  // [N,16]
    Var classes;     // [N*16,3] probabilities
    Var boxes;       // [N,64] cell-major (offset x, offset y, w, h)
  };

  DetectorModel(Hyper hyper, std::uint64_t seed);

  const Hyper& hyper() const { return hyper_; }
  std::uint64_t seed() const { return seed_; }
  ParameterStore& params() { return params_; }
  const ParameterStore& params() const { return params_; }

  Outputs forward(Tape& tape, const std::vector<Var>& vars, Var images) const;

  ModelCheckpoint checkpoint() const;
  static DetectorModel from_checkpoint(const ModelCheckpoint& ckpt);

 private:
  Hyper hyper_;
  std::uint64_t seed_;
  ParameterStore params_;
};

/// All 16 cell predictions, unthresholded. Confidence is objectness times
/// the top class probability.
std::vector<Detection> detect(const DetectorModel& model, const Tensor& image);

// ------------------------------------------------------------- classifier

/// Image -> distribution over the 12 (shape, color) scene categories.
class ClassifierModel {
 public:
  static constexpr const char* kKind = "classifier";
  static constexpr std::size_t kCategories = kNumShapes * kNumColors;
  struct Hyper {
    std::size_t hidden = 64;
  };

  ClassifierModel(Hyper hyper, std::uint64_t seed);

  const Hyper& hyper() const { return hyper_; }
  std::uint64_t seed() const { return seed_; }
  ParameterStore& params() { return params_; }
  const ParameterStore& params() const { return params_; }

  Var forward(Tape& tape, const std::vector<Var>& vars, Var images) const;
  Tensor predict(const Tensor& image) const;

  ModelCheckpoint checkpoint() const;
  static ClassifierModel from_checkpoint(const ModelCheckpoint& ckpt);

 private:
  Hyper hyper_;
  std::uint64_t seed_;
  ParameterStore params_;
};

int category_of(ShapeClass shape, Color color);

/// Flattens an image to [3072] (accepts [32,32,3] or [3072]).
Tensor flatten_image(const Tensor& image);
/// Reshapes a flat [3072] tensor to [32,32,3].
Tensor unflatten_image(Tensor flat);

/// The complete model set used by generation and evaluation.
struct ModelSet {
  GeneratorModel generator;
  CaptionerModel captioner;
  DaeModel dae;
  DetectorModel detector;
  ClassifierModel classifier;

  /// Throws unless the models agree on latent/image/vocabulary sizes.
  void check_consistent() const;
};

inline constexpr const char* kGeneratorFile = "generator.ckpt";
inline constexpr const char* kCaptionerFile = "captioner.ckpt";
inline constexpr const char* kDaeFile = "dae.ckpt";
inline constexpr const char* kDetectorFile = "detector.ckpt";
inline constexpr const char* kClassifierFile = "classifier.ckpt";

ModelSet load_models(const std::filesystem::path& dir);

}  // namespace mmvr
