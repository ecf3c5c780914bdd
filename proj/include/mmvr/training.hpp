#pragma once

#include <cstdint>
#include <functional>
#include <string>

#include "mmvr/corpus.hpp"
#include "mmvr/models.hpp"

namespace mmvr {

struct TrainOptions {
  int epochs = 10;
  double learning_rate = 1e-3;
  std::uint64_t seed = 1;
  std::size_t batch_size = 32;
  /// Called after each epoch with (epoch, mean loss); may be empty.
  std::function<void(int, double)> on_epoch;
};

struct GeneratorTraining {
  GeneratorModel model;
  Tensor latents;           // [N, H], one per training image
  double final_loss = 0.0;  // mean reconstruction MSE of the last epoch
};

/// Trains the generator as a decoder: a learnable latent per image and a
/// mean-squared reconstruction loss (plus a small L2 pull of latents toward
/// the origin so they stay on the scale of N(0, I)).
GeneratorTraining train_generator(const Dataset& data, const TrainOptions& opts,
                                  GeneratorModel::Hyper hyper = {});

struct CaptionerTraining {
  CaptionerModel model;
  double final_loss = 0.0;
  std::size_t train_exact = 0, train_total = 0;
  std::size_t held_out_exact = 0, held_out_total = 0;
};

/// Teacher-forced cross-entropy over every (image, caption) pair. Datasets
/// larger than 200 entries hold out their last 100 entries for evaluation.
CaptionerTraining train_captioner(const Dataset& data, const TrainOptions& opts,
                                  CaptionerModel::Hyper hyper = {});

/// Greedy-decode exact-match count over entries [begin, end): a decode
/// matches when it equals any caption of the entry.
std::size_t exact_matches(const CaptionerModel& model, const Dataset& data, std::size_t begin, std::size_t end);

struct DaeTraining {
  DaeModel model;
  double final_loss = 0.0;
};

/// Denoising objective on the rows of `latents`: reconstruct h from
/// h + N(0, noise_std^2).
DaeTraining train_dae(const Tensor& latents, const TrainOptions& opts, double noise_std = 0.1,
                      DaeModel::Hyper hyper = {});

struct DetectorTraining {
  DetectorModel model;
  double final_loss = 0.0;
};

DetectorTraining train_detector(const Dataset& data, const TrainOptions& opts, DetectorModel::Hyper hyper = {});

struct ClassifierTraining {
  ClassifierModel model;
  double final_loss = 0.0;
  double accuracy = 0.0;  // top-1 on single-object training images
};

/// Cross-entropy against the (shape, color) category of every object in the
/// image, i.e. the soft target given by the scene's object mix.
ClassifierTraining train_classifier(const Dataset& data, const TrainOptions& opts,
                                    ClassifierModel::Hyper hyper = {});

}  // namespace mmvr
