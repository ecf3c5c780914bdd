#include "mmvr/metrics.hpp"

#include <cmath>

namespace mmvr {

void validate_detection(const Detection& d) {
  const bool box_ok = d.w > 0.0 && d.h > 0.0 && d.x >= 0.0 && d.y >= 0.0 && d.x + d.w <= 1.0 + 1e-12 &&
                      d.y + d.h <= 1.0 + 1e-12;
  if (!box_ok) throw Error("detection: box outside the unit square or empty");
  if (!(d.confidence >= 0.0 && d.confidence <= 1.0)) throw Error("detection: confidence outside [0,1]");
}

double detection_score(std::span<const Detection> detections, double threshold) {
  double score = 0.0;
  for (const auto& d : detections) {
    validate_detection(d);
    if (d.confidence > threshold) score += d.w * d.h * d.confidence;
  }
  return score;
}

InceptionScore inception_score_from_probs(std::span<const Tensor> probs, int splits) {
  if (splits < 1) throw Error("inception score: splits must be >= 1");
  const auto n = probs.size();
  if (n < static_cast<std::size_t>(splits)) {
    throw Error("inception score: " + std::to_string(n) + " images for " + std::to_string(splits) + " splits");
  }
  const std::size_t k = probs.front().size();
  for (const auto& p : probs) {
    if (p.size() != k) throw Error("inception score: class distributions differ in size");
  }

  std::vector<double> scores;
  for (int s = 0; s < splits; ++s) {
    const std::size_t begin = n * static_cast<std::size_t>(s) / static_cast<std::size_t>(splits);
    const std::size_t end = n * static_cast<std::size_t>(s + 1) / static_cast<std::size_t>(splits);
    std::vector<double> marginal(k, 0.0);
    for (std::size_t i = begin; i < end; ++i) {
      for (std::size_t c = 0; c < k; ++c) marginal[c] += probs[i].data[c];
    }
    for (double& m : marginal) m /= static_cast<double>(end - begin);
    double kl_sum = 0.0;
    for (std::size_t i = begin; i < end; ++i) {
      for (std::size_t c = 0; c < k; ++c) {
        const double p = probs[i].data[c];
        if (p > 0.0) kl_sum += p * (std::log(p) - std::log(marginal[c]));
      }
    }
    scores.push_back(std::exp(kl_sum / static_cast<double>(end - begin)));
  }

  InceptionScore out;
  for (double s : scores) out.mean += s;
  out.mean /= static_cast<double>(scores.size());
  for (double s : scores) out.std += (s - out.mean) * (s - out.mean);
  out.std = std::sqrt(out.std / static_cast<double>(scores.size()));
  return out;
}

InceptionScore inception_score(std::span<const Tensor> images, const ClassifierModel& classifier, int splits) {
  std::vector<Tensor> probs;
  probs.reserve(images.size());
  for (const auto& img : images) probs.push_back(classifier.predict(img));
  return inception_score_from_probs(probs, splits);
}

}  // namespace mmvr
