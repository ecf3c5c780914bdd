#pragma once

#include <span>
#include <vector>

#include "mmvr/detection.hpp"
#include "mmvr/models.hpp"

namespace mmvr {

inline constexpr double kDetectionThreshold = 0.1;
/// Confidence used when drawing detections for display.
inline constexpr double kDisplayThreshold = 0.5;

/// Throws Error unless the box lies in the unit square with w, h > 0 and the
/// confidence lies in [0, 1].
void validate_detection(const Detection& d);

/// Sum over detections with confidence > threshold of (box area / image
/// area) * confidence. Boxes are normalized, so the area ratio is w * h.
double detection_score(std::span<const Detection> detections, double threshold = kDetectionThreshold);

struct InceptionScore {
  double mean = 0.0;
  double std = 0.0;
};

/// exp(E_x KL(p(y|x) || p(y))) per split, p(y) being the split marginal;
/// mean and population standard deviation across splits. Splits are
/// contiguous chunks of near-equal size.
InceptionScore inception_score_from_probs(std::span<const Tensor> probs, int splits = 10);
InceptionScore inception_score(std::span<const Tensor> images, const ClassifierModel& classifier, int splits = 10);

}  // namespace mmvr
