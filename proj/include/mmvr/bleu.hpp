#pragma once

#include <map>
#include <span>
#include <vector>

#include "mmvr/vocabulary.hpp"

namespace mmvr {

/// Counts of every n-gram of one order in a token sequence.
struct NgramProfile {
  int order = 1;
  std::map<std::vector<int>, int> counts;

  std::size_t total() const;
};

NgramProfile ngram_profile(std::span<const int> ids, int order);

/// Sentence-level BLEU-n.
struct BleuScore {
  double value = 0.0;
  int order = 1;
  double brevity_penalty = 1.0;
  std::vector<double> precisions;  // clipped (and, for orders >= 2, smoothed) precisions 1..n
  bool degenerate = false;         // candidate empty after stripping markers
};

/// Clipped modified precision for orders 1..n, geometric mean, brevity
/// penalty exp(1 - r/c) when c < r (r = closest reference length). Orders
/// >= 2 with no matching n-gram use add-one smoothing. BOS/EOS/PAD are
/// stripped first. Throws Error for order outside 1..4 or empty references.
BleuScore bleu(const Caption& candidate, const std::vector<Caption>& references, int order);

/// (1 - F) / n with F = bleu(...).value; lies in [0, 1/n].
double scale_factor(const Caption& candidate, const std::vector<Caption>& references, int order);

}  // namespace mmvr
