#include "mmvr/bleu.hpp"

#include <algorithm>
#include <cmath>
#include <cstdlib>

namespace mmvr {
namespace {

std::vector<int> content_ids(const Caption& c) {
  std::vector<int> ids;
  for (int id : c.ids) {
    if (id != Vocabulary::kPad && id != Vocabulary::kBos && id != Vocabulary::kEos) ids.push_back(id);
  }
  return ids;
}

}  // namespace

std::size_t NgramProfile::total() const {
  std::size_t n = 0;
  for (const auto& kv : counts) n += static_cast<std::size_t>(kv.second);
  return n;
}

NgramProfile ngram_profile(std::span<const int> ids, int order) {
  if (order < 1) throw Error("ngram_profile: order must be >= 1");
  NgramProfile p;
  p.order = order;
  const auto n = static_cast<std::size_t>(order);
  for (std::size_t i = 0; i + n <= ids.size(); ++i) {
    ++p.counts[std::vector<int>(ids.begin() + static_cast<std::ptrdiff_t>(i),
                                ids.begin() + static_cast<std::ptrdiff_t>(i + n))];
  }
  return p;
}

BleuScore bleu(const Caption& candidate, const std::vector<Caption>& references, int order) {
  if (order < 1 || order > 4) throw Error("bleu: order must be in 1..4, got " + std::to_string(order));
  if (references.empty()) throw Error("bleu: no references");
  std::vector<std::vector<int>> refs;
  for (const auto& r : references) {
    refs.push_back(content_ids(r));
    if (refs.back().empty()) throw Error("bleu: empty reference caption");
  }

  BleuScore score;
  score.order = order;
  const std::vector<int> cand = content_ids(candidate);
  if (cand.empty()) {
    score.degenerate = true;
    score.brevity_penalty = 0.0;
    score.precisions.assign(static_cast<std::size_t>(order), 0.0);
    return score;
  }

  double log_sum = 0.0;
  bool zero = false;
  for (int k = 1; k <= order; ++k) {
    const NgramProfile c = ngram_profile(cand, k);
    std::map<std::vector<int>, int> max_ref;
    for (const auto& r : refs) {
      for (const auto& [gram, count] : ngram_profile(r, k).counts) {
        int& m = max_ref[gram];
        m = std::max(m, count);
      }
    }
    double matched = 0.0;
    for (const auto& [gram, count] : c.counts) {
      auto it = max_ref.find(gram);
      if (it != max_ref.end()) matched += std::min(count, it->second);
    }
    double total = static_cast<double>(c.total());
    if (k >= 2 && matched == 0.0) {
      matched += 1.0;
      total += 1.0;
    }
    const double p = total > 0.0 ? matched / total : 0.0;
    score.precisions.push_back(p);
    if (p == 0.0) {
      zero = true;
    } else {
      log_sum += std::log(p);
    }
  }

  const auto c_len = static_cast<double>(cand.size());
  double r_len = static_cast<double>(refs.front().size());
  for (const auto& r : refs) {
    const auto len = static_cast<double>(r.size());
    const double d = std::abs(len - c_len), best = std::abs(r_len - c_len);
    if (d < best || (d == best && len < r_len)) r_len = len;
  }
  score.brevity_penalty = c_len < r_len ? std::exp(1.0 - r_len / c_len) : 1.0;
  score.value = zero ? 0.0 : score.brevity_penalty * std::exp(log_sum / order);
  return score;
}

double scale_factor(const Caption& candidate, const std::vector<Caption>& references, int order) {
  return (1.0 - bleu(candidate, references, order).value) / order;
}

}  // namespace mmvr
