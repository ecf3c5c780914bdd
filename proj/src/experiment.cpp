#include "mmvr/experiment.hpp"

#include <atomic>
#include <cstdio>
#include <exception>
#include <mutex>
#include <sstream>
#include <thread>

#include <json.hpp>

namespace mmvr {

Variant Variant::parse(const std::string& name, int param) {
  if (name == "baseline") return baseline();
  if (name == "ppgn") return ppgn();
  if (name == "bleu") {
    if (param < 1 || param > 4) throw Error("variant bleu: order must be 1..4");
    return bleu_scaled(param);
  }
  if (name == "multi-caption") {
    if (param < 1) throw Error("variant multi-caption: caption count must be >= 1");
    return multi_caption(param);
  }
  throw Error("unknown variant '" + name + "' (expected baseline, ppgn, bleu, multi-caption)");
}

std::string Variant::label() const {
  switch (kind) {
    case Kind::kBaseline: return "Prior-only baseline";
    case Kind::kPpgn: return "PPGN (plain)";
    case Kind::kBleuScaled: return "MMVR (B-" + std::to_string(param) + ")";
    case Kind::kMultiCaption: return "MMVR (N_C=" + std::to_string(param) + ")";
  }
  return "?";
}

UpdateConfig Variant::configure(const UpdateConfig& base, const Caption& caption, std::uint64_t paraphrase_seed) const {
  UpdateConfig cfg = base;
  cfg.ngram_order = 0;
  cfg.captions = {caption};
  switch (kind) {
    case Kind::kBaseline:
      cfg.gamma1 = 0.0;
      break;
    case Kind::kPpgn:
      break;
    case Kind::kBleuScaled:
      cfg.ngram_order = param;
      break;
    case Kind::kMultiCaption:
      cfg.captions = paraphrase(caption, param, paraphrase_seed);
      break;
  }
  return cfg;
}

std::vector<Caption> eval_captions(const DatasetManifest& manifest, std::size_t count) {
  if (manifest.entries.size() < count) {
    throw Error("eval captions: dataset has " + std::to_string(manifest.entries.size()) + " entries, " +
                std::to_string(count) + " requested");
  }
  std::vector<Caption> out;
  for (std::size_t i = 0; i < count; ++i) out.push_back(Vocabulary::standard().encode(manifest.entries[i].captions.at(0)));
  return out;
}

std::string ScoreReport::to_json() const {
  nlohmann::json j = {{"method", method},
                      {"inception_mean", inception_mean},
                      {"inception_std", inception_std},
                      {"detection", detection},
                      {"samples", samples}};
  return j.dump(2) + "\n";
}

std::string reports_to_json(const std::vector<ScoreReport>& reports) {
  nlohmann::json arr = nlohmann::json::array();
  for (const auto& r : reports) arr.push_back(nlohmann::json::parse(r.to_json()));
  return arr.dump(2) + "\n";
}

std::string format_table(const std::vector<ScoreReport>& reports) {
  std::size_t width = 6;
  for (const auto& r : reports) width = std::max(width, r.method.size());
  std::ostringstream os;
  char buf[128];
  std::snprintf(buf, sizeof buf, "%-*s | %-15s | %-9s\n", static_cast<int>(width), "Method", "Inception", "Detection");
  os << buf << std::string(width, '-') << "-+-" << std::string(15, '-') << "-+-" << std::string(9, '-') << "\n";
  for (const auto& r : reports) {
    std::snprintf(buf, sizeof buf, "%-*s | %6.3f +- %5.3f | %9.4f\n", static_cast<int>(width), r.method.c_str(),
                  r.inception_mean, r.inception_std, r.detection);
    os << buf;
  }
  return os.str();
}

void parallel_for(std::size_t n, unsigned jobs, const std::function<void(std::size_t)>& fn) {
  if (jobs == 0) jobs = std::max(1u, std::thread::hardware_concurrency());
  jobs = static_cast<unsigned>(std::min<std::size_t>(jobs, n));
  if (jobs <= 1) {
    for (std::size_t i = 0; i < n; ++i) fn(i);
    return;
  }
  std::atomic<std::size_t> next{0};
  std::exception_ptr failure;
  std::mutex mu;
  std::vector<std::thread> workers;
  for (unsigned w = 0; w < jobs; ++w) {
    workers.emplace_back([&] {
      for (std::size_t i; (i = next.fetch_add(1)) < n;) {
        try {
          fn(i);
        } catch (...) {
          std::lock_guard<std::mutex> lock(mu);
          if (!failure) failure = std::current_exception();
          next = n;
        }
      }
    });
  }
  for (auto& t : workers) t.join();
  if (failure) std::rethrow_exception(failure);
}

ScoreReport run_experiment(const Variant& variant, const std::vector<Caption>& eval_captions, const ModelSet& models,
                           const ExperimentOptions& opts) {
  models.check_consistent();
  if (eval_captions.size() < opts.min_captions) {
    throw Error("run_experiment: " + std::to_string(eval_captions.size()) + " eval captions, need at least " +
                std::to_string(opts.min_captions));
  }
  if (opts.seeds.empty()) throw Error("run_experiment: no seeds");

  const std::size_t per_caption = opts.seeds.size();
  const std::size_t n = eval_captions.size() * per_caption;
  std::vector<Tensor> images(n);
  const MmvrModels mm(models);
  parallel_for(n, opts.jobs, [&](std::size_t k) {
    const std::size_t c = k / per_caption;
    const std::uint64_t seed = opts.seeds[k % per_caption];
    UpdateConfig cfg = variant.configure(opts.base, eval_captions[c], mix_seed(c + 1));
    cfg.seed = mix_seed(seed) ^ mix_seed(c);
    images[k] = generate(cfg, mm).final_image;
  });

  ScoreReport report;
  report.method = variant.label();
  report.samples = n;
  const InceptionScore is = inception_score(images, models.classifier, opts.splits);
  report.inception_mean = is.mean;
  report.inception_std = is.std;
  for (const auto& img : images) {
    report.detection += detection_score(detect(models.detector, img), opts.detection_threshold);
  }
  report.detection /= static_cast<double>(n);
  return report;
}

}  // namespace mmvr
