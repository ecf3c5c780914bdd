// mmvr: dataset synthesis, training, caption-conditioned generation,
// paraphrasing and evaluation.
//
// Exit codes: 0 success, 1 usage or input error, 2 numerical abort.

#include <cstdlib>
#include <filesystem>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "mmvr/experiment.hpp"
#include "mmvr/pixmap.hpp"
#include "mmvr/training.hpp"

namespace fs = std::filesystem;
using nlohmann::json;
using namespace mmvr;

namespace {

constexpr int kExitInput = 1;
constexpr int kExitNumerical = 2;

// Seed used when --seed is absent: $MMVR_SEED, else `fallback`.
std::uint64_t default_seed(std::uint64_t fallback) {
  const char* env = std::getenv("MMVR_SEED");
  if (!env || !*env) return fallback;
  try {
    std::size_t used = 0;
    const unsigned long long v = std::stoull(env, &used);
    if (used != std::string(env).size()) throw std::invalid_argument(env);
    return v;
  } catch (const std::exception&) {
    throw Error(std::string("MMVR_SEED is not an unsigned integer: '") + env + "'");
  }
}

void ensure_dir(const fs::path& dir) {
  std::error_code ec;
  fs::create_directories(dir, ec);
  if (ec || !fs::is_directory(dir)) throw Error("cannot create directory '" + dir.string() + "'");
}

void require_dir(const fs::path& dir, const char* what) {
  if (!fs::is_directory(dir)) throw Error(std::string(what) + " directory '" + dir.string() + "' does not exist");
}

ModelCheckpoint load_required(const fs::path& file) {
  if (!fs::exists(file)) throw Error("missing checkpoint '" + file.string() + "'");
  return load_checkpoint(file);
}

// ------------------------------------------------------------- dataset

struct DatasetArgs {
  std::size_t count = 1000;
  std::optional<std::uint64_t> seed;
  std::string out;
  bool json = false;
};

int run_dataset(const DatasetArgs& a) {
  const std::uint64_t seed = a.seed.value_or(default_seed(1));
  const DatasetManifest m = generate_dataset(a.count, seed, a.out);
  const fs::path manifest = fs::path(a.out) / kManifestFile;
  if (a.json) {
    std::cout << json{{"manifest", manifest.string()}, {"entries", m.entries.size()}, {"seed", seed}}.dump() << "\n";
  } else {
    std::cout << manifest.string() << "\n";
  }
  return 0;
}

// ------------------------------------------------------------- train

struct TrainArgs {
  std::string kind;
  std::string data;
  std::string out;
  std::string generator;  // checkpoint with latents, for dae
  int epochs = 60;
  double lr = 2e-3;
  std::size_t batch = 32;
  double noise = 0.1;
  std::optional<std::uint64_t> seed;
  bool verbose = false;
  bool json = false;
};

json train_one(const std::string& kind, const Dataset* data, const TrainArgs& a, const TrainOptions& opts) {
  const fs::path out(a.out);
  json r = {{"kind", kind}};
  if (kind == "generator") {
    const auto t = train_generator(*data, opts);
    save_checkpoint(t.model.checkpoint(), out / kGeneratorFile);
    r["final_loss"] = t.final_loss;
  } else if (kind == "captioner") {
    const auto t = train_captioner(*data, opts);
    save_checkpoint(t.model.checkpoint(), out / kCaptionerFile);
    r["final_loss"] = t.final_loss;
    r["train_exact"] = t.train_exact;
    r["train_total"] = t.train_total;
    r["held_out_exact"] = t.held_out_exact;
    r["held_out_total"] = t.held_out_total;
  } else if (kind == "dae") {
    const fs::path gen = a.generator.empty() ? out / kGeneratorFile : fs::path(a.generator);
    const GeneratorModel g = GeneratorModel::from_checkpoint(load_required(gen));
    if (!g.latent_table) throw Error("generator checkpoint '" + gen.string() + "' carries no training latents");
    const auto t = train_dae(*g.latent_table, opts, a.noise, {g.hyper().latent_dim, 128});
    save_checkpoint(t.model.checkpoint(), out / kDaeFile);
    r["final_loss"] = t.final_loss;
  } else if (kind == "detector") {
    const auto t = train_detector(*data, opts);
    save_checkpoint(t.model.checkpoint(), out / kDetectorFile);
    r["final_loss"] = t.final_loss;
  } else if (kind == "classifier") {
    const auto t = train_classifier(*data, opts);
    save_checkpoint(t.model.checkpoint(), out / kClassifierFile);
    r["final_loss"] = t.final_loss;
    r["accuracy"] = t.accuracy;
  }
  return r;
}

int run_train(const TrainArgs& a) {
  if (a.epochs < 0) throw Error("--epochs must be >= 0");
  ensure_dir(a.out);
  TrainOptions opts;
  opts.epochs = a.epochs;
  opts.learning_rate = a.lr;
  opts.batch_size = a.batch;
  opts.seed = a.seed.value_or(default_seed(1));

  const std::vector<std::string> kinds =
      a.kind == "all" ? std::vector<std::string>{"generator", "captioner", "dae", "detector", "classifier"}
                      : std::vector<std::string>{a.kind};
  std::optional<Dataset> data;
  if (a.kind != "dae") {
    if (a.data.empty()) throw Error("train " + a.kind + ": --data is required");
    data = load_dataset(a.data);
  }

  json results = json::array();
  for (const auto& kind : kinds) {
    TrainOptions o = opts;
    if (a.verbose) {
      o.on_epoch = [kind](int epoch, double loss) {
        std::cerr << kind << " epoch " << epoch + 1 << " loss " << loss << "\n";
      };
    }
    const json r = train_one(kind, data ? &*data : nullptr, a, o);
    if (!a.json) {
      std::cout << kind << ": final loss " << r["final_loss"].get<double>();
      if (r.contains("train_exact")) {
        std::cout << ", exact match " << r["train_exact"] << "/" << r["train_total"];
        if (r["held_out_total"].get<std::size_t>() > 0) {
          std::cout << " (held out " << r["held_out_exact"] << "/" << r["held_out_total"] << ")";
        }
      }
      if (r.contains("accuracy")) std::cout << ", accuracy " << r["accuracy"].get<double>();
      std::cout << "\n";
    }
    results.push_back(r);
  }
  if (a.json) std::cout << (a.kind == "all" ? results : results[0]).dump() << "\n";
  return 0;
}

// ------------------------------------------------------------- generate

struct UpdateArgs {
  int iters = 200;
  double gamma1 = 1.0;
  double gamma2 = 1e-3;
  double gamma3 = 1e-5;
  int bleu_order = 0;
};

void add_update_flags(CLI::App* cmd, UpdateArgs& u) {
  cmd->add_option("--iters", u.iters, "Update iterations")->capture_default_str()->check(CLI::PositiveNumber);
  cmd->add_option("--gamma1", u.gamma1, "Caption-gradient weight")->capture_default_str();
  cmd->add_option("--gamma2", u.gamma2, "DAE prior weight")->capture_default_str();
  cmd->add_option("--gamma3", u.gamma3, "Noise standard deviation")->capture_default_str()->check(CLI::NonNegativeNumber);
  cmd->add_option("--bleu-order", u.bleu_order, "BLEU-n scaling of the caption term (0 = off)")
      ->capture_default_str()
      ->check(CLI::Range(0, 4));
}

UpdateConfig update_config(const UpdateArgs& u) {
  UpdateConfig cfg;
  cfg.iterations = u.iters;
  cfg.gamma1 = u.gamma1;
  cfg.gamma2 = u.gamma2;
  cfg.gamma3 = u.gamma3;
  cfg.ngram_order = u.bleu_order;
  return cfg;
}

struct GenerateArgs {
  std::string caption;
  std::string models;
  std::string out = ".";
  UpdateArgs update;
  int num_captions = 1;
  std::optional<std::uint64_t> seed;
  bool json = false;
};

int run_generate(const GenerateArgs& a) {
  const Caption caption = Vocabulary::standard().encode(a.caption);
  const std::uint64_t seed = a.seed.value_or(default_seed(1));
  UpdateConfig cfg = update_config(a.update);
  cfg.seed = seed;
  cfg.captions = a.num_captions > 1 ? paraphrase(caption, a.num_captions, seed) : std::vector<Caption>{caption};
  cfg.validate();

  require_dir(a.models, "models");
  const fs::path dir(a.models);
  const GeneratorModel gen = GeneratorModel::from_checkpoint(load_required(dir / kGeneratorFile));
  const CaptionerModel cap = CaptionerModel::from_checkpoint(load_required(dir / kCaptionerFile));
  const DaeModel dae = DaeModel::from_checkpoint(load_required(dir / kDaeFile));
  ensure_dir(a.out);
  const fs::path image_path = fs::path(a.out) / "image.ppm", trace_path = fs::path(a.out) / "trace.json";

  GenerationTrace trace;
  try {
    trace = generate(cfg, MmvrModels(gen, cap, dae));
  } catch (const GenerationAborted& e) {
    write_file(trace_path, e.trace().to_json());
    std::cerr << "mmvr: " << e.what() << "\n" << "mmvr: partial trace written to " << trace_path.string() << "\n";
    return kExitNumerical;
  }
  write_ppm(image_path, trace.final_image);
  write_file(trace_path, trace.to_json());

  const Caption decoded = cap.greedy_decode(trace.final_image);
  const double loss = trace.records.back().loss;
  if (a.json) {
    std::cout << json{{"image", image_path.string()},
                      {"trace", trace_path.string()},
                      {"captions", trace.captions},
                      {"final_loss", loss},
                      {"decoded", decoded.text()}}
                     .dump()
              << "\n";
  } else {
    std::cout << "image:   " << image_path.string() << "\ntrace:   " << trace_path.string() << "\nloss:    " << loss
              << "\ndecoded: " << decoded.text() << "\n";
  }
  return 0;
}

// ------------------------------------------------------------- paraphrase

struct ParaphraseArgs {
  std::string caption;
  int count = 5;
  std::optional<std::uint64_t> seed;
  bool json = false;
};

int run_paraphrase(const ParaphraseArgs& a) {
  const auto out = paraphrase(Vocabulary::standard().encode(a.caption), a.count, a.seed.value_or(default_seed(1)));
  if (a.json) {
    json arr = json::array();
    for (const auto& c : out) arr.push_back(c.text());
    std::cout << arr.dump() << "\n";
  } else {
    for (const auto& c : out) std::cout << c.text() << "\n";
  }
  return 0;
}

// ------------------------------------------------------------- evaluate

struct EvaluateArgs {
  std::vector<std::string> variants{"ppgn"};
  std::string data;
  std::string models;
  std::string out = "report.json";
  UpdateArgs update;
  int nc = 5;
  std::size_t captions = 50;
  std::vector<std::uint64_t> seeds;
  int splits = 10;
  unsigned jobs = 0;
  bool json = false;
};

// "name" or "name:param"; the parameter otherwise comes from --nc / --bleu-order.
Variant variant_of(const std::string& spec, const EvaluateArgs& a) {
  const auto colon = spec.find(':');
  const std::string name = spec.substr(0, colon);
  int param = name == "bleu" ? a.update.bleu_order : a.nc;
  if (colon != std::string::npos) {
    try {
      param = std::stoi(spec.substr(colon + 1));
    } catch (const std::exception&) {
      throw Error("bad variant parameter in '" + spec + "'");
    }
  }
  return Variant::parse(name, param);
}

int run_evaluate(const EvaluateArgs& a) {
  std::vector<Variant> variants;
  for (const auto& v : a.variants) variants.push_back(variant_of(v, a));
  require_dir(a.models, "models");
  require_dir(a.data, "dataset");
  const ModelSet models = load_models(a.models);
  const auto captions = eval_captions(load_manifest(fs::path(a.data) / kManifestFile), a.captions);

  ExperimentOptions opts;
  opts.base = update_config(a.update);
  opts.base.ngram_order = 0;  // only the bleu variant scales
  if (a.seeds.empty()) {
    const std::uint64_t s = default_seed(1);
    opts.seeds = {s, s + 1};
  } else {
    opts.seeds = a.seeds;
  }
  opts.splits = a.splits;
  opts.jobs = a.jobs;

  std::vector<ScoreReport> reports;
  for (const auto& v : variants) reports.push_back(run_experiment(v, captions, models, opts));
  const std::string report = reports_to_json(reports);
  write_file(a.out, report);
  std::cout << (a.json ? report : format_table(reports));
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Caption-conditioned image generation on a synthetic shapes corpus"};
  app.require_subcommand(1);
  app.set_version_flag("--version", "mmvr 1.0");

  DatasetArgs ds;
  auto* dataset = app.add_subcommand("dataset", "Synthesize a captioned shapes dataset");
  dataset->add_option("--count", ds.count, "Number of images")->capture_default_str()->check(CLI::PositiveNumber);
  dataset->add_option("--seed", ds.seed, "Random seed (default $MMVR_SEED or 1)");
  dataset->add_option("--out", ds.out, "Output directory")->required();
  dataset->add_flag("--json", ds.json, "Machine-readable output");

  TrainArgs tr;
  auto* train = app.add_subcommand("train", "Train a model and write its checkpoint");
  train->add_option("kind", tr.kind, "generator | captioner | dae | detector | classifier | all")
      ->required()
      ->check(CLI::IsMember({"generator", "captioner", "dae", "detector", "classifier", "all"}));
  train->add_option("--data", tr.data, "Dataset directory");
  train->add_option("--out", tr.out, "Checkpoint directory")->required();
  train->add_option("--generator", tr.generator, "Generator checkpoint providing latents (dae; default OUT/generator.ckpt)");
  train->add_option("--epochs", tr.epochs, "Training epochs")->capture_default_str();
  train->add_option("--lr", tr.lr, "Learning rate")->capture_default_str()->check(CLI::PositiveNumber);
  train->add_option("--batch", tr.batch, "Mini-batch size")->capture_default_str()->check(CLI::PositiveNumber);
  train->add_option("--noise", tr.noise, "DAE corruption std")->capture_default_str()->check(CLI::NonNegativeNumber);
  train->add_option("--seed", tr.seed, "Random seed (default $MMVR_SEED or 1)");
  train->add_flag("-v,--verbose", tr.verbose, "Per-epoch loss on stderr");
  train->add_flag("--json", tr.json, "Machine-readable output");

  GenerateArgs ge;
  auto* gen = app.add_subcommand("generate", "Generate an image for a caption");
  gen->add_option("caption", ge.caption, "Caption in the corpus grammar")->required();
  gen->add_option("--models", ge.models, "Checkpoint directory")->required();
  gen->add_option("--out", ge.out, "Output directory for image.ppm and trace.json")->capture_default_str();
  add_update_flags(gen, ge.update);
  gen->add_option("--num-captions", ge.num_captions, "Paraphrases to average over (N_C)")
      ->capture_default_str()
      ->check(CLI::PositiveNumber);
  gen->add_option("--seed", ge.seed, "Random seed (default $MMVR_SEED or 1)");
  gen->add_flag("--json", ge.json, "Machine-readable output");

  ParaphraseArgs pa;
  auto* para = app.add_subcommand("paraphrase", "List paraphrases of a caption");
  para->add_option("caption", pa.caption, "Caption in the corpus grammar")->required();
  para->add_option("-k,--count", pa.count, "Number of paraphrases, the input included")
      ->capture_default_str()
      ->check(CLI::PositiveNumber);
  para->add_option("--seed", pa.seed, "Random seed (default $MMVR_SEED or 1)");
  para->add_flag("--json", pa.json, "Machine-readable output");

  EvaluateArgs ev;
  auto* eval = app.add_subcommand("evaluate", "Score generation variants (inception and detection)");
  eval->add_option("--variant", ev.variants, "baseline | ppgn | bleu[:n] | multi-caption[:N_C]; repeatable")
      ->capture_default_str();
  eval->add_option("--data", ev.data, "Dataset whose captions are evaluated")->required();
  eval->add_option("--models", ev.models, "Checkpoint directory")->required();
  eval->add_option("--out", ev.out, "JSON report path")->capture_default_str();
  add_update_flags(eval, ev.update);
  eval->add_option("--nc", ev.nc, "Caption count for multi-caption")->capture_default_str()->check(CLI::PositiveNumber);
  eval->add_option("--captions", ev.captions, "Number of eval captions")->capture_default_str();
  eval->add_option("--seeds", ev.seeds, "Generation seeds (default $MMVR_SEED or 1, and the next)")->delimiter(',');
  eval->add_option("--splits", ev.splits, "Inception-score splits")->capture_default_str()->check(CLI::PositiveNumber);
  eval->add_option("--jobs", ev.jobs, "Worker threads (0 = all processors)")->capture_default_str();
  eval->add_flag("--json", ev.json, "Machine-readable output");

  try {
    app.parse(argc, argv);
  } catch (const CLI::Success& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return kExitInput;
  }

  try {
    if (*dataset) return run_dataset(ds);
    if (*train) return run_train(tr);
    if (*gen) return run_generate(ge);
    if (*para) return run_paraphrase(pa);
    if (*eval) return run_evaluate(ev);
  } catch (const NumericalError& e) {
    std::cerr << "mmvr: " << e.what() << "\n";
    return kExitNumerical;
  } catch (const std::exception& e) {
    std::cerr << "mmvr: " << e.what() << "\n";
    return kExitInput;
  }
  return kExitInput;
}
