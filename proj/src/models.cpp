#include "mmvr/models.hpp"

#include <algorithm>
#include <cmath>

namespace mmvr {
namespace {

using nlohmann::json;

void check_kind(const ModelCheckpoint& ckpt, const char* kind) {
  if (ckpt.kind != kind) throw Error("checkpoint holds a '" + ckpt.kind + "' model, expected '" + kind + "'");
}

std::size_t hp(const ModelCheckpoint& ckpt, const char* key) {
  try {
    return ckpt.hyperparameters.at(key).get<std::size_t>();
  } catch (const json::exception&) {
    throw Error("checkpoint '" + ckpt.kind + "': missing hyperparameter '" + key + "'");
  }
}

// Batched row view of an input: [3072] -> [1,3072], [32,32,3] -> [1,3072].
Var as_rows(Tape& tape, Var x, std::size_t width) {
  const Tensor& v = tape.value(x);
  if (v.rank() == 2 && v.shape[1] == width) return x;
  if (v.size() % width != 0) {
    throw Error("expected rows of width " + std::to_string(width) + ", got shape " + shape_string(v.shape));
  }
  return reshape(tape, x, {v.size() / width, width});
}

Var zeros_leaf(Tape& tape, Shape shape) { return tape.leaf(Tensor::zeros(std::move(shape))); }

}  // namespace

std::size_t ParameterStore::add(std::string name, Tensor t) {
  entries_.emplace_back(std::move(name), std::move(t));
  return entries_.size() - 1;
}

std::vector<Var> ParameterStore::bind(Tape& tape, bool requires_grad) const {
  std::vector<Var> vars;
  vars.reserve(entries_.size());
  for (const auto& e : entries_) vars.push_back(tape.parameter(e.second, requires_grad));
  return vars;
}

std::vector<BoundParam> ParameterStore::bound(const std::vector<Var>& vars) {
  if (vars.size() != entries_.size()) throw Error("parameter store: binding size mismatch");
  std::vector<BoundParam> out;
  for (std::size_t i = 0; i < vars.size(); ++i) out.push_back({&entries_[i].second, vars[i]});
  return out;
}

std::size_t ParameterStore::count() const {
  std::size_t n = 0;
  for (const auto& e : entries_) n += e.second.size();
  return n;
}

bool ParameterStore::same_values(const ParameterStore& other) const {
  if (entries_.size() != other.entries_.size()) return false;
  for (std::size_t i = 0; i < entries_.size(); ++i) {
    if (entries_[i].first != other.entries_[i].first ||
        !entries_[i].second.same_values(other.entries_[i].second)) {
      return false;
    }
  }
  return true;
}

void ParameterStore::to_checkpoint(ModelCheckpoint& ckpt) const {
  for (const auto& [name, t] : entries_) ckpt.blocks.emplace_back(name, Tensor(t.shape, t.data));
}

void ParameterStore::from_checkpoint(const ModelCheckpoint& ckpt) {
  for (auto& [name, t] : entries_) {
    const Tensor& src = ckpt.block(name);
    if (src.shape != t.shape) {
      throw Error("checkpoint '" + ckpt.kind + "': block '" + name + "' has shape " + shape_string(src.shape) +
                  ", expected " + shape_string(t.shape));
    }
    t.data = src.data;
  }
}

Tensor init_weight(std::size_t out, std::size_t in, Rng& rng, double gain) {
  std::normal_distribution<double> normal(0.0, gain / std::sqrt(static_cast<double>(in)));
  Tensor w = Tensor::zeros({out, in});
  for (double& v : w.data) v = normal(rng);
  return w;
}

Tensor flatten_image(const Tensor& image) {
  if (image.size() != kImageSize) {
    throw Error("expected a 32x32x3 image, got shape " + shape_string(image.shape));
  }
  return Tensor({kImageSize}, image.data);
}

Tensor unflatten_image(Tensor flat) {
  if (flat.size() != kImageSize) throw Error("expected 3072 pixel values, got " + std::to_string(flat.size()));
  return Tensor({kImageSide, kImageSide, kImageChannels}, std::move(flat.data));
}

int category_of(ShapeClass shape, Color color) {
  return static_cast<int>(shape) * kNumColors + static_cast<int>(color);
}

// ------------------------------------------------------------- generator

GeneratorModel::GeneratorModel(Hyper hyper, std::uint64_t seed) : hyper_(hyper), seed_(seed) {
  Rng rng = make_stream(seed, 1);
  params_.add("w1", init_weight(hyper.hidden, hyper.latent_dim, rng));
  params_.add("b1", Tensor::zeros({hyper.hidden}));
  params_.add("w2", init_weight(kImageSize, hyper.hidden, rng));
  params_.add("b2", Tensor::zeros({kImageSize}));
}

Var GeneratorModel::forward(Tape& tape, const std::vector<Var>& v, Var h) const {
  const Var hidden = tanh(tape, affine(tape, v[0], v[1], h));
  return sigmoid(tape, affine(tape, v[2], v[3], hidden));
}

Tensor GeneratorModel::generate(const Tensor& h) const {
  if (h.size() != hyper_.latent_dim) {
    throw Error("generator: latent has " + std::to_string(h.size()) + " values, expected " +
                std::to_string(hyper_.latent_dim));
  }
  Tape tape;
  const auto vars = params_.bind(tape, false);
  const Var x = forward(tape, vars, tape.leaf(Tensor({hyper_.latent_dim}, h.data)));
  return unflatten_image(tape.value(x));
}

ModelCheckpoint GeneratorModel::checkpoint() const {
  ModelCheckpoint c;
  c.kind = kKind;
  c.seed = seed_;
  c.hyperparameters = {{"latent_dim", hyper_.latent_dim}, {"hidden", hyper_.hidden}};
  params_.to_checkpoint(c);
  if (latent_table) c.blocks.emplace_back("latents", Tensor(latent_table->shape, latent_table->data));
  return c;
}

GeneratorModel GeneratorModel::from_checkpoint(const ModelCheckpoint& ckpt) {
  check_kind(ckpt, kKind);
  GeneratorModel m({hp(ckpt, "latent_dim"), hp(ckpt, "hidden")}, ckpt.seed);
  m.params_.from_checkpoint(ckpt);
  if (ckpt.has_block("latents")) {
    const Tensor& t = ckpt.block("latents");
    m.latent_table = Tensor(t.shape, t.data);
  }
  return m;
}

// ------------------------------------------------------------- captioner

namespace {
enum CaptionerParam : std::size_t { kEncW, kEncB, kEmbW, kEmbB, kRnnW, kRnnB, kOutW, kOutB };
}

CaptionerModel::CaptionerModel(Hyper hyper, std::uint64_t seed) : hyper_(hyper), seed_(seed) {
  if (hyper_.vocab == 0) hyper_.vocab = Vocabulary::standard().size();
  Rng rng = make_stream(seed, 2);
  const auto& h = hyper_;
  params_.add("enc_w", init_weight(h.feature, kImageSize, rng));
  params_.add("enc_b", Tensor::zeros({h.feature}));
  params_.add("emb_w", init_weight(h.embed, h.vocab, rng, std::sqrt(static_cast<double>(h.vocab))));
  params_.add("emb_b", Tensor::zeros({h.embed}));
  params_.add("rnn_w", init_weight(h.hidden, h.embed + h.feature + h.hidden, rng));
  params_.add("rnn_b", Tensor::zeros({h.hidden}));
  // small output layer: an untrained captioner predicts a near-uniform distribution
  params_.add("out_w", init_weight(h.vocab, h.hidden, rng, 0.01));
  params_.add("out_b", Tensor::zeros({h.vocab}));
}

Var CaptionerModel::encode(Tape& tape, const std::vector<Var>& v, Var image) const {
  const Var rows = as_rows(tape, image, kImageSize);
  return tanh(tape, affine(tape, v[kEncW], v[kEncB], rows));
}

Var CaptionerModel::step(Tape& tape, const std::vector<Var>& v, Var feature, Var hidden, Var one_hot,
                         Var* next_hidden) const {
  const Var emb = affine(tape, v[kEmbW], v[kEmbB], one_hot);
  const Var h = tanh(tape, affine(tape, v[kRnnW], v[kRnnB], concat(tape, {emb, feature, hidden})));
  *next_hidden = h;
  return softmax(tape, affine(tape, v[kOutW], v[kOutB], h));
}

Var CaptionerModel::decode_loss(Tape& tape, const std::vector<Var>& v, Var feature,
                                const std::vector<const Caption*>& targets) const {
  const Var feat = as_rows(tape, feature, hyper_.feature);
  const std::size_t n = tape.value(feat).shape[0];
  if (targets.size() != n) {
    throw Error("captioner: " + std::to_string(targets.size()) + " targets for " + std::to_string(n) + " features");
  }
  std::size_t steps = 0, total = 0;
  for (const Caption* c : targets) {
    if (c->ids.empty()) throw Error("captioner: empty target caption");
    for (int id : c->ids) {
      if (id <= Vocabulary::kEos || static_cast<std::size_t>(id) >= hyper_.vocab) {
        throw Error("captioner: token id " + std::to_string(id) + " outside the content vocabulary");
      }
    }
    steps = std::max(steps, c->ids.size() + 1);
    total += c->ids.size() + 1;
  }

  Var hidden = zeros_leaf(tape, {n, hyper_.hidden});
  Var loss{};
  for (std::size_t t = 0; t < steps; ++t) {
    Tensor one_hot = Tensor::zeros({n, hyper_.vocab});
    Tensor target = Tensor::filled({n}, -1.0);
    std::size_t valid = 0;
    for (std::size_t r = 0; r < n; ++r) {
      const auto& ids = targets[r]->ids;
      const int input = t == 0 ? Vocabulary::kBos : (t - 1 < ids.size() ? ids[t - 1] : Vocabulary::kPad);
      one_hot.data[r * hyper_.vocab + static_cast<std::size_t>(input)] = 1.0;
      if (t < ids.size()) {
        target.data[r] = ids[t];
      } else if (t == ids.size()) {
        target.data[r] = Vocabulary::kEos;
      }
      valid += target.data[r] >= 0.0;
    }
    const Var probs = step(tape, v, feat, hidden, tape.leaf(std::move(one_hot)), &hidden);
    const Var ce = cross_entropy(tape, probs, tape.leaf(std::move(target)));
    const Var term = scale(tape, ce, static_cast<double>(valid) / static_cast<double>(total));
    loss = t == 0 ? term : add(tape, loss, term);
  }
  return loss;
}

Caption CaptionerModel::greedy_decode(const Tensor& image) const {
  Tape tape;
  const auto v = params_.bind(tape, false);
  const Var feat = encode(tape, v, tape.leaf(flatten_image(image)));
  Var hidden = zeros_leaf(tape, {1, hyper_.hidden});
  std::vector<int> ids;
  int prev = Vocabulary::kBos;
  for (std::size_t t = 0; t + 1 < Vocabulary::kMaxLength; ++t) {
    Tensor one_hot = Tensor::zeros({1, hyper_.vocab});
    one_hot.data[static_cast<std::size_t>(prev)] = 1.0;
    const Tensor& p = tape.value(step(tape, v, feat, hidden, tape.leaf(std::move(one_hot)), &hidden));
    auto first = p.data.begin() + Vocabulary::kEos;
    const int best = static_cast<int>(std::max_element(first, p.data.end()) - p.data.begin());
    if (best == Vocabulary::kEos) break;
    ids.push_back(best);
    prev = best;
  }
  return Vocabulary::standard().from_ids(ids);
}

std::vector<Tensor> CaptionerModel::step_distributions(const Tensor& image, const Caption& target) const {
  Tape tape;
  const auto v = params_.bind(tape, false);
  const Var feat = encode(tape, v, tape.leaf(flatten_image(image)));
  Var hidden = zeros_leaf(tape, {1, hyper_.hidden});
  std::vector<Tensor> out;
  for (std::size_t t = 0; t <= target.ids.size(); ++t) {
    Tensor one_hot = Tensor::zeros({1, hyper_.vocab});
    const int input = t == 0 ? Vocabulary::kBos : target.ids[t - 1];
    one_hot.data[static_cast<std::size_t>(input)] = 1.0;
    const Var p = step(tape, v, feat, hidden, tape.leaf(std::move(one_hot)), &hidden);
    out.push_back(Tensor({hyper_.vocab}, tape.value(p).data));
  }
  return out;
}

ModelCheckpoint CaptionerModel::checkpoint() const {
  ModelCheckpoint c;
  c.kind = kKind;
  c.seed = seed_;
  c.hyperparameters = {{"feature", hyper_.feature},
                       {"hidden", hyper_.hidden},
                       {"embed", hyper_.embed},
                       {"vocab", hyper_.vocab},
                       {"vocab_version", Vocabulary::kVersion}};
  params_.to_checkpoint(c);
  return c;
}

CaptionerModel CaptionerModel::from_checkpoint(const ModelCheckpoint& ckpt) {
  check_kind(ckpt, kKind);
  if (hp(ckpt, "vocab_version") != static_cast<std::size_t>(Vocabulary::kVersion)) {
    throw Error("captioner checkpoint was trained on a different vocabulary version");
  }
  CaptionerModel m({hp(ckpt, "feature"), hp(ckpt, "hidden"), hp(ckpt, "embed"), hp(ckpt, "vocab")}, ckpt.seed);
  m.params_.from_checkpoint(ckpt);
  return m;
}

Var caption_loss(Tape& tape, const CaptionerModel& model, const std::vector<Var>& vars, Var image,
                 const Caption& target) {
  if (tape.value(image).size() != kImageSize) {
    throw Error("caption_loss: expected a 32x32x3 image, got shape " + shape_string(tape.value(image).shape));
  }
  if (target.ids.empty()) throw Error("caption_loss: empty target caption");
  const Var feat = model.encode(tape, vars, image);
  return model.decode_loss(tape, vars, feat, {&target});
}

double caption_loss(const CaptionerModel& model, const Tensor& image, const Caption& target) {
  Tape tape;
  const auto vars = model.params().bind(tape, false);
  return tape.value(caption_loss(tape, model, vars, tape.leaf(flatten_image(image)), target)).item();
}

// ------------------------------------------------------------- DAE

DaeModel::DaeModel(Hyper hyper, std::uint64_t seed) : hyper_(hyper), seed_(seed) {
  Rng rng = make_stream(seed, 3);
  params_.add("enc_w", init_weight(hyper.hidden, hyper.latent_dim, rng));
  params_.add("enc_b", Tensor::zeros({hyper.hidden}));
  params_.add("dec_w", init_weight(hyper.latent_dim, hyper.hidden, rng, 0.1));
  params_.add("dec_b", Tensor::zeros({hyper.latent_dim}));
}

DaeModel DaeModel::identity(Hyper hyper) {
  DaeModel m(hyper, 0);
  std::fill(m.params_.at(2).data.begin(), m.params_.at(2).data.end(), 0.0);
  return m;
}

Var DaeModel::forward(Tape& tape, const std::vector<Var>& v, Var h) const {
  const Var hidden = tanh(tape, affine(tape, v[0], v[1], h));
  return add(tape, h, affine(tape, v[2], v[3], hidden));
}

Tensor dae_residual(const DaeModel& model, const Tensor& h) {
  if (h.rank() != 1 || h.size() != model.hyper().latent_dim) {
    throw Error("dae_residual: latent shape " + shape_string(h.shape) + ", expected [" +
                std::to_string(model.hyper().latent_dim) + "]");
  }
  Tape tape;
  const auto vars = model.params().bind(tape, false);
  const Var x = tape.leaf(Tensor(h.shape, h.data));
  return tape.value(sub(tape, model.forward(tape, vars, x), x));
}

ModelCheckpoint DaeModel::checkpoint() const {
  ModelCheckpoint c;
  c.kind = kKind;
  c.seed = seed_;
  c.hyperparameters = {{"latent_dim", hyper_.latent_dim}, {"hidden", hyper_.hidden}};
  params_.to_checkpoint(c);
  return c;
}

DaeModel DaeModel::from_checkpoint(const ModelCheckpoint& ckpt) {
  check_kind(ckpt, kKind);
  DaeModel m({hp(ckpt, "latent_dim"), hp(ckpt, "hidden")}, ckpt.seed);
  m.params_.from_checkpoint(ckpt);
  return m;
}

// ------------------------------------------------------------- detector

DetectorModel::DetectorModel(Hyper hyper, std::uint64_t seed) : hyper_(hyper), seed_(seed) {
  Rng rng = make_stream(seed, 4);
  params_.add("enc_w", init_weight(hyper.hidden, kImageSize, rng));
  params_.add("enc_b", Tensor::zeros({hyper.hidden}));
  params_.add("head_w", init_weight(kHeadSize, hyper.hidden, rng, 0.1));
  params_.add("head_b", Tensor::zeros({kHeadSize}));
}

DetectorModel::Outputs DetectorModel::forward(Tape& tape, const std::vector<Var>& v, Var images) const {
  const Var rows = as_rows(tape, images, kImageSize);
  const std::size_t n = tape.value(rows).shape[0];
  const Var hidden = tanh(tape, affine(tape, v[0], v[1], rows));
  const Var head = affine(tape, v[2], v[3], hidden);
  constexpr std::size_t kClassEnd = kGridCells * (1 + kClasses);
  Outputs out;
  out.objectness = sigmoid(tape, slice(tape, head, 0, kGridCells));
  out.classes = softmax(tape, reshape(tape, slice(tape, head, kGridCells, kClassEnd), {n * kGridCells, kClasses}));
  out.boxes = sigmoid(tape, slice(tape, head, kClassEnd, kHeadSize));
  return out;
}

std::vector<Detection> detect(const DetectorModel& model, const Tensor& image) {
  Tape tape;
  const auto vars = model.params().bind(tape, false);
  const auto out = model.forward(tape, vars, tape.leaf(flatten_image(image)));
  const Tensor& obj = tape.value(out.objectness);
  const Tensor& cls = tape.value(out.classes);
  const Tensor& box = tape.value(out.boxes);
  std::vector<Detection> dets;
  for (std::size_t c = 0; c < kGridCells; ++c) {
    const auto probs = cls.row(c);
    const auto best = std::max_element(probs.begin(), probs.end());
    const double* b = box.data.data() + c * DetectorModel::kBoxValues;
    const double col = static_cast<double>(c % kGridSide), row = static_cast<double>(c / kGridSide);
    const double cx = (col + b[0]) / kGridSide, cy = (row + b[1]) / kGridSide;
    const double x0 = std::max(0.0, cx - b[2] / 2), x1 = std::min(1.0, cx + b[2] / 2);
    const double y0 = std::max(0.0, cy - b[3] / 2), y1 = std::min(1.0, cy + b[3] / 2);
    Detection d;
    d.x = x0;
    d.y = y0;
    d.w = x1 - x0;
    d.h = y1 - y0;
    d.class_id = static_cast<int>(best - probs.begin());
    d.confidence = obj.data[c] * *best;
    d.cell = static_cast<int>(c);
    dets.push_back(d);
  }
  return dets;
}

ModelCheckpoint DetectorModel::checkpoint() const {
  ModelCheckpoint c;
  c.kind = kKind;
  c.seed = seed_;
  c.hyperparameters = {{"hidden", hyper_.hidden}, {"grid", kGridSide}, {"classes", kClasses}};
  params_.to_checkpoint(c);
  return c;
}

DetectorModel DetectorModel::from_checkpoint(const ModelCheckpoint& ckpt) {
  check_kind(ckpt, kKind);
  DetectorModel m({hp(ckpt, "hidden")}, ckpt.seed);
  m.params_.from_checkpoint(ckpt);
  return m;
}

// ------------------------------------------------------------- classifier

ClassifierModel::ClassifierModel(Hyper hyper, std::uint64_t seed) : hyper_(hyper), seed_(seed) {
  Rng rng = make_stream(seed, 5);
  params_.add("enc_w", init_weight(hyper.hidden, kImageSize, rng));
  params_.add("enc_b", Tensor::zeros({hyper.hidden}));
  params_.add("out_w", init_weight(kCategories, hyper.hidden, rng, 0.1));
  params_.add("out_b", Tensor::zeros({kCategories}));
}

Var ClassifierModel::forward(Tape& tape, const std::vector<Var>& v, Var images) const {
  const Var rows = as_rows(tape, images, kImageSize);
  const Var hidden = tanh(tape, affine(tape, v[0], v[1], rows));
  return softmax(tape, affine(tape, v[2], v[3], hidden));
}

Tensor ClassifierModel::predict(const Tensor& image) const {
  Tape tape;
  const auto vars = params_.bind(tape, false);
  const Var p = forward(tape, vars, tape.leaf(flatten_image(image)));
  return Tensor({kCategories}, tape.value(p).data);
}

ModelCheckpoint ClassifierModel::checkpoint() const {
  ModelCheckpoint c;
  c.kind = kKind;
  c.seed = seed_;
  c.hyperparameters = {{"hidden", hyper_.hidden}, {"categories", kCategories}};
  params_.to_checkpoint(c);
  return c;
}

ClassifierModel ClassifierModel::from_checkpoint(const ModelCheckpoint& ckpt) {
  check_kind(ckpt, kKind);
  ClassifierModel m({hp(ckpt, "hidden")}, ckpt.seed);
  m.params_.from_checkpoint(ckpt);
  return m;
}

// ------------------------------------------------------------- model set

void ModelSet::check_consistent() const {
  if (generator.hyper().latent_dim != dae.hyper().latent_dim) {
    throw Error("model set: generator latent dimension " + std::to_string(generator.hyper().latent_dim) +
                " differs from DAE dimension " + std::to_string(dae.hyper().latent_dim));
  }
  if (captioner.hyper().vocab != Vocabulary::standard().size()) {
    throw Error("model set: captioner vocabulary size does not match the caption vocabulary");
  }
}

ModelSet load_models(const std::filesystem::path& dir) {
  auto load = [&](const char* file) {
    const auto path = dir / file;
    if (!std::filesystem::exists(path)) throw Error("missing checkpoint '" + path.string() + "'");
    return load_checkpoint(path);
  };
  ModelSet m{GeneratorModel::from_checkpoint(load(kGeneratorFile)),
             CaptionerModel::from_checkpoint(load(kCaptionerFile)), DaeModel::from_checkpoint(load(kDaeFile)),
             DetectorModel::from_checkpoint(load(kDetectorFile)),
             ClassifierModel::from_checkpoint(load(kClassifierFile))};
  m.check_consistent();
  return m;
}

}  // namespace mmvr
