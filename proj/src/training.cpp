#include "mmvr/training.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

namespace mmvr {
namespace {

constexpr double kLatentPrior = 1e-3;

void require_data(const Dataset& data, const char* what) {
  if (data.size() == 0) throw Error(std::string(what) + ": empty dataset");
}

std::vector<std::size_t> shuffled(std::size_t n, Rng& rng) {
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), 0);
  std::shuffle(order.begin(), order.end(), rng);
  return order;
}

// Runs `epochs` passes over `n` examples in shuffled mini-batches.
// `step(batch)` performs one optimization step and returns the batch loss.
template <typename Step>
double run_epochs(std::size_t n, const TrainOptions& opts, Rng& rng, Step step) {
  double last = 0.0;
  const std::size_t batch = std::max<std::size_t>(1, opts.batch_size);
  for (int epoch = 0; epoch < opts.epochs; ++epoch) {
    const auto order = shuffled(n, rng);
    double total = 0.0;
    for (std::size_t start = 0; start < n; start += batch) {
      const std::size_t end = std::min(n, start + batch);
      const std::vector<std::size_t> idx(order.begin() + static_cast<std::ptrdiff_t>(start),
                                         order.begin() + static_cast<std::ptrdiff_t>(end));
      total += step(idx) * static_cast<double>(idx.size());
    }
    last = total / static_cast<double>(n);
    if (opts.on_epoch) opts.on_epoch(epoch, last);
  }
  return last;
}

Tensor gather_images(const Dataset& data, const std::vector<std::size_t>& idx) {
  Tensor t = Tensor::zeros({idx.size(), kImageSize});
  for (std::size_t r = 0; r < idx.size(); ++r) {
    std::copy(data.images[idx[r]].data.begin(), data.images[idx[r]].data.end(), t.data.begin() + r * kImageSize);
  }
  return t;
}

// Adam over rows of a table where each step touches only some rows.
class RowAdam {
 public:
  RowAdam(const Tensor& table, double lr) : lr_(lr), m_(table.size(), 0.0), v_(table.size(), 0.0) {}

  void step(Tensor& table, const std::vector<std::size_t>& rows, const Tensor& grad) {
    ++t_;
    const double c1 = 1.0 - std::pow(0.9, static_cast<double>(t_));
    const double c2 = 1.0 - std::pow(0.999, static_cast<double>(t_));
    const std::size_t w = table.cols();
    for (std::size_t r = 0; r < rows.size(); ++r) {
      for (std::size_t k = 0; k < w; ++k) {
        const std::size_t i = rows[r] * w + k;
        const double g = grad.data[r * w + k];
        m_[i] = 0.9 * m_[i] + 0.1 * g;
        v_[i] = 0.999 * v_[i] + 0.001 * g * g;
        table.data[i] -= lr_ * (m_[i] / c1) / (std::sqrt(v_[i] / c2) + 1e-8);
      }
    }
  }

 private:
  double lr_;
  long t_ = 0;
  std::vector<double> m_, v_;
};

}  // namespace

GeneratorTraining train_generator(const Dataset& data, const TrainOptions& opts, GeneratorModel::Hyper hyper) {
  require_data(data, "train_generator");
  GeneratorTraining out{GeneratorModel(hyper, opts.seed), Tensor::zeros({data.size(), hyper.latent_dim}), 0.0};
  Rng rng = make_stream(opts.seed, 11);
  std::normal_distribution<double> normal(0.0, 1.0);
  for (double& v : out.latents.data) v = normal(rng);

  Adam adam(opts.learning_rate);
  RowAdam latent_adam(out.latents, opts.learning_rate * 10.0);
  const std::size_t h = hyper.latent_dim;
  out.final_loss = run_epochs(data.size(), opts, rng, [&](const std::vector<std::size_t>& idx) {
    Tensor batch = Tensor::zeros({idx.size(), h}, true);
    for (std::size_t r = 0; r < idx.size(); ++r) {
      std::copy_n(out.latents.data.begin() + static_cast<std::ptrdiff_t>(idx[r] * h), h, batch.data.begin() + static_cast<std::ptrdiff_t>(r * h));
    }
    Tape tape;
    const auto vars = out.model.params().bind(tape, true);
    const Var z = tape.leaf(std::move(batch));
    const Var recon = mse(tape, out.model.forward(tape, vars, z), tape.leaf(gather_images(data, idx)));
    const Var prior = scale(tape, mean(tape, mul(tape, z, z)), kLatentPrior);
    const Gradients g = backward(tape, add(tape, recon, prior));
    adam.step(out.model.params().bound(vars), g);
    latent_adam.step(out.latents, idx, g.at(z));
    return tape.value(recon).item();
  });
  out.model.latent_table = out.latents;
  return out;
}

std::size_t exact_matches(const CaptionerModel& model, const Dataset& data, std::size_t begin, std::size_t end) {
  const auto& vocab = Vocabulary::standard();
  std::size_t hits = 0;
  for (std::size_t i = begin; i < end; ++i) {
    const Caption decoded = model.greedy_decode(data.images[i]);
    for (const auto& c : data.manifest.entries[i].captions) {
      if (vocab.encode(c) == decoded) {
        ++hits;
        break;
      }
    }
  }
  return hits;
}

CaptionerTraining train_captioner(const Dataset& data, const TrainOptions& opts, CaptionerModel::Hyper hyper) {
  require_data(data, "train_captioner");
  const auto& vocab = Vocabulary::standard();
  const std::size_t n = data.size();
  const std::size_t train_end = n > 200 ? n - 100 : n;

  struct Pair {
    std::size_t image;
    Caption caption;
  };
  std::vector<Pair> pairs;
  for (std::size_t i = 0; i < train_end; ++i) {
    for (const auto& c : data.manifest.entries[i].captions) pairs.push_back({i, vocab.encode(c)});
  }

  CaptionerTraining out{CaptionerModel(hyper, opts.seed)};
  Adam adam(opts.learning_rate);
  Rng rng = make_stream(opts.seed, 12);
  out.final_loss = run_epochs(pairs.size(), opts, rng, [&](const std::vector<std::size_t>& idx) {
    std::vector<std::size_t> images;
    std::vector<const Caption*> targets;
    for (std::size_t k : idx) {
      images.push_back(pairs[k].image);
      targets.push_back(&pairs[k].caption);
    }
    Tape tape;
    const auto vars = out.model.params().bind(tape, true);
    const Var feat = out.model.encode(tape, vars, tape.leaf(gather_images(data, images)));
    const Var loss = out.model.decode_loss(tape, vars, feat, targets);
    adam.step(out.model.params().bound(vars), backward(tape, loss));
    return tape.value(loss).item();
  });

  out.train_total = std::min<std::size_t>(train_end, 100);
  out.train_exact = exact_matches(out.model, data, 0, out.train_total);
  out.held_out_total = n - train_end;
  out.held_out_exact = exact_matches(out.model, data, train_end, n);
  return out;
}

DaeTraining train_dae(const Tensor& latents, const TrainOptions& opts, double noise_std, DaeModel::Hyper hyper) {
  if (latents.rank() != 2 || latents.shape[1] != hyper.latent_dim) {
    throw Error("train_dae: latents must be [N," + std::to_string(hyper.latent_dim) + "], got " +
                shape_string(latents.shape));
  }
  DaeTraining out{DaeModel(hyper, opts.seed)};
  Adam adam(opts.learning_rate);
  Rng rng = make_stream(opts.seed, 13);
  std::normal_distribution<double> noise(0.0, noise_std);
  const std::size_t h = hyper.latent_dim;
  out.final_loss = run_epochs(latents.shape[0], opts, rng, [&](const std::vector<std::size_t>& idx) {
    Tensor clean = Tensor::zeros({idx.size(), h});
    for (std::size_t r = 0; r < idx.size(); ++r) {
      std::copy_n(latents.data.begin() + static_cast<std::ptrdiff_t>(idx[r] * h), h, clean.data.begin() + static_cast<std::ptrdiff_t>(r * h));
    }
    Tensor noisy = clean;
    for (double& v : noisy.data) v += noise(rng);
    Tape tape;
    const auto vars = out.model.params().bind(tape, true);
    const Var loss = mse(tape, out.model.forward(tape, vars, tape.leaf(std::move(noisy))), tape.leaf(std::move(clean)));
    adam.step(out.model.params().bound(vars), backward(tape, loss));
    return tape.value(loss).item();
  });
  return out;
}

DetectorTraining train_detector(const Dataset& data, const TrainOptions& opts, DetectorModel::Hyper hyper) {
  require_data(data, "train_detector");
  constexpr double kObjectnessWeight = 5.0;
  constexpr double kBoxWeight = 20.0;
  DetectorTraining out{DetectorModel(hyper, opts.seed)};
  Adam adam(opts.learning_rate);
  Rng rng = make_stream(opts.seed, 14);
  out.final_loss = run_epochs(data.size(), opts, rng, [&](const std::vector<std::size_t>& idx) {
    const std::size_t b = idx.size();
    Tensor obj = Tensor::zeros({b, kGridCells});
    Tensor cls = Tensor::filled({b * kGridCells}, -1.0);
    Tensor box = Tensor::zeros({b, kGridCells * DetectorModel::kBoxValues});
    Tensor mask = Tensor::zeros({b, kGridCells * DetectorModel::kBoxValues});
    for (std::size_t r = 0; r < b; ++r) {
      for (const auto& o : data.manifest.entries[idx[r]].scene.objects) {
        const auto c = static_cast<std::size_t>(o.cell);
        const Box bx = object_box(o);
        const double col = static_cast<double>(c % kGridSide), row = static_cast<double>(c / kGridSide);
        obj.data[r * kGridCells + c] = 1.0;
        cls.data[r * kGridCells + c] = static_cast<double>(o.shape);
        const double target[4] = {(bx.x + bx.w / 2) * kGridSide - col, (bx.y + bx.h / 2) * kGridSide - row, bx.w,
                                  bx.h};
        for (std::size_t k = 0; k < 4; ++k) {
          const std::size_t i = r * kGridCells * 4 + c * 4 + k;
          box.data[i] = target[k];
          mask.data[i] = 1.0;
        }
      }
    }
    Tape tape;
    const auto vars = out.model.params().bind(tape, true);
    const auto pred = out.model.forward(tape, vars, tape.leaf(gather_images(data, idx)));
    const Var m = tape.leaf(std::move(mask));
    const Var box_err = mul(tape, sub(tape, pred.boxes, tape.leaf(std::move(box))), m);
    const Var loss = add(tape,
                         add(tape, scale(tape, mse(tape, pred.objectness, tape.leaf(std::move(obj))), kObjectnessWeight),
                             cross_entropy(tape, pred.classes, tape.leaf(std::move(cls)))),
                         scale(tape, mean(tape, mul(tape, box_err, box_err)), kBoxWeight));
    adam.step(out.model.params().bound(vars), backward(tape, loss));
    return tape.value(loss).item();
  });
  return out;
}

ClassifierTraining train_classifier(const Dataset& data, const TrainOptions& opts, ClassifierModel::Hyper hyper) {
  require_data(data, "train_classifier");
  struct Row {
    std::size_t image;
    int category;
  };
  std::vector<Row> rows;
  for (std::size_t i = 0; i < data.size(); ++i) {
    for (const auto& o : data.manifest.entries[i].scene.objects) rows.push_back({i, category_of(o.shape, o.color)});
  }
  ClassifierTraining out{ClassifierModel(hyper, opts.seed)};
  Adam adam(opts.learning_rate);
  Rng rng = make_stream(opts.seed, 15);
  out.final_loss = run_epochs(rows.size(), opts, rng, [&](const std::vector<std::size_t>& idx) {
    std::vector<std::size_t> images;
    Tensor target = Tensor::zeros({idx.size()});
    for (std::size_t r = 0; r < idx.size(); ++r) {
      images.push_back(rows[idx[r]].image);
      target.data[r] = rows[idx[r]].category;
    }
    Tape tape;
    const auto vars = out.model.params().bind(tape, true);
    const Var probs = out.model.forward(tape, vars, tape.leaf(gather_images(data, images)));
    const Var loss = cross_entropy(tape, probs, tape.leaf(std::move(target)));
    adam.step(out.model.params().bound(vars), backward(tape, loss));
    return tape.value(loss).item();
  });

  std::size_t singles = 0, correct = 0;
  for (std::size_t i = 0; i < data.size(); ++i) {
    const auto& objs = data.manifest.entries[i].scene.objects;
    if (objs.size() != 1) continue;
    ++singles;
    const Tensor p = out.model.predict(data.images[i]);
    const auto best = std::max_element(p.data.begin(), p.data.end()) - p.data.begin();
    correct += best == category_of(objs[0].shape, objs[0].color);
  }
  out.accuracy = singles ? static_cast<double>(correct) / static_cast<double>(singles) : 0.0;
  return out;
}

}  // namespace mmvr
