#pragma once

// Randomized gradient checks for whole models. Each case draws a model seed,
// jitters every parameter, draws an input, and compares the tape's
// directional derivative (over parameters and input together) with a central
// difference along the same direction.

#include <functional>

#include "mmvr/models.hpp"
#include "mmvr/optimizer.hpp"
#include "support/gradcheck.hpp"

namespace mmvr::testing {

using LossBuilder = std::function<Var(Tape&, const std::vector<Var>&, Var)>;

/// Relative error between analytic and numeric directional derivatives of
/// build(params, x). `x_grad` controls whether x is part of the direction.
inline double model_gradient_error(ParameterStore& params, const Tensor& x, bool x_grad, const LossBuilder& build,
                                   std::mt19937_64& rng, double eps = 1e-5) {
  std::vector<Tensor> dirs;
  for (std::size_t i = 0; i < params.size(); ++i) dirs.push_back(random_direction(params.at(i).shape, rng));
  const Tensor dx = x_grad ? random_direction(x.shape, rng) : Tensor::zeros(x.shape);

  double analytic = 0.0;
  {
    Tape tape;
    const auto vars = params.bind(tape, true);
    const Var xv = tape.leaf(Tensor(x.shape, x.data, x_grad));
    const Gradients g = backward(tape, build(tape, vars, xv));
    for (std::size_t i = 0; i < vars.size(); ++i) {
      if (g.contains(vars[i])) analytic += dot(g.at(vars[i]), dirs[i]);
    }
    if (x_grad) analytic += dot(g.at(xv), dx);
  }

  auto eval = [&](double t) {
    for (std::size_t i = 0; i < params.size(); ++i) {
      for (std::size_t j = 0; j < dirs[i].size(); ++j) params.at(i).data[j] += t * dirs[i].data[j];
    }
    Tensor xt = x;
    for (std::size_t j = 0; j < xt.size(); ++j) xt.data[j] += t * dx.data[j];
    Tape tape;
    const auto vars = params.bind(tape, false);
    const double v = tape.value(build(tape, vars, tape.constant(xt))).item();
    for (std::size_t i = 0; i < params.size(); ++i) {
      for (std::size_t j = 0; j < dirs[i].size(); ++j) params.at(i).data[j] -= t * dirs[i].data[j];
    }
    return v;
  };
  const double numeric = (eval(eps) - eval(-eps)) / (2.0 * eps);
  return relative_error(analytic, numeric, 1e-6);
}

inline void jitter(ParameterStore& params, std::mt19937_64& rng, double scale = 0.05) {
  std::normal_distribution<double> n(0.0, scale);
  for (std::size_t i = 0; i < params.size(); ++i) {
    for (double& v : params.at(i).data) v += n(rng);
  }
}

inline Caption random_caption(std::mt19937_64& rng) {
  std::uniform_int_distribution<int> pick(0, kNumTemplates - 1);
  for (;;) {
    const SceneSpec s = sample_scene(rng);
    const int t = pick(rng);
    if (template_compatible(s, t)) return caption_of(s, t);
  }
}

/// Worst relative error over `cases` randomized checks of one model kind:
/// "generator", "captioner", "dae", "detector", "classifier" or "composed".
inline double worst_gradient_error(const std::string& kind, int cases, std::uint64_t seed) {
  std::mt19937_64 rng = make_stream(seed);
  double worst = 0.0;
  for (int c = 0; c < cases; ++c) {
    const auto model_seed = static_cast<std::uint64_t>(c) + seed * 1000;
    double err = 0.0;
    if (kind == "generator") {
      GeneratorModel m({}, model_seed);
      jitter(m.params(), rng);
      const Tensor h = random_tensor({2, 64}, rng, -2.0, 2.0);
      const Tensor target = random_tensor({2, kImageSize}, rng, 0.0, 1.0);
      err = model_gradient_error(m.params(), h, true, [&](Tape& t, const std::vector<Var>& v, Var x) {
        return mse(t, m.forward(t, v, x), t.constant(target));
      }, rng);
    } else if (kind == "captioner") {
      CaptionerModel m({}, model_seed);
      jitter(m.params(), rng);
      const Tensor image = random_tensor({kImageSize}, rng, 0.0, 1.0);
      const Caption target = random_caption(rng);
      err = model_gradient_error(m.params(), image, true, [&](Tape& t, const std::vector<Var>& v, Var x) {
        return caption_loss(t, m, v, x, target);
      }, rng);
    } else if (kind == "dae") {
      DaeModel m({}, model_seed);
      jitter(m.params(), rng);
      const Tensor h = random_tensor({3, 64}, rng, -2.0, 2.0);
      const Tensor target = random_tensor({3, 64}, rng, -2.0, 2.0);
      err = model_gradient_error(m.params(), h, true, [&](Tape& t, const std::vector<Var>& v, Var x) {
        return mse(t, m.forward(t, v, x), t.constant(target));
      }, rng);
    } else if (kind == "detector") {
      DetectorModel m({}, model_seed);
      jitter(m.params(), rng);
      const Tensor images = random_tensor({2, kImageSize}, rng, 0.0, 1.0);
      const Tensor obj = random_tensor({2, kGridCells}, rng, 0.0, 1.0);
      const Tensor box = random_tensor({2, kGridCells * 4}, rng, 0.0, 1.0);
      Tensor cls = Tensor::zeros({2 * kGridCells});
      std::uniform_int_distribution<int> k(-1, static_cast<int>(DetectorModel::kClasses) - 1);
      for (double& v : cls.data) v = k(rng);
      cls.data[0] = 0;  // at least one counted row
      err = model_gradient_error(m.params(), images, true, [&](Tape& t, const std::vector<Var>& v, Var x) {
        const auto out = m.forward(t, v, x);
        return add(t, add(t, mse(t, out.objectness, t.constant(obj)), cross_entropy(t, out.classes, t.constant(cls))),
                   mse(t, out.boxes, t.constant(box)));
      }, rng);
    } else if (kind == "classifier") {
      ClassifierModel m({}, model_seed);
      jitter(m.params(), rng);
      const Tensor images = random_tensor({3, kImageSize}, rng, 0.0, 1.0);
      Tensor labels = Tensor::zeros({3});
      std::uniform_int_distribution<int> k(0, static_cast<int>(ClassifierModel::kCategories) - 1);
      for (double& v : labels.data) v = k(rng);
      err = model_gradient_error(m.params(), images, true, [&](Tape& t, const std::vector<Var>& v, Var x) {
        return cross_entropy(t, m.forward(t, v, x), t.constant(labels));
      }, rng);
    } else if (kind == "composed") {
      // caption_gradient against a central difference of the scalar pipeline
      GeneratorModel gen({}, model_seed);
      CaptionerModel cap({}, model_seed + 1);
      jitter(gen.params(), rng);
      jitter(cap.params(), rng);
      const Tensor h = random_tensor({64}, rng, -2.0, 2.0);
      const Caption target = random_caption(rng);
      const Tensor dir = random_direction(h.shape, rng);
      const double analytic = dot(caption_gradient(gen, cap, h, target).grad, dir);
      const ScalarFn f = [&](const Tensor& z) { return caption_loss(cap, gen.generate(z), target); };
      err = relative_error(analytic, directional_fd(f, h, dir), 1e-6);
    } else {
      throw Error("unknown model kind " + kind);
    }
    worst = std::max(worst, err);
  }
  return worst;
}

}  // namespace mmvr::testing
