#pragma once

#include <vector>

#include "mmvr/autodiff.hpp"

namespace mmvr {

/// A model parameter together with the tape variable it was bound to.
struct BoundParam {
  Tensor* tensor = nullptr;
  Var var;
};

/// param <- param - learning_rate * grad, element-wise. Throws if any
/// parameter has no gradient or a gradient of a different shape.
void sgd_step(const std::vector<BoundParam>& params, const Gradients& grads, double learning_rate);

/// Adam with bias correction. State is keyed by parameter position, so the
/// same parameter list (same order) must be passed on every step.
class Adam {
 public:
  explicit Adam(double learning_rate, double beta1 = 0.9, double beta2 = 0.999, double eps = 1e-8);

  void step(const std::vector<BoundParam>& params, const Gradients& grads);
  long steps() const { return t_; }

 private:
  double lr_, beta1_, beta2_, eps_;
  long t_ = 0;
  std::vector<std::vector<double>> m_, v_;
};

}  // namespace mmvr
