#include "mmvr/optim.hpp"

#include <cmath>

namespace mmvr {
namespace {

const Tensor& checked_grad(const BoundParam& p, const Gradients& grads) {
  if (!p.tensor) throw Error("optimizer: null parameter");
  if (!grads.contains(p.var)) throw Error("optimizer: parameter has no gradient");
  const Tensor& g = grads.at(p.var);
  if (g.shape != p.tensor->shape) {
    throw Error("optimizer: gradient shape " + shape_string(g.shape) + " does not match parameter " +
                shape_string(p.tensor->shape));
  }
  return g;
}

}  // namespace

void sgd_step(const std::vector<BoundParam>& params, const Gradients& grads, double learning_rate) {
  // validate everything first so a failure leaves all parameters untouched
  std::vector<const Tensor*> gs;
  gs.reserve(params.size());
  for (const auto& p : params) gs.push_back(&checked_grad(p, grads));
  for (std::size_t k = 0; k < params.size(); ++k) {
    auto& w = params[k].tensor->data;
    const auto& g = gs[k]->data;
    for (std::size_t i = 0; i < w.size(); ++i) w[i] -= learning_rate * g[i];
  }
}

Adam::Adam(double learning_rate, double beta1, double beta2, double eps)
    : lr_(learning_rate), beta1_(beta1), beta2_(beta2), eps_(eps) {}

void Adam::step(const std::vector<BoundParam>& params, const Gradients& grads) {
  if (m_.empty()) {
    for (const auto& p : params) {
      m_.emplace_back(p.tensor->size(), 0.0);
      v_.emplace_back(p.tensor->size(), 0.0);
    }
  }
  if (m_.size() != params.size()) throw Error("adam: parameter list changed between steps");
  ++t_;
  const double c1 = 1.0 - std::pow(beta1_, static_cast<double>(t_));
  const double c2 = 1.0 - std::pow(beta2_, static_cast<double>(t_));
  for (std::size_t k = 0; k < params.size(); ++k) {
    const auto& g = checked_grad(params[k], grads).data;
    auto& w = params[k].tensor->data;
    auto& m = m_[k];
    auto& v = v_[k];
    for (std::size_t i = 0; i < w.size(); ++i) {
      m[i] = beta1_ * m[i] + (1.0 - beta1_) * g[i];
      v[i] = beta2_ * v[i] + (1.0 - beta2_) * g[i] * g[i];
      w[i] -= lr_ * (m[i] / c1) / (std::sqrt(v[i] / c2) + eps_);
    }
  }
}

}  // namespace mmvr
