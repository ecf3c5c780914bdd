#include "mmvr/autodiff.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <string>

namespace mmvr {
namespace {

std::atomic<std::uint64_t> next_tape_id{1};

[[noreturn]] void shape_error(OpKind kind, const std::string& detail) {
  throw Error(std::string(op_name(kind)) + ": " + detail);
}

std::string shapes_of(std::span<const Tensor* const> xs) {
  std::string s;
  for (std::size_t i = 0; i < xs.size(); ++i) {
    if (i) s += " ";
    s += shape_string(xs[i]->shape);
  }
  return s;
}

double dot_simd(const double* a, const double* b, std::size_t n) {
  double s = 0.0;
#pragma omp simd reduction(+ : s)
  for (std::size_t i = 0; i < n; ++i) s += a[i] * b[i];
  return s;
}

void axpy(double alpha, const double* x, double* y, std::size_t n) {
#pragma omp simd
  for (std::size_t i = 0; i < n; ++i) y[i] += alpha * x[i];
}

void require_arity(OpKind kind, std::size_t got, std::size_t want) {
  if (got != want) {
    shape_error(kind, "expected " + std::to_string(want) + " inputs, got " + std::to_string(got));
  }
}

void require_same_shape(OpKind kind, const Tensor& a, const Tensor& b) {
  if (a.shape != b.shape) {
    shape_error(kind, "shape mismatch " + shape_string(a.shape) + " vs " + shape_string(b.shape));
  }
}

Tensor forward(OpKind kind, std::span<const Tensor* const> in, const OpAttrs& attrs) {
  switch (kind) {
    case OpKind::kLeaf:
      shape_error(kind, "leaves are created with Tape::leaf/parameter");

    case OpKind::kAffine: {
      require_arity(kind, in.size(), 3);
      const Tensor& w = *in[0];
      const Tensor& b = *in[1];
      const Tensor& x = *in[2];
      if (w.rank() != 2 || b.rank() != 1 || b.shape[0] != w.shape[0] || x.rank() < 1 ||
          x.rank() > 2 || x.cols() != w.shape[1]) {
        shape_error(kind, "incompatible shapes W,b,x = " + shapes_of(in));
      }
      const std::size_t out = w.shape[0], inner = w.shape[1], n = x.rows();
      Shape s = x.rank() == 1 ? Shape{out} : Shape{n, out};
      Tensor y = Tensor::zeros(std::move(s));
      for (std::size_t r = 0; r < n; ++r) {
        const double* xr = x.data.data() + r * inner;
        double* yr = y.data.data() + r * out;
        for (std::size_t o = 0; o < out; ++o) {
          yr[o] = b.data[o] + dot_simd(w.data.data() + o * inner, xr, inner);
        }
      }
      return y;
    }

    case OpKind::kRelu:
    case OpKind::kTanh:
    case OpKind::kSigmoid: {
      require_arity(kind, in.size(), 1);
      Tensor y = *in[0];
      y.requires_grad = false;
      for (double& v : y.data) {
        if (kind == OpKind::kRelu) {
          v = v > 0.0 ? v : 0.0;
        } else if (kind == OpKind::kTanh) {
          v = std::tanh(v);
        } else {
          v = v >= 0.0 ? 1.0 / (1.0 + std::exp(-v)) : std::exp(v) / (1.0 + std::exp(v));
        }
      }
      return y;
    }

    case OpKind::kSoftmax: {
      require_arity(kind, in.size(), 1);
      Tensor y = *in[0];
      y.requires_grad = false;
      for (std::size_t r = 0; r < y.rows(); ++r) {
        auto row = y.row(r);
        const double m = *std::max_element(row.begin(), row.end());
        double z = 0.0;
        for (double& v : row) {
          v = std::exp(v - m);
          z += v;
        }
        for (double& v : row) v /= z;
      }
      return y;
    }

    case OpKind::kAdd:
    case OpKind::kSub:
    case OpKind::kMul: {
      require_arity(kind, in.size(), 2);
      require_same_shape(kind, *in[0], *in[1]);
      Tensor y = *in[0];
      y.requires_grad = false;
      const auto& b = in[1]->data;
      for (std::size_t i = 0; i < y.size(); ++i) {
        if (kind == OpKind::kAdd) {
          y.data[i] += b[i];
        } else if (kind == OpKind::kSub) {
          y.data[i] -= b[i];
        } else {
          y.data[i] *= b[i];
        }
      }
      return y;
    }

    case OpKind::kScale: {
      require_arity(kind, in.size(), 1);
      Tensor y = *in[0];
      y.requires_grad = false;
      for (double& v : y.data) v *= attrs.factor;
      return y;
    }

    case OpKind::kConcat: {
      if (in.empty()) shape_error(kind, "needs at least one input");
      const Shape& first = in[0]->shape;
      std::size_t cols = 0;
      for (const Tensor* t : in) {
        if (t->rank() != first.size() ||
            !std::equal(first.begin(), first.end() - 1, t->shape.begin())) {
          shape_error(kind, "leading dimensions differ: " + shapes_of(in));
        }
        cols += t->cols();
      }
      Shape s = first;
      s.back() = cols;
      Tensor y = Tensor::zeros(std::move(s));
      const std::size_t rows = in[0]->rows();
      for (std::size_t r = 0; r < rows; ++r) {
        double* dst = y.data.data() + r * cols;
        for (const Tensor* t : in) {
          auto src = t->row(r);
          dst = std::copy(src.begin(), src.end(), dst);
        }
      }
      return y;
    }

    case OpKind::kSlice: {
      require_arity(kind, in.size(), 1);
      const Tensor& x = *in[0];
      if (attrs.begin >= attrs.end || attrs.end > x.cols()) {
        shape_error(kind, "range [" + std::to_string(attrs.begin) + "," + std::to_string(attrs.end) +
                              ") out of bounds for " + shape_string(x.shape));
      }
      Shape s = x.shape;
      const std::size_t width = attrs.end - attrs.begin;
      s.back() = width;
      Tensor y = Tensor::zeros(std::move(s));
      for (std::size_t r = 0; r < x.rows(); ++r) {
        auto src = x.row(r);
        std::copy(src.begin() + attrs.begin, src.begin() + attrs.end, y.data.begin() + r * width);
      }
      return y;
    }

    case OpKind::kReshape: {
      require_arity(kind, in.size(), 1);
      if (attrs.shape.empty() || shape_size(attrs.shape) != in[0]->size()) {
        shape_error(kind, "cannot reshape " + shape_string(in[0]->shape) + " to " +
                              shape_string(attrs.shape));
      }
      return Tensor(attrs.shape, in[0]->data);
    }

    case OpKind::kSum:
    case OpKind::kMean: {
      require_arity(kind, in.size(), 1);
      double s = 0.0;
      for (double v : in[0]->data) s += v;
      if (kind == OpKind::kMean) s /= static_cast<double>(in[0]->size());
      return Tensor::scalar(s);
    }

    case OpKind::kCrossEntropy: {
      require_arity(kind, in.size(), 2);
      const Tensor& p = *in[0];
      const Tensor& target = *in[1];
      if (p.rank() < 1 || p.rank() > 2 || target.size() != p.rows()) {
        shape_error(kind, "probs/targets mismatch " + shapes_of(in));
      }
      double total = 0.0;
      std::size_t counted = 0;
      for (std::size_t r = 0; r < p.rows(); ++r) {
        const double t = target.data[r];
        if (t < 0.0) continue;
        const auto k = static_cast<std::size_t>(t);
        if (k >= p.cols() || static_cast<double>(k) != t) {
          shape_error(kind, "target " + std::to_string(t) + " outside [0," + std::to_string(p.cols()) + ")");
        }
        total -= std::log(p.row(r)[k]);
        ++counted;
      }
      return Tensor::scalar(counted ? total / static_cast<double>(counted) : 0.0);
    }
  }
  shape_error(kind, "unknown op");
}

// Accumulates the contribution of node output gradient `gy` into the input
// gradients. Only entries of `gin` for differentiable inputs are non-null.
void backward_node(OpKind kind, std::span<const Tensor* const> in, const Tensor& y,
                   const OpAttrs& attrs, const std::vector<double>& gy,
                   std::span<std::vector<double>*> gin) {
  switch (kind) {
    case OpKind::kLeaf:
      return;

    case OpKind::kAffine: {
      const Tensor& w = *in[0];
      const Tensor& x = *in[2];
      const std::size_t out = w.shape[0], inner = w.shape[1], n = x.rows();
      for (std::size_t r = 0; r < n; ++r) {
        const double* g = gy.data() + r * out;
        const double* xr = x.data.data() + r * inner;
        for (std::size_t o = 0; o < out; ++o) {
          const double go = g[o];
          if (go == 0.0) continue;
          if (gin[0]) axpy(go, xr, gin[0]->data() + o * inner, inner);
          if (gin[1]) (*gin[1])[o] += go;
          if (gin[2]) axpy(go, w.data.data() + o * inner, gin[2]->data() + r * inner, inner);
        }
      }
      return;
    }

    case OpKind::kRelu: {
      auto& g = *gin[0];
      for (std::size_t i = 0; i < g.size(); ++i) {
        if (in[0]->data[i] > 0.0) g[i] += gy[i];
      }
      return;
    }
    case OpKind::kTanh: {
      auto& g = *gin[0];
      for (std::size_t i = 0; i < g.size(); ++i) g[i] += gy[i] * (1.0 - y.data[i] * y.data[i]);
      return;
    }
    case OpKind::kSigmoid: {
      auto& g = *gin[0];
      for (std::size_t i = 0; i < g.size(); ++i) g[i] += gy[i] * y.data[i] * (1.0 - y.data[i]);
      return;
    }

    case OpKind::kSoftmax: {
      auto& g = *gin[0];
      const std::size_t cols = y.cols();
      for (std::size_t r = 0; r < y.rows(); ++r) {
        const double* yr = y.data.data() + r * cols;
        const double* gr = gy.data() + r * cols;
        const double s = dot_simd(yr, gr, cols);
        for (std::size_t c = 0; c < cols; ++c) g[r * cols + c] += yr[c] * (gr[c] - s);
      }
      return;
    }

    case OpKind::kAdd:
    case OpKind::kSub: {
      const double sign_b = kind == OpKind::kAdd ? 1.0 : -1.0;
      if (gin[0]) axpy(1.0, gy.data(), gin[0]->data(), gy.size());
      if (gin[1]) axpy(sign_b, gy.data(), gin[1]->data(), gy.size());
      return;
    }
    case OpKind::kMul: {
      for (std::size_t i = 0; i < gy.size(); ++i) {
        if (gin[0]) (*gin[0])[i] += gy[i] * in[1]->data[i];
        if (gin[1]) (*gin[1])[i] += gy[i] * in[0]->data[i];
      }
      return;
    }
    case OpKind::kScale:
      axpy(attrs.factor, gy.data(), gin[0]->data(), gy.size());
      return;

    case OpKind::kConcat: {
      const std::size_t cols = y.cols();
      std::size_t offset = 0;
      for (std::size_t k = 0; k < in.size(); ++k) {
        const std::size_t w = in[k]->cols();
        if (gin[k]) {
          for (std::size_t r = 0; r < y.rows(); ++r) {
            axpy(1.0, gy.data() + r * cols + offset, gin[k]->data() + r * w, w);
          }
        }
        offset += w;
      }
      return;
    }

    case OpKind::kSlice: {
      const std::size_t cols = in[0]->cols(), width = attrs.end - attrs.begin;
      for (std::size_t r = 0; r < y.rows(); ++r) {
        axpy(1.0, gy.data() + r * width, gin[0]->data() + r * cols + attrs.begin, width);
      }
      return;
    }

    case OpKind::kReshape:
      axpy(1.0, gy.data(), gin[0]->data(), gy.size());
      return;

    case OpKind::kSum:
    case OpKind::kMean: {
      const double g = kind == OpKind::kSum ? gy[0] : gy[0] / static_cast<double>(in[0]->size());
      for (double& v : *gin[0]) v += g;
      return;
    }

    case OpKind::kCrossEntropy: {
      if (!gin[0]) return;
      const Tensor& p = *in[0];
      const Tensor& target = *in[1];
      std::size_t counted = 0;
      for (double t : target.data) counted += t >= 0.0;
      if (!counted) return;
      const double g = gy[0] / static_cast<double>(counted);
      for (std::size_t r = 0; r < p.rows(); ++r) {
        if (target.data[r] < 0.0) continue;
        const auto k = static_cast<std::size_t>(target.data[r]);
        (*gin[0])[r * p.cols() + k] -= g / p.row(r)[k];
      }
      return;
    }
  }
}

}  // namespace

std::string_view op_name(OpKind kind) {
  switch (kind) {
    case OpKind::kLeaf: return "leaf";
    case OpKind::kAffine: return "affine";
    case OpKind::kRelu: return "relu";
    case OpKind::kTanh: return "tanh";
    case OpKind::kSigmoid: return "sigmoid";
    case OpKind::kSoftmax: return "softmax";
    case OpKind::kAdd: return "add";
    case OpKind::kSub: return "sub";
    case OpKind::kMul: return "mul";
    case OpKind::kScale: return "scale";
    case OpKind::kConcat: return "concat";
    case OpKind::kSlice: return "slice";
    case OpKind::kReshape: return "reshape";
    case OpKind::kSum: return "sum";
    case OpKind::kMean: return "mean";
    case OpKind::kCrossEntropy: return "cross_entropy";
  }
  return "?";
}

Tape::Tape() : id_(next_tape_id.fetch_add(1)) {}

Var Tape::leaf(Tensor t) {
  Node n;
  n.requires_grad = t.requires_grad;
  n.owned = std::move(t);
  nodes_.push_back(std::move(n));
  return {id_, nodes_.size() - 1};
}

Var Tape::parameter(const Tensor& t, bool requires_grad) {
  Node n;
  n.ref = &t;
  n.requires_grad = requires_grad;
  nodes_.push_back(std::move(n));
  return {id_, nodes_.size() - 1};
}

void Tape::check(Var v) const {
  if (!owns(v)) throw Error("tape: variable does not belong to this tape");
}

const Tensor& Tape::value(Var v) const {
  check(v);
  return nodes_[v.index].value();
}

bool Tape::requires_grad(Var v) const {
  check(v);
  return nodes_[v.index].requires_grad;
}

Var Tape::apply(OpKind kind, std::span<const Var> inputs, const OpAttrs& attrs) {
  std::vector<const Tensor*> in;
  in.reserve(inputs.size());
  Node n;
  n.kind = kind;
  n.attrs = attrs;
  for (Var v : inputs) {
    check(v);
    in.push_back(&nodes_[v.index].value());
    n.inputs.push_back(v.index);
    // cross-entropy targets are never differentiated
    const bool is_target = kind == OpKind::kCrossEntropy && n.inputs.size() == 2;
    if (!is_target) n.requires_grad = n.requires_grad || nodes_[v.index].requires_grad;
  }
  n.owned = forward(kind, in, attrs);
  if (!n.owned.all_finite()) {
    throw NumericalError(std::string(op_name(kind)) + ": non-finite output for inputs " + shapes_of(in));
  }
  nodes_.push_back(std::move(n));
  return {id_, nodes_.size() - 1};
}

bool Gradients::contains(Var v) const {
  return v.tape_id == tape_id_ && v.index < present_.size() && present_[v.index];
}

const Tensor& Gradients::at(Var v) const {
  if (!contains(v)) throw Error("gradients: no gradient recorded for this variable");
  return by_index_[v.index];
}

std::size_t Gradients::size() const {
  return static_cast<std::size_t>(std::count(present_.begin(), present_.end(), true));
}

Gradients backward(const Tape& tape, Var loss) {
  if (!tape.owns(loss)) throw Error("backward: loss is not recorded on this tape");
  const auto& nodes = tape.nodes_;
  if (nodes[loss.index].value().size() != 1) {
    throw Error("backward: loss must be a scalar, got shape " +
                shape_string(nodes[loss.index].value().shape));
  }

  std::vector<std::vector<double>> grads(loss.index + 1);
  if (nodes[loss.index].requires_grad) grads[loss.index] = {1.0};

  std::vector<const Tensor*> in;
  std::vector<std::vector<double>*> gin;
  for (std::size_t i = loss.index + 1; i-- > 0;) {
    const auto& node = nodes[i];
    if (node.kind == OpKind::kLeaf || grads[i].empty()) continue;
    in.clear();
    gin.clear();
    for (std::size_t k = 0; k < node.inputs.size(); ++k) {
      const std::size_t j = node.inputs[k];
      in.push_back(&nodes[j].value());
      const bool is_target = node.kind == OpKind::kCrossEntropy && k == 1;
      if (nodes[j].requires_grad && !is_target) {
        if (grads[j].empty()) grads[j].assign(nodes[j].value().size(), 0.0);
        gin.push_back(&grads[j]);
      } else {
        gin.push_back(nullptr);
      }
    }
    backward_node(node.kind, in, node.value(), node.attrs, grads[i], gin);
    // interior gradients are no longer needed once propagated
    grads[i].clear();
    grads[i].shrink_to_fit();
  }

  Gradients out;
  out.tape_id_ = tape.id_;
  out.by_index_.resize(nodes.size());
  out.present_.assign(nodes.size(), false);
  for (std::size_t i = 0; i <= loss.index; ++i) {
    const auto& node = nodes[i];
    if (node.kind != OpKind::kLeaf || !node.requires_grad) continue;
    const Tensor& v = node.value();
    std::vector<double> g = grads[i].empty() ? std::vector<double>(v.size(), 0.0) : std::move(grads[i]);
    out.by_index_[i] = Tensor(v.shape, std::move(g));
    out.present_[i] = true;
  }
  return out;
}

Var affine(Tape& t, Var w, Var b, Var x) { return t.apply(OpKind::kAffine, {w, b, x}); }
Var relu(Tape& t, Var x) { return t.apply(OpKind::kRelu, {x}); }
Var tanh(Tape& t, Var x) { return t.apply(OpKind::kTanh, {x}); }
Var sigmoid(Tape& t, Var x) { return t.apply(OpKind::kSigmoid, {x}); }
Var softmax(Tape& t, Var x) { return t.apply(OpKind::kSoftmax, {x}); }
Var add(Tape& t, Var a, Var b) { return t.apply(OpKind::kAdd, {a, b}); }
Var sub(Tape& t, Var a, Var b) { return t.apply(OpKind::kSub, {a, b}); }
Var mul(Tape& t, Var a, Var b) { return t.apply(OpKind::kMul, {a, b}); }

Var scale(Tape& t, Var x, double factor) {
  OpAttrs a;
  a.factor = factor;
  return t.apply(OpKind::kScale, {x}, a);
}

Var concat(Tape& t, std::span<const Var> parts) { return t.apply(OpKind::kConcat, parts); }
Var concat(Tape& t, std::initializer_list<Var> parts) { return t.apply(OpKind::kConcat, parts); }

Var slice(Tape& t, Var x, std::size_t begin, std::size_t end) {
  OpAttrs a;
  a.begin = begin;
  a.end = end;
  return t.apply(OpKind::kSlice, {x}, a);
}

Var reshape(Tape& t, Var x, Shape shape) {
  OpAttrs a;
  a.shape = std::move(shape);
  return t.apply(OpKind::kReshape, {x}, a);
}

Var sum(Tape& t, Var x) { return t.apply(OpKind::kSum, {x}); }
Var mean(Tape& t, Var x) { return t.apply(OpKind::kMean, {x}); }
Var cross_entropy(Tape& t, Var probs, Var targets) {
  return t.apply(OpKind::kCrossEntropy, {probs, targets});
}

Var mse(Tape& t, Var a, Var b) {
  const Var d = sub(t, a, b);
  return mean(t, mul(t, d, d));
}

}  // namespace mmvr
