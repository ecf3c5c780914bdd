#pragma once

// Reverse-mode automatic differentiation over dense tensors.
//
// A Tape records every operation executed through it. Values live on the
// tape and are addressed by `Var` handles. Leaves either own their tensor or
// reference one owned elsewhere (model parameters); referenced tensors must
// outlive the tape and must not be mutated while it is alive.

#include <cstdint>
#include <initializer_list>
#include <span>
#include <string_view>
#include <vector>

#include "mmvr/tensor.hpp"

namespace mmvr {

enum class OpKind {
  kLeaf,
  kAffine,        // (W[o,i], b[o], x[i] | x[n,i]) -> [o] | [n,o]
  kRelu,
  kTanh,
  kSigmoid,
  kSoftmax,       // over the last dimension
  kAdd,           // same shape
  kSub,           // same shape
  kMul,           // element-wise, same shape
  kScale,         // x * attrs.factor
  kConcat,        // along the last dimension; leading dims must agree
  kSlice,         // [attrs.begin, attrs.end) along the last dimension
  kReshape,       // to attrs.shape, same element count
  kSum,           // -> scalar
  kMean,          // -> scalar
  kCrossEntropy,  // (probs[V] | probs[n,V], targets[n]) -> scalar mean over rows;
                  // a negative target id marks a row as ignored
};

std::string_view op_name(OpKind kind);

struct OpAttrs {
  std::size_t begin = 0;
  std::size_t end = 0;
  double factor = 1.0;
  Shape shape;
};

class Tape;

/// Handle to a value recorded on a Tape.
struct Var {
  std::uint64_t tape_id = 0;
  std::size_t index = 0;
};

class Gradients;

class Tape {
 public:
  Tape();
  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;
  Tape(Tape&&) = default;
  Tape& operator=(Tape&&) = default;

  /// Owned leaf; differentiable when `t.requires_grad`.
  Var leaf(Tensor t);
  /// Leaf referencing an external tensor (no copy).
  Var parameter(const Tensor& t, bool requires_grad);
  Var constant(const Tensor& t) { return parameter(t, false); }

  /// Executes `kind` on `inputs` and records it. Throws Error on shape
  /// mismatch and NumericalError if the result is not finite.
  Var apply(OpKind kind, std::span<const Var> inputs, const OpAttrs& attrs = {});
  Var apply(OpKind kind, std::initializer_list<Var> inputs, const OpAttrs& attrs = {}) {
    return apply(kind, std::span<const Var>(inputs.begin(), inputs.size()), attrs);
  }

  const Tensor& value(Var v) const;
  bool requires_grad(Var v) const;
  bool owns(Var v) const { return v.tape_id == id_ && v.index < nodes_.size(); }
  std::size_t size() const { return nodes_.size(); }

 private:
  friend Gradients backward(const Tape& tape, Var loss);

  struct Node {
    OpKind kind = OpKind::kLeaf;
    std::vector<std::size_t> inputs;
    OpAttrs attrs;
    Tensor owned;
    const Tensor* ref = nullptr;
    bool requires_grad = false;
    const Tensor& value() const { return ref ? *ref : owned; }
  };

  void check(Var v) const;

  std::uint64_t id_;
  std::vector<Node> nodes_;
};

/// Gradients of a scalar loss with respect to the differentiable leaves.
class Gradients {
 public:
  bool contains(Var v) const;
  const Tensor& at(Var v) const;
  std::size_t size() const;

 private:
  friend Gradients backward(const Tape& tape, Var loss);
  std::uint64_t tape_id_ = 0;
  std::vector<Tensor> by_index_;
  std::vector<bool> present_;
};

/// Reverse pass from `loss` (a scalar on `tape`). Every node is visited once,
/// in reverse execution order; contributions from multiple uses accumulate.
Gradients backward(const Tape& tape, Var loss);

// Convenience wrappers over Tape::apply.
Var affine(Tape& t, Var w, Var b, Var x);
Var relu(Tape& t, Var x);
Var tanh(Tape& t, Var x);
Var sigmoid(Tape& t, Var x);
Var softmax(Tape& t, Var x);
Var add(Tape& t, Var a, Var b);
Var sub(Tape& t, Var a, Var b);
Var mul(Tape& t, Var a, Var b);
Var scale(Tape& t, Var x, double factor);
Var concat(Tape& t, std::span<const Var> parts);
Var concat(Tape& t, std::initializer_list<Var> parts);
Var slice(Tape& t, Var x, std::size_t begin, std::size_t end);
Var reshape(Tape& t, Var x, Shape shape);
Var sum(Tape& t, Var x);
Var mean(Tape& t, Var x);
Var cross_entropy(Tape& t, Var probs, Var targets);
/// mean((a - b)^2)
Var mse(Tape& t, Var a, Var b);

}  // namespace mmvr
