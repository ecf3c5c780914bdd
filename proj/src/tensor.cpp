#include "mmvr/tensor.hpp"

#include <cmath>
#include <cstring>
#include <sstream>

namespace mmvr {

std::size_t shape_size(const Shape& shape) {
  std::size_t n = 1;
  for (std::size_t d : shape) n *= d;
  return n;
}

std::string shape_string(const Shape& shape) {
  std::ostringstream os;
  os << '[';
  for (std::size_t i = 0; i < shape.size(); ++i) {
    if (i) os << ',';
    os << shape[i];
  }
  os << ']';
  return os.str();
}

Tensor::Tensor(Shape s, std::vector<double> d, bool grad)
    : shape(std::move(s)), data(std::move(d)), requires_grad(grad) {
  for (std::size_t dim : shape) {
    if (dim == 0) throw Error("tensor: zero-sized dimension in shape " + shape_string(shape));
  }
  if (shape_size(shape) != data.size()) {
    throw Error("tensor: shape " + shape_string(shape) + " does not match " +
                std::to_string(data.size()) + " values");
  }
}

Tensor Tensor::zeros(Shape s, bool grad) { return filled(std::move(s), 0.0, grad); }

Tensor Tensor::filled(Shape s, double value, bool grad) {
  const std::size_t n = shape_size(s);
  return Tensor(std::move(s), std::vector<double>(n, value), grad);
}

Tensor Tensor::scalar(double value, bool grad) { return Tensor({1}, {value}, grad); }

Tensor Tensor::vector(std::vector<double> values, bool grad) {
  const std::size_t n = values.size();
  return Tensor({n}, std::move(values), grad);
}

double Tensor::item() const {
  if (data.size() != 1) throw Error("tensor: item() on non-scalar of shape " + shape_string(shape));
  return data[0];
}

bool Tensor::all_finite() const {
  for (double v : data) {
    if (!std::isfinite(v)) return false;
  }
  return true;
}

bool Tensor::same_values(const Tensor& other) const {
  return shape == other.shape && data.size() == other.data.size() &&
         (data.empty() || std::memcmp(data.data(), other.data.data(), data.size() * sizeof(double)) == 0);
}

double dot(std::span<const double> a, std::span<const double> b) {
  if (a.size() != b.size()) throw Error("dot: length mismatch");
  double s = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) s += a[i] * b[i];
  return s;
}

double l2_norm(std::span<const double> v) { return std::sqrt(dot(v, v)); }

}  // namespace mmvr
