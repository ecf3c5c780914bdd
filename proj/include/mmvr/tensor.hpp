#pragma once

#include <cstddef>
#include <initializer_list>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

namespace mmvr {

/// Base class for every error raised by the library.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Raised when an operation produces NaN/Inf. The CLI maps this to exit code 2.
class NumericalError : public Error {
 public:
  using Error::Error;
};

using Shape = std::vector<std::size_t>;

std::size_t shape_size(const Shape& shape);
std::string shape_string(const Shape& shape);

/// Dense row-major array of doubles.
///
/// A scalar is a tensor of shape {1}. `requires_grad` only matters when the
/// tensor is placed on a Tape as a leaf.
struct Tensor {
  Shape shape;
  std::vector<double> data;
  bool requires_grad = false;

  Tensor() = default;
  Tensor(Shape s, std::vector<double> d, bool grad = false);

  static Tensor zeros(Shape s, bool grad = false);
  static Tensor filled(Shape s, double value, bool grad = false);
  static Tensor scalar(double value, bool grad = false);
  static Tensor vector(std::vector<double> values, bool grad = false);

  std::size_t size() const { return data.size(); }
  std::size_t rank() const { return shape.size(); }
  /// Size of the last dimension.
  std::size_t cols() const { return shape.empty() ? 1 : shape.back(); }
  /// Product of all dimensions but the last.
  std::size_t rows() const { return cols() == 0 ? 0 : size() / cols(); }

  double item() const;
  double& operator[](std::size_t i) { return data[i]; }
  double operator[](std::size_t i) const { return data[i]; }

  std::span<double> row(std::size_t r) { return {data.data() + r * cols(), cols()}; }
  std::span<const double> row(std::size_t r) const {
    return {data.data() + r * cols(), cols()};
  }

  bool all_finite() const;
  bool same_values(const Tensor& other) const;
};

double dot(std::span<const double> a, std::span<const double> b);
double l2_norm(std::span<const double> v);

}  // namespace mmvr
