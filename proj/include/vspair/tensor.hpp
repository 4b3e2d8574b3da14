#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>
#include <vector>

namespace vspair {

// Shape mismatches, bad axes, bad dimensions.
struct ShapeError : std::invalid_argument {
  using std::invalid_argument::invalid_argument;
};

// Domain violations (log of non-positive, degenerate probabilities, ...).
struct ValueError : std::invalid_argument {
  using std::invalid_argument::invalid_argument;
};

using Shape = std::vector<std::size_t>;

std::size_t numel(const Shape& shape);
std::string shape_str(const Shape& shape);

// Dense row-major f64 tensor. Rank 0 is a scalar (one element);
// all numerics in this library are double precision end to end.
class Tensor {
 public:
  Tensor() : shape_{0} {}
  explicit Tensor(Shape shape) : shape_(std::move(shape)), data_(numel(shape_), 0.0) {}
  Tensor(Shape shape, double fill) : shape_(std::move(shape)), data_(numel(shape_), fill) {}
  Tensor(Shape shape, std::vector<double> values);

  static Tensor scalar(double v);
  static Tensor zeros_like(const Tensor& t) { return Tensor(t.shape_); }
  static Tensor full_like(const Tensor& t, double v) { return Tensor(t.shape_, v); }

  const Shape& shape() const { return shape_; }
  std::size_t rank() const { return shape_.size(); }
  std::size_t size() const { return data_.size(); }
  std::size_t dim(std::size_t i) const;
  bool same_shape(const Tensor& o) const { return shape_ == o.shape_; }

  double* data() { return data_.data(); }
  const double* data() const { return data_.data(); }
  std::vector<double>& values() { return data_; }
  const std::vector<double>& values() const { return data_; }

  double& operator[](std::size_t i) { return data_[i]; }
  double operator[](std::size_t i) const { return data_[i]; }

  // Rank-2 access.
  double& at(std::size_t r, std::size_t c);
  double at(std::size_t r, std::size_t c) const;

  // The single element of a one-element tensor.
  double item() const;

  bool all_finite() const;

 private:
  Shape shape_;
  std::vector<double> data_;
};

// Matrix product kernels on rank-2 tensors: plain, a * b^T, a^T * b.
Tensor matmul_nn(const Tensor& a, const Tensor& b);
Tensor matmul_nt(const Tensor& a, const Tensor& b);
Tensor matmul_tn(const Tensor& a, const Tensor& b);

}  // namespace vspair
