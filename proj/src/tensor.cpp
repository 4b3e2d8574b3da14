#include "vspair/tensor.hpp"

#include <Eigen/Dense>

#include <cmath>
#include <sstream>

namespace vspair {

std::size_t numel(const Shape& shape) {
  std::size_t n = 1;
  for (std::size_t d : shape) n *= d;
  return n;
}

std::string shape_str(const Shape& shape) {
  std::ostringstream os;
  os << "(";
  for (std::size_t i = 0; i < shape.size(); ++i) {
    if (i) os << ", ";
    os << shape[i];
  }
  os << ")";
  return os.str();
}

Tensor::Tensor(Shape shape, std::vector<double> values)
    : shape_(std::move(shape)), data_(std::move(values)) {
  if (data_.size() != numel(shape_))
    throw ShapeError("tensor: " + std::to_string(data_.size()) + " values for shape " +
                     shape_str(shape_));
}

Tensor Tensor::scalar(double v) {
  Tensor t{Shape{}};
  t.data_.assign(1, v);
  return t;
}

std::size_t Tensor::dim(std::size_t i) const {
  if (i >= shape_.size())
    throw ShapeError("tensor: axis " + std::to_string(i) + " out of range for shape " +
                     shape_str(shape_));
  return shape_[i];
}

double& Tensor::at(std::size_t r, std::size_t c) {
  if (rank() != 2) throw ShapeError("tensor: 2-d access on shape " + shape_str(shape_));
  if (r >= shape_[0] || c >= shape_[1])
    throw ShapeError("tensor: index (" + std::to_string(r) + ", " + std::to_string(c) +
                     ") out of range for shape " + shape_str(shape_));
  return data_[r * shape_[1] + c];
}

double Tensor::at(std::size_t r, std::size_t c) const {
  return const_cast<Tensor*>(this)->at(r, c);
}

double Tensor::item() const {
  if (data_.size() != 1)
    throw ShapeError("tensor: item() on shape " + shape_str(shape_) + " with " +
                     std::to_string(data_.size()) + " elements");
  return data_[0];
}

bool Tensor::all_finite() const {
  for (double v : data_)
    if (!std::isfinite(v)) return false;
  return true;
}

namespace {

using EigenMap =
    Eigen::Map<const Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>>;
using EigenMapMut =
    Eigen::Map<Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>>;

void require_rank2(const Tensor& t, const char* who) {
  if (t.rank() != 2)
    throw ShapeError(std::string(who) + ": expected rank-2 operand, got shape " +
                     shape_str(t.shape()));
}

}  // namespace

Tensor matmul_nn(const Tensor& a, const Tensor& b) {
  require_rank2(a, "matmul");
  require_rank2(b, "matmul");
  if (a.dim(1) != b.dim(0))
    throw ShapeError("matmul: inner dimensions disagree, " + shape_str(a.shape()) + " vs " +
                     shape_str(b.shape()));
  Tensor out{Shape{a.dim(0), b.dim(1)}};
  EigenMap ma(a.data(), static_cast<Eigen::Index>(a.dim(0)), static_cast<Eigen::Index>(a.dim(1)));
  EigenMap mb(b.data(), static_cast<Eigen::Index>(b.dim(0)), static_cast<Eigen::Index>(b.dim(1)));
  EigenMapMut mo(out.data(), ma.rows(), mb.cols());
  mo.noalias() = ma * mb;
  return out;
}

Tensor matmul_nt(const Tensor& a, const Tensor& b) {
  require_rank2(a, "matmul_nt");
  require_rank2(b, "matmul_nt");
  if (a.dim(1) != b.dim(1))
    throw ShapeError("matmul_nt: inner dimensions disagree, " + shape_str(a.shape()) + " vs " +
                     shape_str(b.shape()));
  Tensor out{Shape{a.dim(0), b.dim(0)}};
  EigenMap ma(a.data(), static_cast<Eigen::Index>(a.dim(0)), static_cast<Eigen::Index>(a.dim(1)));
  EigenMap mb(b.data(), static_cast<Eigen::Index>(b.dim(0)), static_cast<Eigen::Index>(b.dim(1)));
  EigenMapMut mo(out.data(), ma.rows(), mb.rows());
  mo.noalias() = ma * mb.transpose();
  return out;
}

Tensor matmul_tn(const Tensor& a, const Tensor& b) {
  require_rank2(a, "matmul_tn");
  require_rank2(b, "matmul_tn");
  if (a.dim(0) != b.dim(0))
    throw ShapeError("matmul_tn: inner dimensions disagree, " + shape_str(a.shape()) + " vs " +
                     shape_str(b.shape()));
  Tensor out{Shape{a.dim(1), b.dim(1)}};
  EigenMap ma(a.data(), static_cast<Eigen::Index>(a.dim(0)), static_cast<Eigen::Index>(a.dim(1)));
  EigenMap mb(b.data(), static_cast<Eigen::Index>(b.dim(0)), static_cast<Eigen::Index>(b.dim(1)));
  EigenMapMut mo(out.data(), ma.cols(), mb.cols());
  mo.noalias() = ma.transpose() * mb;
  return out;
}

}  // namespace vspair
