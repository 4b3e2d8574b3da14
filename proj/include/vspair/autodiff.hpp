#pragma once

#include <cstddef>
#include <functional>
#include <memory>
#include <span>
#include <string>
#include <vector>

#include "vspair/tensor.hpp"

namespace vspair {

// When gradients are globally disabled (evaluation, sampling loops), ops emit
// detached constants and no graph is retained.
bool grad_enabled();

struct NoGradGuard {
  NoGradGuard();
  ~NoGradGuard();
  NoGradGuard(const NoGradGuard&) = delete;
  NoGradGuard& operator=(const NoGradGuard&) = delete;

 private:
  bool prev_;
};

namespace detail {
struct Node {
  Tensor value;
  Tensor grad;  // empty until first accumulation
  bool requires_grad = false;
  std::vector<std::shared_ptr<Node>> parents;
  std::function<void(const Tensor& g)> backward;  // adds into parents' grads
};
}  // namespace detail

// Handle into the reverse-mode graph. Ops build nodes dynamically; calling
// backward() on a one-element result accumulates gradients into every
// reachable parameter. Graphs are freed when the last handle drops.
class Var {
 public:
  Var() = default;

  // Trainable leaf; participates in backward().
  static Var param(Tensor value);
  // Non-differentiable leaf (data, noise draws, frozen masks).
  static Var constant(Tensor value);

  bool defined() const { return n_ != nullptr; }
  const Tensor& value() const { return n_->value; }
  Tensor& mutable_value() { return n_->value; }  // optimizer updates in place
  const Shape& shape() const { return n_->value.shape(); }
  std::size_t size() const { return n_->value.size(); }
  bool requires_grad() const { return n_ && n_->requires_grad; }

  // Accumulated gradient; zero tensor if backward never reached this leaf.
  Tensor grad() const;
  void zero_grad() { if (n_) n_->grad = Tensor(); }

  detail::Node* node() const { return n_.get(); }
  std::shared_ptr<detail::Node> handle() const { return n_; }

  static Var from_node(std::shared_ptr<detail::Node> n) {
    Var v;
    v.n_ = std::move(n);
    return v;
  }

 private:
  std::shared_ptr<detail::Node> n_;
};

// Reverse pass from a one-element result; gradients accumulate (+=), so call
// zero_grad on parameters between steps.
void backward(const Var& loss);

// ---- elementwise ops (equal shapes, or scalar broadcast on either side) ----

Var add(const Var& a, const Var& b);
Var sub(const Var& a, const Var& b);
Var mul(const Var& a, const Var& b);
Var div(const Var& a, const Var& b);

Var operator+(const Var& a, const Var& b);
Var operator-(const Var& a, const Var& b);
Var operator*(const Var& a, const Var& b);
Var operator/(const Var& a, const Var& b);
Var operator+(const Var& a, double b);
Var operator-(const Var& a, double b);
Var operator*(const Var& a, double b);
Var operator/(const Var& a, double b);
Var operator+(double a, const Var& b);
Var operator-(double a, const Var& b);
Var operator*(double a, const Var& b);
Var operator-(const Var& a);

Var exp(const Var& a);
Var log(const Var& a);  // rejects non-positive inputs
// log(max(a, floor)); gradient is zero on the clamped set. Keeps entropy-like
// terms finite at the boundary.
Var log_clamped(const Var& a, double floor = 1e-12);
Var sigmoid(const Var& a);
Var silu(const Var& a);
Var relu(const Var& a);
Var softplus(const Var& a);
Var square(const Var& a);

enum class EwOp { kAdd, kSub, kMul, kDiv, kExp, kLog, kSigmoid, kSilu, kRelu, kSoftplus, kSquare };

Var elementwise(EwOp op, const Var& a);
Var elementwise(EwOp op, const Var& a, const Var& b);

// ---- matrix / structural ops ----

Var matmul(const Var& a, const Var& b);
Var matmul_nt(const Var& a, const Var& b);      // a * b^T, the affine-layer workhorse
Var add_rowvec(const Var& m, const Var& v);     // rank-2 plus rank-1 broadcast over rows
Var concat_cols(const Var& a, const Var& b);    // [a | b] on rank-2 operands
Var tile_rows(const Var& row, std::size_t n);   // repeat a 1 x d row n times

// ---- reductions ----

enum class ReduceOp { kSum, kMean, kMax };

Var sum(const Var& a);
Var mean(const Var& a);
Var reduce_max(const Var& a);  // value only, no gradient path
Var sum(const Var& a, std::size_t axis);
Var mean(const Var& a, std::size_t axis);
Var reduce_max(const Var& a, std::size_t axis);
Var reduce(ReduceOp op, const Var& a);
Var reduce(ReduceOp op, const Var& a, std::size_t axis);

// ---- gradient surgery ----

// Forward emits forward_value; backward passes the incoming gradient to
// surrogate unchanged (straight-through). Shapes must agree.
Var custom_gradient(const Tensor& forward_value, const Var& surrogate);

// Elementwise product specialized for 0/1 gates: where mask == 0 the output
// is literal +0.0 (a plain product would leak the other factor's sign bit).
// Backward is the ordinary product rule, so gradient still reaches the mask.
Var gate_apply(const Var& mask, const Var& slab);

// Same value, no gradient path.
Var detach(const Var& a);

// ---- verification ----

// Central-difference check of a scalar-valued f at x. Returns the maximum
// relative error |analytic - numeric| / max(1, |analytic|) over coordinates.
// eps must lie in [1e-7, 1e-3]; non-finite probe values raise ValueError.
// Paths through custom_gradient are excluded by construction: the numeric
// difference sees the hard forward, not the surrogate.
double grad_check(const std::function<Var(const Var&)>& f, const Tensor& x, double eps = 1e-5);

// Multi-parameter variant: make_loss rebuilds the loss from the current
// parameter values (re-seeding any internal noise), params are the leaves to
// probe. Returns max relative error over all coordinates of all params.
double grad_check(const std::function<Var()>& make_loss, std::span<const Var> params,
                  double eps = 1e-5);

}  // namespace vspair
