#include "vspair/autodiff.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <unordered_set>

namespace vspair {

namespace {

thread_local bool g_grad_enabled = true;

using detail::Node;
using NodePtr = std::shared_ptr<Node>;

void accumulate(Node* n, const Tensor& g) {
  if (!n->requires_grad) return;
  if (n->grad.size() != n->value.size() || n->grad.rank() != n->value.rank())
    n->grad = Tensor::zeros_like(n->value);
  double* dst = n->grad.data();
  const double* src = g.data();
  for (std::size_t i = 0; i < g.size(); ++i) dst[i] += src[i];
}

// Sum g down to a scalar (for broadcast leaves).
double total(const Tensor& g) {
  double s = 0.0;
  for (std::size_t i = 0; i < g.size(); ++i) s += g[i];
  return s;
}

Var make_node(Tensor value, std::vector<Var> parents, std::function<void(const Tensor&)> bw) {
  auto n = std::make_shared<Node>();
  n->value = std::move(value);
  bool needs = false;
  if (g_grad_enabled)
    for (const Var& p : parents)
      if (p.requires_grad()) needs = true;
  n->requires_grad = needs;
  if (needs) {
    n->parents.reserve(parents.size());
    for (const Var& p : parents) n->parents.push_back(p.handle());
    n->backward = std::move(bw);
  }
  return Var::from_node(std::move(n));
}

}  // namespace

bool grad_enabled() { return g_grad_enabled; }

NoGradGuard::NoGradGuard() : prev_(g_grad_enabled) { g_grad_enabled = false; }
NoGradGuard::~NoGradGuard() { g_grad_enabled = prev_; }

Var Var::param(Tensor value) {
  auto n = std::make_shared<detail::Node>();
  n->value = std::move(value);
  n->requires_grad = true;
  return from_node(std::move(n));
}

Var Var::constant(Tensor value) {
  auto n = std::make_shared<detail::Node>();
  n->value = std::move(value);
  n->requires_grad = false;
  return from_node(std::move(n));
}

Tensor Var::grad() const {
  if (!n_) throw ValueError("grad: undefined variable");
  if (n_->grad.size() == n_->value.size() && n_->grad.rank() == n_->value.rank()) return n_->grad;
  return Tensor::zeros_like(n_->value);
}

void backward(const Var& loss) {
  if (!loss.defined()) throw ValueError("backward: undefined variable");
  if (loss.value().size() != 1)
    throw ShapeError("backward: loss must have one element, got shape " +
                     shape_str(loss.shape()));
  Node* root = loss.node();
  if (!root->requires_grad) return;

  // Reverse postorder over child->parent edges = topological order with every
  // node ahead of its parents, so each backward sees its full gradient.
  std::vector<Node*> order;
  std::unordered_set<Node*> seen;
  struct Frame {
    Node* n;
    std::size_t next = 0;
  };
  std::vector<Frame> stack{{root, 0}};
  seen.insert(root);
  while (!stack.empty()) {
    Frame& f = stack.back();
    if (f.next < f.n->parents.size()) {
      Node* p = f.n->parents[f.next++].get();
      if (p->requires_grad && seen.insert(p).second) stack.push_back({p, 0});
    } else {
      order.push_back(f.n);
      stack.pop_back();
    }
  }

  accumulate(root, Tensor::full_like(loss.value(), 1.0));
  for (auto it = order.rbegin(); it != order.rend(); ++it) {
    Node* n = *it;
    if (n->backward && n->grad.size() == n->value.size()) n->backward(n->grad);
  }
}

// ---------------------------------------------------------------- elementwise

namespace {

enum class Pair { kSame, kScalarRight, kScalarLeft };

Pair binary_mode(const Var& a, const Var& b, const char* who) {
  if (a.value().same_shape(b.value())) return Pair::kSame;
  if (b.value().size() == 1 && b.value().rank() == 0) return Pair::kScalarRight;
  if (a.value().size() == 1 && a.value().rank() == 0) return Pair::kScalarLeft;
  throw ShapeError(std::string(who) + ": shapes " + shape_str(a.shape()) + " and " +
                   shape_str(b.shape()) + " do not match (only scalar broadcast is supported)");
}

template <class Fwd, class Bwd>
Var binary_op(const char* who, const Var& a, const Var& b, Fwd fwd, Bwd bwd) {
  Pair mode = binary_mode(a, b, who);
  const Tensor& av = a.value();
  const Tensor& bv = b.value();
  const Tensor& big = (mode == Pair::kScalarLeft) ? bv : av;
  Tensor out = Tensor::zeros_like(big);
  for (std::size_t i = 0; i < out.size(); ++i) {
    double x = (mode == Pair::kScalarLeft) ? av[0] : av[i];
    double y = (mode == Pair::kScalarRight) ? bv[0] : bv[i];
    out[i] = fwd(x, y);
  }
  auto an = a.node();
  auto bn = b.node();
  return make_node(std::move(out), {a, b}, [an, bn, mode, bwd](const Tensor& g) {
    const Tensor& av = an->value;
    const Tensor& bv = bn->value;
    if (an->requires_grad) {
      Tensor ga = Tensor::zeros_like(av);
      for (std::size_t i = 0; i < g.size(); ++i) {
        double x = (mode == Pair::kScalarLeft) ? av[0] : av[i];
        double y = (mode == Pair::kScalarRight) ? bv[0] : bv[i];
        double d = bwd(x, y, true) * g[i];
        if (mode == Pair::kScalarLeft)
          ga[0] += d;
        else
          ga[i] += d;
      }
      accumulate(an, ga);
    }
    if (bn->requires_grad) {
      Tensor gb = Tensor::zeros_like(bv);
      for (std::size_t i = 0; i < g.size(); ++i) {
        double x = (mode == Pair::kScalarLeft) ? av[0] : av[i];
        double y = (mode == Pair::kScalarRight) ? bv[0] : bv[i];
        double d = bwd(x, y, false) * g[i];
        if (mode == Pair::kScalarRight)
          gb[0] += d;
        else
          gb[i] += d;
      }
      accumulate(bn, gb);
    }
  });
}

template <class Fwd, class Bwd>
Var unary_op(const Var& a, Fwd fwd, Bwd bwd) {
  const Tensor& av = a.value();
  Tensor out = Tensor::zeros_like(av);
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = fwd(av[i]);
  auto an = a.node();
  Tensor saved = out;  // many activations differentiate via their output
  return make_node(std::move(out), {a}, [an, bwd, saved](const Tensor& g) {
    Tensor ga = Tensor::zeros_like(an->value);
    for (std::size_t i = 0; i < g.size(); ++i) ga[i] = bwd(an->value[i], saved[i]) * g[i];
    accumulate(an, ga);
  });
}

double sigmoid_scalar(double x) {
  return x >= 0.0 ? 1.0 / (1.0 + std::exp(-x)) : std::exp(x) / (1.0 + std::exp(x));
}

double softplus_scalar(double x) {
  return x > 0.0 ? x + std::log1p(std::exp(-x)) : std::log1p(std::exp(x));
}

}  // namespace

Var add(const Var& a, const Var& b) {
  return binary_op("add", a, b, [](double x, double y) { return x + y; },
                   [](double, double, bool) { return 1.0; });
}

Var sub(const Var& a, const Var& b) {
  return binary_op("sub", a, b, [](double x, double y) { return x - y; },
                   [](double, double, bool left) { return left ? 1.0 : -1.0; });
}

Var mul(const Var& a, const Var& b) {
  return binary_op("mul", a, b, [](double x, double y) { return x * y; },
                   [](double x, double y, bool left) { return left ? y : x; });
}

Var div(const Var& a, const Var& b) {
  return binary_op("div", a, b, [](double x, double y) { return x / y; },
                   [](double x, double y, bool left) { return left ? 1.0 / y : -x / (y * y); });
}

Var operator+(const Var& a, const Var& b) { return add(a, b); }
Var operator-(const Var& a, const Var& b) { return sub(a, b); }
Var operator*(const Var& a, const Var& b) { return mul(a, b); }
Var operator/(const Var& a, const Var& b) { return div(a, b); }
Var operator+(const Var& a, double b) { return add(a, Var::constant(Tensor::scalar(b))); }
Var operator-(const Var& a, double b) { return sub(a, Var::constant(Tensor::scalar(b))); }
Var operator*(const Var& a, double b) { return mul(a, Var::constant(Tensor::scalar(b))); }
Var operator/(const Var& a, double b) { return div(a, Var::constant(Tensor::scalar(b))); }
Var operator+(double a, const Var& b) { return add(Var::constant(Tensor::scalar(a)), b); }
Var operator-(double a, const Var& b) { return sub(Var::constant(Tensor::scalar(a)), b); }
Var operator*(double a, const Var& b) { return mul(Var::constant(Tensor::scalar(a)), b); }
Var operator-(const Var& a) { return sub(Var::constant(Tensor::scalar(0.0)), a); }

Var exp(const Var& a) {
  return unary_op(a, [](double x) { return std::exp(x); },
                  [](double, double y) { return y; });
}

Var log(const Var& a) {
  for (std::size_t i = 0; i < a.value().size(); ++i)
    if (!(a.value()[i] > 0.0))
      throw ValueError("log: non-positive input " + std::to_string(a.value()[i]));
  return unary_op(a, [](double x) { return std::log(x); },
                  [](double x, double) { return 1.0 / x; });
}

Var log_clamped(const Var& a, double floor) {
  return unary_op(a,
                  [floor](double x) { return std::log(x < floor ? floor : x); },
                  [floor](double x, double) { return x < floor ? 0.0 : 1.0 / x; });
}

Var sigmoid(const Var& a) {
  return unary_op(a, [](double x) { return sigmoid_scalar(x); },
                  [](double, double s) { return s * (1.0 - s); });
}

Var silu(const Var& a) {
  return unary_op(a, [](double x) { return x * sigmoid_scalar(x); },
                  [](double x, double) {
                    double s = sigmoid_scalar(x);
                    return s * (1.0 + x * (1.0 - s));
                  });
}

Var relu(const Var& a) {
  return unary_op(a, [](double x) { return x > 0.0 ? x : 0.0; },
                  [](double x, double) { return x > 0.0 ? 1.0 : 0.0; });
}

Var softplus(const Var& a) {
  return unary_op(a, [](double x) { return softplus_scalar(x); },
                  [](double x, double) { return sigmoid_scalar(x); });
}

Var square(const Var& a) {
  return unary_op(a, [](double x) { return x * x; },
                  [](double x, double) { return 2.0 * x; });
}

Var elementwise(EwOp op, const Var& a) {
  switch (op) {
    case EwOp::kExp: return exp(a);
    case EwOp::kLog: return log(a);
    case EwOp::kSigmoid: return sigmoid(a);
    case EwOp::kSilu: return silu(a);
    case EwOp::kRelu: return relu(a);
    case EwOp::kSoftplus: return softplus(a);
    case EwOp::kSquare: return square(a);
    default: throw ValueError("elementwise: op requires two operands");
  }
}

Var elementwise(EwOp op, const Var& a, const Var& b) {
  switch (op) {
    case EwOp::kAdd: return add(a, b);
    case EwOp::kSub: return sub(a, b);
    case EwOp::kMul: return mul(a, b);
    case EwOp::kDiv: return div(a, b);
    default: throw ValueError("elementwise: op takes one operand");
  }
}

// ------------------------------------------------------- matrix / structural

Var matmul(const Var& a, const Var& b) {
  Tensor out = matmul_nn(a.value(), b.value());
  auto an = a.node();
  auto bn = b.node();
  return make_node(std::move(out), {a, b}, [an, bn](const Tensor& g) {
    if (an->requires_grad) accumulate(an, matmul_nt(g, bn->value));   // g * b^T
    if (bn->requires_grad) accumulate(bn, matmul_tn(an->value, g));   // a^T * g
  });
}

Var matmul_nt(const Var& a, const Var& b) {
  Tensor out = matmul_nt(a.value(), b.value());
  auto an = a.node();
  auto bn = b.node();
  return make_node(std::move(out), {a, b}, [an, bn](const Tensor& g) {
    if (an->requires_grad) accumulate(an, matmul_nn(g, bn->value));   // g * b
    if (bn->requires_grad) accumulate(bn, matmul_tn(g, an->value));   // g^T * a
  });
}

Var add_rowvec(const Var& m, const Var& v) {
  const Tensor& mv = m.value();
  const Tensor& vv = v.value();
  if (mv.rank() != 2 || vv.rank() != 1 || mv.dim(1) != vv.dim(0))
    throw ShapeError("add_rowvec: shapes " + shape_str(mv.shape()) + " and " +
                     shape_str(vv.shape()) + " do not align");
  Tensor out = mv;
  std::size_t rows = mv.dim(0), cols = mv.dim(1);
  for (std::size_t r = 0; r < rows; ++r)
    for (std::size_t c = 0; c < cols; ++c) out[r * cols + c] += vv[c];
  auto mn = m.node();
  auto vn = v.node();
  return make_node(std::move(out), {m, v}, [mn, vn, rows, cols](const Tensor& g) {
    if (mn->requires_grad) accumulate(mn, g);
    if (vn->requires_grad) {
      Tensor gv{Shape{cols}};
      for (std::size_t r = 0; r < rows; ++r)
        for (std::size_t c = 0; c < cols; ++c) gv[c] += g[r * cols + c];
      accumulate(vn, gv);
    }
  });
}

Var concat_cols(const Var& a, const Var& b) {
  const Tensor& av = a.value();
  const Tensor& bv = b.value();
  if (av.rank() != 2 || bv.rank() != 2 || av.dim(0) != bv.dim(0))
    throw ShapeError("concat_cols: shapes " + shape_str(av.shape()) + " and " +
                     shape_str(bv.shape()) + " do not align");
  std::size_t rows = av.dim(0), ca = av.dim(1), cb = bv.dim(1);
  Tensor out{Shape{rows, ca + cb}};
  for (std::size_t r = 0; r < rows; ++r) {
    for (std::size_t c = 0; c < ca; ++c) out[r * (ca + cb) + c] = av[r * ca + c];
    for (std::size_t c = 0; c < cb; ++c) out[r * (ca + cb) + ca + c] = bv[r * cb + c];
  }
  auto an = a.node();
  auto bn = b.node();
  return make_node(std::move(out), {a, b}, [an, bn, rows, ca, cb](const Tensor& g) {
    if (an->requires_grad) {
      Tensor ga{Shape{rows, ca}};
      for (std::size_t r = 0; r < rows; ++r)
        for (std::size_t c = 0; c < ca; ++c) ga[r * ca + c] = g[r * (ca + cb) + c];
      accumulate(an, ga);
    }
    if (bn->requires_grad) {
      Tensor gb{Shape{rows, cb}};
      for (std::size_t r = 0; r < rows; ++r)
        for (std::size_t c = 0; c < cb; ++c) gb[r * cb + c] = g[r * (ca + cb) + ca + c];
      accumulate(bn, gb);
    }
  });
}

Var tile_rows(const Var& row, std::size_t n) {
  const Tensor& rv = row.value();
  if (rv.rank() != 2 || rv.dim(0) != 1)
    throw ShapeError("tile_rows: expected a 1 x d row, got shape " + shape_str(rv.shape()));
  if (n == 0) throw ShapeError("tile_rows: zero rows requested");
  std::size_t cols = rv.dim(1);
  Tensor out{Shape{n, cols}};
  for (std::size_t r = 0; r < n; ++r)
    for (std::size_t c = 0; c < cols; ++c) out[r * cols + c] = rv[c];
  auto rn = row.node();
  return make_node(std::move(out), {row}, [rn, n, cols](const Tensor& g) {
    Tensor gr{Shape{1, cols}};
    for (std::size_t r = 0; r < n; ++r)
      for (std::size_t c = 0; c < cols; ++c) gr[c] += g[r * cols + c];
    accumulate(rn, gr);
  });
}

// ------------------------------------------------------------------ reductions

Var sum(const Var& a) {
  double s = total(a.value());
  auto an = a.node();
  return make_node(Tensor::scalar(s), {a}, [an](const Tensor& g) {
    accumulate(an, Tensor::full_like(an->value, g[0]));
  });
}

Var mean(const Var& a) {
  if (a.value().size() == 0) throw ShapeError("mean: empty tensor");
  double inv = 1.0 / static_cast<double>(a.value().size());
  double s = total(a.value()) * inv;
  auto an = a.node();
  return make_node(Tensor::scalar(s), {a}, [an, inv](const Tensor& g) {
    accumulate(an, Tensor::full_like(an->value, g[0] * inv));
  });
}

Var reduce_max(const Var& a) {
  if (a.value().size() == 0) throw ShapeError("reduce_max: empty tensor");
  double m = a.value()[0];
  for (std::size_t i = 1; i < a.value().size(); ++i) m = std::max(m, a.value()[i]);
  return Var::constant(Tensor::scalar(m));
}

namespace {

void check_axis(const Tensor& t, std::size_t axis, const char* who) {
  if (t.rank() != 2)
    throw ShapeError(std::string(who) + ": axis reductions expect rank-2, got shape " +
                     shape_str(t.shape()));
  if (axis > 1) throw ShapeError(std::string(who) + ": axis " + std::to_string(axis) +
                                 " out of range for rank-2");
}

}  // namespace

Var sum(const Var& a, std::size_t axis) {
  check_axis(a.value(), axis, "sum");
  std::size_t rows = a.value().dim(0), cols = a.value().dim(1);
  std::size_t keep = axis == 0 ? cols : rows;
  Tensor out{Shape{keep}};
  for (std::size_t r = 0; r < rows; ++r)
    for (std::size_t c = 0; c < cols; ++c) out[axis == 0 ? c : r] += a.value()[r * cols + c];
  auto an = a.node();
  return make_node(std::move(out), {a}, [an, axis, rows, cols](const Tensor& g) {
    Tensor ga{Shape{rows, cols}};
    for (std::size_t r = 0; r < rows; ++r)
      for (std::size_t c = 0; c < cols; ++c) ga[r * cols + c] = g[axis == 0 ? c : r];
    accumulate(an, ga);
  });
}

Var mean(const Var& a, std::size_t axis) {
  check_axis(a.value(), axis, "mean");
  std::size_t n = axis == 0 ? a.value().dim(0) : a.value().dim(1);
  if (n == 0) throw ShapeError("mean: empty axis");
  return sum(a, axis) * (1.0 / static_cast<double>(n));
}

Var reduce_max(const Var& a, std::size_t axis) {
  check_axis(a.value(), axis, "reduce_max");
  std::size_t rows = a.value().dim(0), cols = a.value().dim(1);
  if (rows == 0 || cols == 0) throw ShapeError("reduce_max: empty tensor");
  std::size_t keep = axis == 0 ? cols : rows;
  Tensor out{Shape{keep}, -std::numeric_limits<double>::infinity()};
  for (std::size_t r = 0; r < rows; ++r)
    for (std::size_t c = 0; c < cols; ++c) {
      double& slot = out[axis == 0 ? c : r];
      slot = std::max(slot, a.value()[r * cols + c]);
    }
  return Var::constant(std::move(out));
}

Var reduce(ReduceOp op, const Var& a) {
  switch (op) {
    case ReduceOp::kSum: return sum(a);
    case ReduceOp::kMean: return mean(a);
    case ReduceOp::kMax: return reduce_max(a);
  }
  throw ValueError("reduce: unknown op");
}

Var reduce(ReduceOp op, const Var& a, std::size_t axis) {
  switch (op) {
    case ReduceOp::kSum: return sum(a, axis);
    case ReduceOp::kMean: return mean(a, axis);
    case ReduceOp::kMax: return reduce_max(a, axis);
  }
  throw ValueError("reduce: unknown op");
}

// ------------------------------------------------------------ gradient surgery

Var custom_gradient(const Tensor& forward_value, const Var& surrogate) {
  if (!forward_value.same_shape(surrogate.value()))
    throw ShapeError("custom_gradient: forward shape " + shape_str(forward_value.shape()) +
                     " does not match surrogate shape " + shape_str(surrogate.shape()));
  auto sn = surrogate.node();
  return make_node(forward_value, {surrogate},
                   [sn](const Tensor& g) { accumulate(sn, g); });
}

Var gate_apply(const Var& mask, const Var& slab) {
  const Tensor& mv = mask.value();
  const Tensor& sv = slab.value();
  if (!mv.same_shape(sv))
    throw ShapeError("gate_apply: shapes " + shape_str(mv.shape()) + " and " +
                     shape_str(sv.shape()) + " do not match");
  Tensor out = Tensor::zeros_like(sv);
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = mv[i] == 0.0 ? 0.0 : mv[i] * sv[i];
  auto mn = mask.node();
  auto sn = slab.node();
  return make_node(std::move(out), {mask, slab}, [mn, sn](const Tensor& g) {
    if (mn->requires_grad) {
      Tensor gm = Tensor::zeros_like(mn->value);
      for (std::size_t i = 0; i < gm.size(); ++i) gm[i] = sn->value[i] * g[i];
      accumulate(mn, gm);
    }
    if (sn->requires_grad) {
      Tensor gs = Tensor::zeros_like(sn->value);
      for (std::size_t i = 0; i < gs.size(); ++i) gs[i] = mn->value[i] * g[i];
      accumulate(sn, gs);
    }
  });
}

Var detach(const Var& a) { return Var::constant(a.value()); }

// ---------------------------------------------------------------- grad_check

namespace {

void check_eps(double eps) {
  if (!(eps >= 1e-7 && eps <= 1e-3))
    throw ValueError("grad_check: eps " + std::to_string(eps) + " outside [1e-7, 1e-3]");
}

double rel_err(double analytic, double numeric) {
  return std::abs(analytic - numeric) / std::max(1.0, std::abs(analytic));
}

}  // namespace

double grad_check(const std::function<Var(const Var&)>& f, const Tensor& x, double eps) {
  check_eps(eps);
  Var leaf = Var::param(x);
  std::vector<Var> params{leaf};
  return grad_check([&]() { return f(leaf); }, params, eps);
}

double grad_check(const std::function<Var()>& make_loss, std::span<const Var> params,
                  double eps) {
  check_eps(eps);
  Var loss = make_loss();
  if (loss.value().size() != 1)
    throw ShapeError("grad_check: f must be scalar-valued, got shape " +
                     shape_str(loss.shape()));
  for (const Var& p : params) Var(p).zero_grad();  // handles share the node
  backward(loss);
  std::vector<Tensor> analytic;
  analytic.reserve(params.size());
  for (const Var& p : params) analytic.push_back(p.grad());

  double worst = 0.0;
  for (std::size_t pi = 0; pi < params.size(); ++pi) {
    Var handle = params[pi];
    Tensor& value = handle.mutable_value();
    for (std::size_t i = 0; i < value.size(); ++i) {
      double saved = value[i];
      value[i] = saved + eps;
      double hi = make_loss().value().item();
      value[i] = saved - eps;
      double lo = make_loss().value().item();
      value[i] = saved;
      if (!std::isfinite(hi) || !std::isfinite(lo))
        throw ValueError("grad_check: non-finite probe value near coordinate " +
                         std::to_string(i));
      double numeric = (hi - lo) / (2.0 * eps);
      worst = std::max(worst, rel_err(analytic[pi][i], numeric));
    }
  }
  return worst;
}

}  // namespace vspair
