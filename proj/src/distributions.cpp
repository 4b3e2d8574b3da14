#include "vspair/distributions.hpp"

#include <cmath>

namespace vspair {

namespace {

void require_same_shape(const Var& a, const Var& b, const char* who) {
  if (!a.value().same_shape(b.value()))
    throw ShapeError(std::string(who) + ": shapes " + shape_str(a.shape()) + " and " +
                     shape_str(b.shape()) + " do not match");
}

void require_rho_open(double rho, const char* who) {
  if (!(rho > 0.0 && rho < 1.0))
    throw ValueError(std::string(who) + ": rho = " + std::to_string(rho) +
                     " is degenerate, expected rho in (0, 1)");
}

void require_omega_range(const Tensor& omega, const char* who) {
  for (std::size_t i = 0; i < omega.size(); ++i)
    if (!(omega[i] > 0.0 && omega[i] <= 1.0))
      throw ValueError(std::string(who) + ": omega[" + std::to_string(i) + "] = " +
                       std::to_string(omega[i]) + " outside (0, 1]");
}

}  // namespace

Var gaussian_kl(const DiagGaussianParams& p) {
  require_same_shape(p.mu, p.log_var, "gaussian_kl");
  return 0.5 * sum(exp(p.log_var) + square(p.mu) - 1.0 - p.log_var);
}

Var bernoulli_kl(const Var& omega, const Var& rho) {
  if (rho.value().size() != 1)
    throw ShapeError("bernoulli_kl: rho must be a scalar, got shape " + shape_str(rho.shape()));
  require_rho_open(rho.value()[0], "bernoulli_kl");
  require_omega_range(omega.value(), "bernoulli_kl");
  Var one_m = 1.0 - omega;
  // Floored logs realize 0 * log 0 = 0 at omega = 1 without NaNs.
  Var off = one_m * (log_clamped(one_m) - log(1.0 - rho));
  Var on = omega * (log_clamped(omega) - log(rho));
  return sum(off + on);
}

Var bernoulli_kl(const Var& omega, double rho) {
  return bernoulli_kl(omega, Var::constant(Tensor::scalar(rho)));
}

Var spike_slab_kl(const SpikeSlabParams& p, const SparsityPrior& prior) {
  require_same_shape(p.mu, p.log_var, "spike_slab_kl");
  require_same_shape(p.mu, p.omega, "spike_slab_kl");
  Var slab = 0.5 * sum(p.omega * (exp(p.log_var) + square(p.mu) - 1.0 - p.log_var));
  return slab + bernoulli_kl(p.omega, prior.rho());
}

Var omega_from_logits(const Var& t) { return exp(-relu(-t)); }

Var gaussian_reparam_sample(const DiagGaussianParams& p, Rng& rng) {
  require_same_shape(p.mu, p.log_var, "gaussian_reparam_sample");
  Tensor eps = Tensor::zeros_like(p.mu.value());
  for (std::size_t i = 0; i < eps.size(); ++i) eps[i] = rng.gaussian();
  return p.mu + exp(0.5 * p.log_var) * Var::constant(std::move(eps));
}

Var relaxed_gate(const Tensor& eta, const Var& omega, const GateConfig& cfg) {
  if (!eta.same_shape(omega.value()))
    throw ShapeError("relaxed_gate: eta shape " + shape_str(eta.shape()) +
                     " does not match omega shape " + shape_str(omega.shape()));
  for (std::size_t i = 0; i < eta.size(); ++i)
    if (!(eta[i] >= 0.0 && eta[i] < 1.0))
      throw ValueError("relaxed_gate: eta[" + std::to_string(i) + "] = " +
                       std::to_string(eta[i]) + " outside [0, 1)");
  if (!(cfg.temperature > 0.0))
    throw ValueError("relaxed_gate: temperature must be positive");
  return sigmoid(cfg.temperature * (Var::constant(eta) - 1.0 + omega));
}

std::pair<Var, Tensor> spike_slab_sample(const SpikeSlabParams& p, const GateConfig& cfg,
                                         Rng& rng) {
  require_same_shape(p.mu, p.log_var, "spike_slab_sample");
  require_same_shape(p.mu, p.omega, "spike_slab_sample");
  require_omega_range(p.omega.value(), "spike_slab_sample");

  Tensor eta = Tensor::zeros_like(p.omega.value());
  for (std::size_t i = 0; i < eta.size(); ++i) eta[i] = rng.uniform();
  Var s = relaxed_gate(eta, p.omega, cfg);

  Tensor mask = Tensor::zeros_like(s.value());
  for (std::size_t i = 0; i < mask.size(); ++i)
    mask[i] = s.value()[i] > cfg.threshold ? 1.0 : 0.0;
  Var hard = custom_gradient(mask, s);

  Tensor eps = Tensor::zeros_like(p.mu.value());
  for (std::size_t i = 0; i < eps.size(); ++i) eps[i] = rng.gaussian();
  Var slab = p.mu + exp(0.5 * p.log_var) * Var::constant(std::move(eps));

  // Gradient w.r.t. omega flows through hard's surrogate for every
  // coordinate (straight-through); mu and log_var only through open gates.
  return {gate_apply(hard, slab), mask};
}

Var beta_hyperprior_loss(const SparsityPrior& prior) {
  if (prior.rho_logit.value().size() != 1)
    throw ShapeError("beta_hyperprior_loss: rho_logit must be a scalar, got shape " +
                     shape_str(prior.rho_logit.shape()));
  if (!(prior.alpha0 > 0.0) || !(prior.beta0 > 0.0))
    throw ValueError("beta_hyperprior_loss: alpha0 and beta0 must be positive");
  // -log rho = softplus(-t), -log(1 - rho) = softplus(t) for rho = sigmoid(t).
  return (prior.alpha0 - 1.0) * softplus(-prior.rho_logit) +
         (prior.beta0 - 1.0) * softplus(prior.rho_logit);
}

}  // namespace vspair
