#pragma once

#include <utility>

#include "vspair/autodiff.hpp"
#include "vspair/rng.hpp"

namespace vspair {

// Diagonal Gaussian posterior q(z) = N(mu, diag(exp(log_var))).
struct DiagGaussianParams {
  Var mu;
  Var log_var;
};

// Spike-and-slab posterior: each coordinate keeps a slab N(mu_j, sigma_j^2)
// with probability omega_j and is pinned to zero otherwise. omega lives in
// (0, 1], produced from raw logits by omega_from_logits.
struct SpikeSlabParams {
  Var mu;
  Var log_var;
  Var omega;
};

// Learnable global slab probability rho = sigmoid(rho_logit) with a
// Beta(alpha0, beta0) hyperprior.
struct SparsityPrior {
  Var rho_logit;  // rank-0
  double alpha0 = 1.0;
  double beta0 = 127.0;

  Var rho() const { return sigmoid(rho_logit); }
};

// Relaxed Bernoulli gate: s = sigmoid(c * (eta - 1 + omega)), thresholded at
// 0.5 in the forward pass. P(s > 1/2) = omega exactly for every temperature.
struct GateConfig {
  double temperature = 50.0;
  double threshold = 0.5;
};

// KL(q || N(0, I)) = 1/2 * sum(sigma^2 + mu^2 - 1 - log sigma^2), summed over
// every element, so a batch of rows yields the sum of per-row divergences.
Var gaussian_kl(const DiagGaussianParams& p);

// Sum_j [(1 - w_j) log((1 - w_j)/(1 - rho)) + w_j log(w_j / rho)] with the
// 0 * log 0 = 0 convention (log arguments floored at 1e-12). rho must lie
// strictly inside (0, 1); rho may be a learnable rank-0 Var.
Var bernoulli_kl(const Var& omega, const Var& rho);
Var bernoulli_kl(const Var& omega, double rho);

// Spike-and-slab KL against the prior rho * N(0,1) + (1-rho) * delta_0:
// sum_j omega_j/2 * (sigma_j^2 + mu_j^2 - 1 - log sigma_j^2) + bernoulli_kl.
Var spike_slab_kl(const SpikeSlabParams& p, const SparsityPrior& prior);

// Clamped exponential omega = exp(-relu(-t)): maps raw logits into (0, 1],
// identically 1 for t >= 0.
Var omega_from_logits(const Var& t);

// Reparameterized draw z = mu + exp(log_var / 2) * eps, eps ~ N(0, I).
// Differentiable in mu and log_var; the noise is a constant leaf.
Var gaussian_reparam_sample(const DiagGaussianParams& p, Rng& rng);

// The relaxed gate value s for given uniform noise eta (same shape as omega).
Var relaxed_gate(const Tensor& eta, const Var& omega, const GateConfig& cfg);

// One spike-and-slab draw. Draws eta (one uniform per coordinate, first) and
// eps (one gaussian per coordinate, second), thresholds the relaxed gate into
// a hard 0/1 mask, and applies it straight-through: the forward value is
// mask * (mu + sigma * eps) with exact 0.0 at closed gates, while gradients
// flow to omega through the relaxed gate as if the threshold were absent.
// Returns the sample and the hard mask.
std::pair<Var, Tensor> spike_slab_sample(const SpikeSlabParams& p, const GateConfig& cfg,
                                         Rng& rng);

// Negative log-density of Beta(alpha0, beta0) at rho, up to the normalizing
// constant: -(alpha0 - 1) log rho - (beta0 - 1) log(1 - rho). Evaluated in
// logit space as (alpha0-1) softplus(-t) + (beta0-1) softplus(t), which is
// exact and stable for any t.
Var beta_hyperprior_loss(const SparsityPrior& prior);

}  // namespace vspair
