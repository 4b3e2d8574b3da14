#pragma once

#include <Eigen/Dense>

#include <cstdint>
#include <string>
#include <vector>

#include "vspair/rng.hpp"

namespace vspair {

// Raised when a closed-form-vs-Monte-Carlo comparison falls outside its
// stated tolerance.
struct VerificationError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// Linear-Gaussian inverse problem y = A x + eps with x ~ N(m0, Sigma0),
// eps ~ N(0, Gamma), and an affine latent read-out Z = B x + c + xi with
// xi ~ N(0, Sigma_Z). Covariances must be symmetric positive definite.
struct LinearGaussianProblem {
  Eigen::MatrixXd A;        // dim_y x dim_x
  Eigen::MatrixXd gamma;    // dim_y x dim_y
  Eigen::VectorXd m0;       // dim_x
  Eigen::MatrixXd sigma0;   // dim_x x dim_x
  Eigen::MatrixXd B;        // dim_z x dim_x
  Eigen::VectorXd c;        // dim_z
  Eigen::MatrixXd sigma_z;  // dim_z x dim_z

  std::size_t dim_x() const { return static_cast<std::size_t>(A.cols()); }
  std::size_t dim_y() const { return static_cast<std::size_t>(A.rows()); }
  std::size_t dim_z() const { return static_cast<std::size_t>(B.rows()); }

  // Dimension agreement plus SPD checks (symmetric within 1e-12, Cholesky
  // succeeds) on every covariance.
  void validate() const;
};

struct GaussianMoments {
  Eigen::VectorXd mean;
  Eigen::MatrixXd cov;
};

// Exact posterior of x given y: cov = (Sigma0^-1 + A' Gamma^-1 A)^-1,
// mean = cov (Sigma0^-1 m0 + A' Gamma^-1 y).
GaussianMoments posterior_x_given_y(const LinearGaussianProblem& p, const Eigen::VectorXd& y);

// Push-forward of the posterior through the affine read-out:
// mean = B E[x|y] + c, cov = Sigma_Z + B Cov(x|y) B'.
GaussianMoments theorem1_closed_form(const LinearGaussianProblem& p, const Eigen::VectorXd& y);

// N generative draws of Z | y (sample x from the posterior, push through the
// read-out, add xi); returns the sample mean and unbiased covariance.
GaussianMoments theorem1_monte_carlo(const LinearGaussianProblem& p, const Eigen::VectorXd& y,
                                     std::size_t n, Rng& rng);

// Moment-based Gaussianity diagnostics: per-coordinate skewness and excess
// kurtosis, plus the same statistics along seeded random unit projections.
// A statistic passes when |skew| < 5 sqrt(6/N) and |ex.kurt| < 5 sqrt(24/N).
struct GaussianityStat {
  std::string label;
  double skewness = 0.0;
  double excess_kurtosis = 0.0;
  bool pass = false;
};

struct GaussianityReport {
  std::vector<GaussianityStat> stats;
  double skew_threshold = 0.0;
  double kurt_threshold = 0.0;
  bool pass = false;
};

// samples is n x d (row per draw). n_projections extra directions are drawn
// from Rng(projection_seed) on the unit sphere.
GaussianityReport theorem2_gaussianity_check(const Eigen::MatrixXd& samples,
                                             std::size_t n_projections = 10,
                                             std::uint64_t projection_seed = 0xC0DE);

// One problem/observation comparison row of verify_theorems.
struct TheoremCheck {
  std::size_t problem = 0;
  std::size_t y_index = 0;
  double mean_err_se = 0.0;    // max over coords of |mc - closed| / SE(mean)
  double cov_rel_frob = 0.0;   // ||mc - closed||_F / ||closed||_F
  bool mean_pass = false;
  bool cov_pass = false;
};

struct TheoremReport {
  std::vector<TheoremCheck> checks;
  GaussianityReport gaussianity;  // pooled whitened draws across all (p, y)
  std::size_t pooled_samples = 0;
  bool pass = false;
};

// Thresholds used by verify_theorems: mean within mean_se_tol standard
// errors per coordinate, covariance within cov_rel_tol relative Frobenius.
struct TheoremTolerances {
  double mean_se_tol = 6.0;
  double cov_rel_tol = 0.02;
};

// For each problem and each observation in ys: closed form vs Monte Carlo at
// n draws, then one pooled Gaussianity check on the draws after whitening by
// the closed-form moments (whitened batches are N(0, I) when the theorems
// hold, so pooling across observations is sound).
TheoremReport verify_theorems(const std::vector<LinearGaussianProblem>& problems,
                              const std::vector<std::vector<Eigen::VectorXd>>& ys, std::size_t n,
                              Rng& rng, TheoremTolerances tol = {});

// Well-conditioned random problem for harness sweeps.
LinearGaussianProblem random_problem(std::size_t dim_x, std::size_t dim_y, std::size_t dim_z,
                                     Rng& rng);

// The textbook 1-d instance (sigma0=4, A=2, gamma=1, B=3, c=1, sigma_z=2).
LinearGaussianProblem canonical_problem_1d();

}  // namespace vspair
