#include "vspair/theory.hpp"

#include <cmath>

#include "vspair/tensor.hpp"  // ShapeError / ValueError

namespace vspair {

namespace {

void require_spd(const Eigen::MatrixXd& m, const char* name) {
  if (m.rows() != m.cols())
    throw ShapeError(std::string(name) + ": expected square, got " + std::to_string(m.rows()) +
                     " x " + std::to_string(m.cols()));
  double scale = std::max(1.0, m.cwiseAbs().maxCoeff());
  if ((m - m.transpose()).cwiseAbs().maxCoeff() > 1e-12 * scale)
    throw ValueError(std::string(name) + ": not symmetric");
  Eigen::LLT<Eigen::MatrixXd> llt(m);
  if (llt.info() != Eigen::Success)
    throw ValueError(std::string(name) + ": not positive definite");
}

Eigen::MatrixXd chol_lower(const Eigen::MatrixXd& m, const char* name) {
  Eigen::LLT<Eigen::MatrixXd> llt(m);
  if (llt.info() != Eigen::Success)
    throw ValueError(std::string(name) + ": not positive definite");
  return llt.matrixL();
}

Eigen::VectorXd gaussian_vector(Eigen::Index d, Rng& rng) {
  Eigen::VectorXd v(d);
  for (Eigen::Index i = 0; i < d; ++i) v(i) = rng.gaussian();
  return v;
}

}  // namespace

void LinearGaussianProblem::validate() const {
  if (A.rows() != gamma.rows() || m0.size() != A.cols() || sigma0.rows() != A.cols() ||
      B.cols() != A.cols() || c.size() != B.rows() || sigma_z.rows() != B.rows())
    throw ShapeError("linear-gaussian problem: inconsistent dimensions (A " +
                     std::to_string(A.rows()) + "x" + std::to_string(A.cols()) + ", B " +
                     std::to_string(B.rows()) + "x" + std::to_string(B.cols()) + ")");
  require_spd(gamma, "gamma");
  require_spd(sigma0, "sigma0");
  require_spd(sigma_z, "sigma_z");
}

GaussianMoments posterior_x_given_y(const LinearGaussianProblem& p, const Eigen::VectorXd& y) {
  p.validate();
  if (y.size() != static_cast<Eigen::Index>(p.dim_y()))
    throw ShapeError("posterior: y has " + std::to_string(y.size()) + " entries, expected " +
                     std::to_string(p.dim_y()));
  Eigen::LLT<Eigen::MatrixXd> s0(p.sigma0), g(p.gamma);
  Eigen::MatrixXd prec = s0.solve(Eigen::MatrixXd::Identity(p.sigma0.rows(), p.sigma0.cols())) +
                         p.A.transpose() * g.solve(p.A);
  Eigen::LLT<Eigen::MatrixXd> prec_llt(prec);
  if (prec_llt.info() != Eigen::Success)
    throw ValueError("posterior: precision matrix not positive definite");
  GaussianMoments out;
  out.cov = prec_llt.solve(Eigen::MatrixXd::Identity(prec.rows(), prec.cols()));
  out.mean = prec_llt.solve(s0.solve(p.m0) + p.A.transpose() * g.solve(y));
  return out;
}

GaussianMoments theorem1_closed_form(const LinearGaussianProblem& p, const Eigen::VectorXd& y) {
  GaussianMoments post = posterior_x_given_y(p, y);
  GaussianMoments out;
  out.mean = p.B * post.mean + p.c;
  out.cov = p.sigma_z + p.B * post.cov * p.B.transpose();
  return out;
}

GaussianMoments theorem1_monte_carlo(const LinearGaussianProblem& p, const Eigen::VectorXd& y,
                                     std::size_t n, Rng& rng) {
  if (n < 2) throw ValueError("theorem1_monte_carlo: need at least 2 draws");
  GaussianMoments post = posterior_x_given_y(p, y);
  Eigen::MatrixXd lx = chol_lower(post.cov, "posterior covariance");
  Eigen::MatrixXd lz = chol_lower(p.sigma_z, "sigma_z");

  Eigen::Index dz = static_cast<Eigen::Index>(p.dim_z());
  Eigen::VectorXd mean = Eigen::VectorXd::Zero(dz);
  Eigen::MatrixXd second = Eigen::MatrixXd::Zero(dz, dz);
  for (std::size_t i = 0; i < n; ++i) {
    Eigen::VectorXd x = post.mean + lx * gaussian_vector(lx.cols(), rng);
    Eigen::VectorXd z = p.B * x + p.c + lz * gaussian_vector(dz, rng);
    mean += z;
    second.noalias() += z * z.transpose();
  }
  double dn = static_cast<double>(n);
  mean /= dn;
  GaussianMoments out;
  out.mean = mean;
  out.cov = (second - dn * mean * mean.transpose()) / (dn - 1.0);
  return out;
}

GaussianityReport theorem2_gaussianity_check(const Eigen::MatrixXd& samples,
                                             std::size_t n_projections,
                                             std::uint64_t projection_seed) {
  Eigen::Index n = samples.rows(), d = samples.cols();
  if (n < 8) throw ValueError("gaussianity check: need at least 8 samples");
  double dn = static_cast<double>(n);
  GaussianityReport rep;
  rep.skew_threshold = 5.0 * std::sqrt(6.0 / dn);
  rep.kurt_threshold = 5.0 * std::sqrt(24.0 / dn);
  rep.pass = true;

  auto moments_of = [&](const Eigen::VectorXd& v, const std::string& label) {
    double mu = v.mean();
    double m2 = 0.0, m3 = 0.0, m4 = 0.0;
    for (Eigen::Index i = 0; i < v.size(); ++i) {
      double c = v(i) - mu;
      double c2 = c * c;
      m2 += c2;
      m3 += c2 * c;
      m4 += c2 * c2;
    }
    m2 /= dn;
    m3 /= dn;
    m4 /= dn;
    if (m2 <= 0.0) throw ValueError("gaussianity check: degenerate variance in " + label);
    GaussianityStat st;
    st.label = label;
    st.skewness = m3 / std::pow(m2, 1.5);
    st.excess_kurtosis = m4 / (m2 * m2) - 3.0;
    st.pass = std::abs(st.skewness) < rep.skew_threshold &&
              std::abs(st.excess_kurtosis) < rep.kurt_threshold;
    rep.pass = rep.pass && st.pass;
    rep.stats.push_back(std::move(st));
  };

  for (Eigen::Index j = 0; j < d; ++j)
    moments_of(samples.col(j), "coord " + std::to_string(j));

  Rng prng(projection_seed);
  for (std::size_t k = 0; k < n_projections; ++k) {
    Eigen::VectorXd dir = gaussian_vector(d, prng);
    double norm = dir.norm();
    while (norm < 1e-12) {  // astronomically unlikely; redraw for safety
      dir = gaussian_vector(d, prng);
      norm = dir.norm();
    }
    dir /= norm;
    moments_of(samples * dir, "projection " + std::to_string(k));
  }
  return rep;
}

TheoremReport verify_theorems(const std::vector<LinearGaussianProblem>& problems,
                              const std::vector<std::vector<Eigen::VectorXd>>& ys, std::size_t n,
                              Rng& rng, TheoremTolerances tol) {
  if (problems.empty()) throw ValueError("verify_theorems: no problems");
  if (ys.size() != problems.size())
    throw ShapeError("verify_theorems: " + std::to_string(problems.size()) + " problems vs " +
                     std::to_string(ys.size()) + " observation lists");

  for (const auto& p : problems)
    if (p.dim_z() != problems[0].dim_z())
      throw ShapeError("verify_theorems: problems must share dim_z to pool draws");

  TheoremReport rep;
  rep.pass = true;

  // Pooled whitened draws: every batch is N(0, I) under the theorems, so a
  // single moment check gets the full pooled sample size.
  std::size_t total = 0;
  for (const auto& list : ys) total += list.size() * n;
  Eigen::MatrixXd pooled(static_cast<Eigen::Index>(total),
                         static_cast<Eigen::Index>(problems[0].dim_z()));
  std::size_t pooled_rows = 0;

  for (std::size_t pi = 0; pi < problems.size(); ++pi) {
    const LinearGaussianProblem& p = problems[pi];
    for (std::size_t yi = 0; yi < ys[pi].size(); ++yi) {
      const Eigen::VectorXd& y = ys[pi][yi];
      GaussianMoments closed = theorem1_closed_form(p, y);
      GaussianMoments mc = theorem1_monte_carlo(p, y, n, rng);

      TheoremCheck chk;
      chk.problem = pi;
      chk.y_index = yi;
      double worst = 0.0;
      for (Eigen::Index j = 0; j < closed.mean.size(); ++j) {
        double se = std::sqrt(closed.cov(j, j) / static_cast<double>(n));
        worst = std::max(worst, std::abs(mc.mean(j) - closed.mean(j)) / se);
      }
      chk.mean_err_se = worst;
      chk.cov_rel_frob = (mc.cov - closed.cov).norm() / closed.cov.norm();
      chk.mean_pass = chk.mean_err_se < tol.mean_se_tol;
      chk.cov_pass = chk.cov_rel_frob < tol.cov_rel_tol;
      rep.pass = rep.pass && chk.mean_pass && chk.cov_pass;
      rep.checks.push_back(chk);

      // Draw a fresh whitened batch for the pooled Gaussianity check.
      GaussianMoments post = posterior_x_given_y(p, y);
      Eigen::MatrixXd lw = chol_lower(closed.cov, "closed-form covariance");
      Eigen::MatrixXd lx = chol_lower(post.cov, "posterior covariance");
      Eigen::MatrixXd lz = chol_lower(p.sigma_z, "sigma_z");
      for (std::size_t i = 0; i < n; ++i) {
        Eigen::VectorXd x = post.mean + lx * gaussian_vector(lx.cols(), rng);
        Eigen::VectorXd z =
            p.B * x + p.c + lz * gaussian_vector(static_cast<Eigen::Index>(p.dim_z()), rng);
        Eigen::VectorXd w = lw.triangularView<Eigen::Lower>().solve(z - closed.mean);
        pooled.row(static_cast<Eigen::Index>(pooled_rows++)) = w.transpose();
      }
    }
  }

  pooled.conservativeResize(static_cast<Eigen::Index>(pooled_rows), Eigen::NoChange);
  rep.gaussianity = theorem2_gaussianity_check(pooled);
  rep.pooled_samples = pooled_rows;
  rep.pass = rep.pass && rep.gaussianity.pass;
  return rep;
}

LinearGaussianProblem random_problem(std::size_t dim_x, std::size_t dim_y, std::size_t dim_z,
                                     Rng& rng) {
  if (dim_x == 0 || dim_y == 0 || dim_z == 0)
    throw ShapeError("random_problem: zero dimension");
  auto dx = static_cast<Eigen::Index>(dim_x);
  auto dy = static_cast<Eigen::Index>(dim_y);
  auto dz = static_cast<Eigen::Index>(dim_z);

  auto matrix = [&rng](Eigen::Index r, Eigen::Index c, double scale) {
    Eigen::MatrixXd m(r, c);
    for (Eigen::Index i = 0; i < r; ++i)
      for (Eigen::Index j = 0; j < c; ++j) m(i, j) = rng.gaussian() * scale;
    return m;
  };
  // diag(0.5 + u) + M M' / dim keeps the spectrum comfortably off zero.
  auto spd = [&](Eigen::Index d) {
    Eigen::MatrixXd m = matrix(d, d, 1.0);
    Eigen::MatrixXd out = m * m.transpose() / static_cast<double>(d);
    for (Eigen::Index i = 0; i < d; ++i) out(i, i) += 0.5 + rng.uniform();
    return out;
  };

  LinearGaussianProblem p;
  p.A = matrix(dy, dx, 1.0 / std::sqrt(static_cast<double>(dim_x)));
  p.gamma = spd(dy);
  p.m0 = matrix(dx, 1, 1.0);
  p.sigma0 = spd(dx);
  p.B = matrix(dz, dx, 1.0 / std::sqrt(static_cast<double>(dim_x)));
  p.c = matrix(dz, 1, 1.0);
  p.sigma_z = spd(dz);
  p.validate();
  return p;
}

LinearGaussianProblem canonical_problem_1d() {
  LinearGaussianProblem p;
  p.A = Eigen::MatrixXd::Constant(1, 1, 2.0);
  p.gamma = Eigen::MatrixXd::Identity(1, 1);
  p.m0 = Eigen::VectorXd::Zero(1);
  p.sigma0 = Eigen::MatrixXd::Constant(1, 1, 4.0);
  p.B = Eigen::MatrixXd::Constant(1, 1, 3.0);
  p.c = Eigen::VectorXd::Constant(1, 1.0);
  p.sigma_z = Eigen::MatrixXd::Constant(1, 1, 2.0);
  return p;
}

}  // namespace vspair
