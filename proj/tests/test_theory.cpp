#include <cmath>
#include <vector>

#include "doctest.h"
#include "oracles.hpp"
#include "vspair/tensor.hpp"
#include "vspair/theory.hpp"

using namespace vspair;

namespace {

Eigen::VectorXd vec1(double v) {
  Eigen::VectorXd y(1);
  y << v;
  return y;
}

// X ~ N(0,1), Y = X + eps, Gamma = 1, read-out Z = 3X + 1 + xi, xi ~ N(0,2).
LinearGaussianProblem equal_precision_1d() {
  LinearGaussianProblem p;
  p.A = Eigen::MatrixXd::Ones(1, 1);
  p.gamma = Eigen::MatrixXd::Ones(1, 1);
  p.m0 = Eigen::VectorXd::Zero(1);
  p.sigma0 = Eigen::MatrixXd::Ones(1, 1);
  p.B = Eigen::MatrixXd::Constant(1, 1, 3.0);
  p.c = vec1(1.0);
  p.sigma_z = Eigen::MatrixXd::Constant(1, 1, 2.0);
  return p;
}

}  // namespace

TEST_CASE("posterior_x_given_y: uninformative data returns the prior") {
  Rng rng(1);
  LinearGaussianProblem p = random_problem(3, 2, 2, rng);
  p.A.setZero();
  GaussianMoments post = posterior_x_given_y(p, Eigen::VectorXd::Zero(2));
  CHECK((post.mean - p.m0).norm() < 1e-12);
  CHECK((post.cov - p.sigma0).norm() < 1e-10);
}

TEST_CASE("posterior_x_given_y: equal precisions halve the variance") {
  LinearGaussianProblem p = equal_precision_1d();
  GaussianMoments post = posterior_x_given_y(p, vec1(0.8));
  CHECK(post.mean(0) == doctest::Approx(0.4).epsilon(1e-12));
  CHECK(post.cov(0, 0) == doctest::Approx(0.5).epsilon(1e-12));
}

TEST_CASE("posterior_x_given_y: 1d case against the quadrature oracle") {
  // sigma0^2 = 4, A = 2, Gamma = 1, y = 1
  LinearGaussianProblem p;
  p.A = Eigen::MatrixXd::Constant(1, 1, 2.0);
  p.gamma = Eigen::MatrixXd::Ones(1, 1);
  p.m0 = Eigen::VectorXd::Zero(1);
  p.sigma0 = Eigen::MatrixXd::Constant(1, 1, 4.0);
  p.B = Eigen::MatrixXd::Identity(1, 1);
  p.c = vec1(0.0);
  p.sigma_z = Eigen::MatrixXd::Ones(1, 1);

  GaussianMoments post = posterior_x_given_y(p, vec1(1.0));
  CHECK(post.cov(0, 0) == doctest::Approx(0.235294).epsilon(1e-5));
  CHECK(post.mean(0) == doctest::Approx(0.470588).epsilon(1e-5));

  oracles::Moments1d q = oracles::posterior_moments_quadrature(0.0, 4.0, 2.0, 1.0, 1.0);
  CHECK(post.mean(0) == doctest::Approx(q.mean).epsilon(1e-8));
  CHECK(post.cov(0, 0) == doctest::Approx(q.var).epsilon(1e-8));
}

TEST_CASE("problem validation rejects bad inputs") {
  Rng rng(2);
  LinearGaussianProblem p = random_problem(3, 2, 2, rng);
  CHECK_NOTHROW(p.validate());

  LinearGaussianProblem bad = p;
  bad.sigma0(0, 1) += 0.5;  // asymmetric
  CHECK_THROWS_AS(bad.validate(), ValueError);

  bad = p;
  bad.sigma0 = -Eigen::MatrixXd::Identity(3, 3);  // not positive definite
  CHECK_THROWS_AS(bad.validate(), ValueError);

  bad = p;
  bad.B = Eigen::MatrixXd::Zero(2, 4);  // wrong inner dimension
  CHECK_THROWS_AS(bad.validate(), ShapeError);

  bad = p;
  bad.c = Eigen::VectorXd::Zero(5);
  CHECK_THROWS_AS(bad.validate(), ShapeError);
}

TEST_CASE("theorem1_closed_form: transparent encoder and pinned 1d values") {
  // B = I, c = 0, Sigma_Z ~ 0 reduces to the posterior itself
  Rng rng(3);
  LinearGaussianProblem p = random_problem(3, 2, 3, rng);
  p.B = Eigen::MatrixXd::Identity(3, 3);
  p.c = Eigen::VectorXd::Zero(3);
  p.sigma_z = 1e-14 * Eigen::MatrixXd::Identity(3, 3);
  Eigen::VectorXd y = Eigen::VectorXd::Ones(2);
  GaussianMoments post = posterior_x_given_y(p, y);
  GaussianMoments push = theorem1_closed_form(p, y);
  CHECK((push.mean - post.mean).norm() < 1e-12);
  CHECK((push.cov - post.cov).norm() < 1e-10);

  // equal-precision case, B=3, c=1, Sigma_Z=2, y=2: mean 4, cov 6.5
  LinearGaussianProblem q = equal_precision_1d();
  GaussianMoments g = theorem1_closed_form(q, vec1(2.0));
  CHECK(g.mean(0) == doctest::Approx(4.0).epsilon(1e-12));
  CHECK(g.cov(0, 0) == doctest::Approx(6.5).epsilon(1e-12));

  // textbook non-equal-precision instance: mean 65/17, cov 70/17 at y=2
  GaussianMoments c1 = theorem1_closed_form(canonical_problem_1d(), vec1(2.0));
  CHECK(c1.mean(0) == doctest::Approx(65.0 / 17.0).epsilon(1e-12));
  CHECK(c1.cov(0, 0) == doctest::Approx(70.0 / 17.0).epsilon(1e-12));

  // push-forward inflation: cov - Sigma_Z is positive semidefinite
  Rng rng2(4);
  LinearGaussianProblem r = random_problem(4, 3, 2, rng2);
  GaussianMoments gr = theorem1_closed_form(r, Eigen::VectorXd::Ones(3));
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(gr.cov - r.sigma_z);
  CHECK(es.eigenvalues().minCoeff() > -1e-10);
}

TEST_CASE("theorem1_closed_form: mean affine in y, covariance constant") {
  Rng rng(5);
  LinearGaussianProblem p = random_problem(3, 2, 4, rng);
  Eigen::VectorXd y0 = Eigen::VectorXd::Zero(2), dy(2);
  dy << 0.7, -0.3;
  GaussianMoments at0 = theorem1_closed_form(p, y0);
  GaussianMoments at1 = theorem1_closed_form(p, dy);
  GaussianMoments at2 = theorem1_closed_form(p, 2.0 * dy);
  // secant through t=0 and t=2 passes through t=1
  Eigen::VectorXd secant = 0.5 * (at0.mean + at2.mean);
  CHECK((at1.mean - secant).norm() < 1e-10);
  CHECK((at1.cov - at0.cov).norm() < 1e-12);
  CHECK((at2.cov - at0.cov).norm() < 1e-12);
}

TEST_CASE("theorem1_monte_carlo: degenerate and statistical agreement") {
  // Sigma_Z -> 0 and B = 0: every draw is c
  LinearGaussianProblem p = equal_precision_1d();
  p.B.setZero();
  p.sigma_z = 1e-30 * Eigen::MatrixXd::Identity(1, 1);
  Rng rng(6);
  GaussianMoments mc = theorem1_monte_carlo(p, vec1(0.3), 2000, rng);
  CHECK(mc.mean(0) == doctest::Approx(1.0).epsilon(1e-9));
  CHECK(std::abs(mc.cov(0, 0)) < 1e-20);

  // full agreement at N = 2e5: mean within 6 SE, cov within 2% Frobenius
  Rng rng2(7);
  LinearGaussianProblem q = random_problem(3, 2, 3, rng2);
  Eigen::VectorXd y(2);
  y << 0.4, -1.1;
  GaussianMoments closed = theorem1_closed_form(q, y);
  const std::size_t n = 200000;
  GaussianMoments emp = theorem1_monte_carlo(q, y, n, rng2);
  for (Eigen::Index i = 0; i < 3; ++i) {
    double se = std::sqrt(closed.cov(i, i) / static_cast<double>(n));
    CHECK(std::abs(emp.mean(i) - closed.mean(i)) < 6.0 * se);
  }
  CHECK((emp.cov - closed.cov).norm() / closed.cov.norm() < 0.02);

  CHECK_THROWS_AS(theorem1_monte_carlo(q, y, 0, rng2), ValueError);
}

TEST_CASE("theorem2_gaussianity_check: null case, two-point failure, mixture failure") {
  // exact gaussian draws pass at N = 1e6
  Rng rng(8);
  const std::size_t n = 1000000;
  Eigen::MatrixXd samples(n, 1);
  for (std::size_t i = 0; i < n; ++i) samples(static_cast<Eigen::Index>(i), 0) = rng.gaussian();
  GaussianityReport rep = theorem2_gaussianity_check(samples);
  CHECK(rep.pass);
  CHECK(rep.stats.size() == 1 + 10);  // coordinate + projections
  CHECK(rep.skew_threshold == doctest::Approx(5.0 * std::sqrt(6.0 / static_cast<double>(n))));
  CHECK(rep.kurt_threshold == doctest::Approx(5.0 * std::sqrt(24.0 / static_cast<double>(n))));

  // symmetric two-point distribution: excess kurtosis -> -2
  Eigen::MatrixXd flips(20000, 1);
  Rng rng2(9);
  for (Eigen::Index i = 0; i < flips.rows(); ++i)
    flips(i, 0) = rng2.uniform() < 0.5 ? -1.0 : 1.0;
  GaussianityReport rep2 = theorem2_gaussianity_check(flips);
  CHECK_FALSE(rep2.pass);
  CHECK(rep2.stats[0].excess_kurtosis == doctest::Approx(-2.0).epsilon(0.05));

  // spike-and-slab mixture at omega = 0.5: excess kurtosis ~ 3 (2/omega - 3 + 0)
  Eigen::MatrixXd mix(100000, 1);
  Rng rng3(10);
  for (Eigen::Index i = 0; i < mix.rows(); ++i)
    mix(i, 0) = rng3.uniform() < 0.5 ? 0.0 : rng3.gaussian();
  GaussianityReport rep3 = theorem2_gaussianity_check(mix);
  CHECK_FALSE(rep3.pass);
  CHECK(rep3.stats[0].excess_kurtosis == doctest::Approx(3.0).epsilon(0.1));

  // the oracle agrees with the reported statistics
  std::vector<double> col(mix.rows());
  for (Eigen::Index i = 0; i < mix.rows(); ++i) col[static_cast<std::size_t>(i)] = mix(i, 0);
  oracles::MomentStats ms = oracles::moment_stats(col);
  CHECK(rep3.stats[0].skewness == doctest::Approx(ms.skew).epsilon(1e-10));
  CHECK(rep3.stats[0].excess_kurtosis == doctest::Approx(ms.exkurt).epsilon(1e-10));

  // projection directions are seeded: repeated runs agree exactly
  GaussianityReport again = theorem2_gaussianity_check(mix);
  REQUIRE(again.stats.size() == rep3.stats.size());
  for (std::size_t i = 0; i < again.stats.size(); ++i) {
    CHECK(again.stats[i].skewness == rep3.stats[i].skewness);
    CHECK(again.stats[i].excess_kurtosis == rep3.stats[i].excess_kurtosis);
  }
}

TEST_CASE("verify_theorems: canonical problem passes, B=0 passes trivially") {
  std::vector<LinearGaussianProblem> problems{canonical_problem_1d()};
  std::vector<std::vector<Eigen::VectorXd>> ys{{vec1(0.0), vec1(1.0), vec1(2.0)}};
  Rng rng(11);
  TheoremReport rep = verify_theorems(problems, ys, 200000, rng);
  CHECK(rep.pass);
  CHECK(rep.checks.size() == 3);
  CHECK(rep.pooled_samples == 3 * 200000);
  for (const auto& c : rep.checks) {
    CHECK(c.mean_pass);
    CHECK(c.cov_pass);
    CHECK(c.mean_err_se < 6.0);
    CHECK(c.cov_rel_frob < 0.02);
  }
  CHECK(rep.gaussianity.pass);

  LinearGaussianProblem degenerate = equal_precision_1d();
  degenerate.B.setZero();
  Rng rng2(12);
  TheoremReport rep2 = verify_theorems({degenerate}, {{vec1(-1.0), vec1(4.0)}}, 50000, rng2);
  CHECK(rep2.pass);
}

TEST_CASE("verify_theorems: pooling requires a shared read-out dimension") {
  Rng rng(13);
  std::vector<LinearGaussianProblem> problems{random_problem(2, 2, 2, rng),
                                              random_problem(2, 2, 3, rng)};
  std::vector<std::vector<Eigen::VectorXd>> ys{{Eigen::VectorXd::Zero(2)},
                                               {Eigen::VectorXd::Zero(2)}};
  Rng rng2(14);
  CHECK_THROWS_AS(verify_theorems(problems, ys, 5000, rng2), ShapeError);

  CHECK_THROWS_AS(verify_theorems({}, {}, 5000, rng2), ValueError);
}

TEST_CASE("law of total covariance holds over joint draws") {
  Rng rng(15);
  LinearGaussianProblem p = random_problem(2, 2, 2, rng);
  // draw y from the prior predictive by sampling x and noise
  const std::size_t n = 60000;
  Eigen::LLT<Eigen::MatrixXd> s0(p.sigma0), g(p.gamma), sz(p.sigma_z);
  Eigen::MatrixXd l0 = s0.matrixL(), lg = g.matrixL(), lz = sz.matrixL();

  Eigen::VectorXd mean_acc = Eigen::VectorXd::Zero(2);
  Eigen::MatrixXd second = Eigen::MatrixXd::Zero(2, 2);     // E[z z^T]
  Eigen::MatrixXd cov_term = Eigen::MatrixXd::Zero(2, 2);   // E_y[cov_z(y)]
  Eigen::VectorXd mu_acc = Eigen::VectorXd::Zero(2);        // E_y[mean_z(y)]
  Eigen::MatrixXd mu_second = Eigen::MatrixXd::Zero(2, 2);  // E_y[mean mean^T]

  Rng draw(16);
  for (std::size_t i = 0; i < n; ++i) {
    Eigen::VectorXd gx(2), ge(2), gz(2);
    for (int k = 0; k < 2; ++k) gx(k) = draw.gaussian();
    for (int k = 0; k < 2; ++k) ge(k) = draw.gaussian();
    for (int k = 0; k < 2; ++k) gz(k) = draw.gaussian();
    Eigen::VectorXd x = p.m0 + l0 * gx;
    Eigen::VectorXd y = p.A * x + lg * ge;
    Eigen::VectorXd z = p.B * x + p.c + lz * gz;

    GaussianMoments cf = theorem1_closed_form(p, y);
    mean_acc += z;
    second += z * z.transpose();
    cov_term += cf.cov;
    mu_acc += cf.mean;
    mu_second += cf.mean * cf.mean.transpose();
  }
  double inv = 1.0 / static_cast<double>(n);
  Eigen::VectorXd zbar = mean_acc * inv;
  Eigen::MatrixXd total_cov = second * inv - zbar * zbar.transpose();
  Eigen::MatrixXd expect_cov = cov_term * inv;
  Eigen::VectorXd mubar = mu_acc * inv;
  Eigen::MatrixXd cov_of_mean = mu_second * inv - mubar * mubar.transpose();

  Eigen::MatrixXd rhs = expect_cov + cov_of_mean;
  CHECK((total_cov - rhs).norm() / rhs.norm() < 0.05);
}
