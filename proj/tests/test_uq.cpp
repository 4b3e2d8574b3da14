#include <algorithm>
#include <cmath>
#include <cstdint>
#include <vector>

#include "doctest.h"
#include "vspair/uq.hpp"

using namespace vspair;

namespace {

ModelConfig tiny_config(Variant v = Variant::kVsPair) {
  ModelConfig cfg;
  cfg.variant = v;
  cfg.dim_x = 6;
  cfg.dim_y = 5;
  cfg.lx = 4;
  cfg.ly = 3;
  cfg.hidden_x = {8};
  cfg.hidden_y = {8};
  cfg.hidden_map = {8};
  return cfg;
}

void fill_var(const Var& v, double c) {
  Tensor& t = Var(v).mutable_value();
  std::fill(t.values().begin(), t.values().end(), c);
}

// QoI-side posterior pinned through the map: constant (mu, log sigma^2, gate
// logit) regardless of the observation. linear_decoder additionally drops the
// decoder trunk so decode_x is exactly affine.
PairedModel degenerate_model(double mu, double log_var, double gate_logit,
                             bool linear_decoder, std::uint64_t seed) {
  ModelConfig cfg = tiny_config();
  cfg.hidden_map.clear();
  if (linear_decoder) cfg.hidden_x.clear();
  Rng rng(seed);
  PairedModel m = build_model(cfg, rng);
  for (std::size_t k = 0; k < 3; ++k) fill_var(m.map->net.head_weights[k], 0.0);
  fill_var(m.map->net.head_biases[0], mu);
  fill_var(m.map->net.head_biases[1], log_var);
  fill_var(m.map->net.head_biases[2], gate_logit);
  return m;
}

Tensor rand_vec(std::size_t d, Rng& rng) {
  Tensor t{Shape{d}};
  for (std::size_t i = 0; i < d; ++i) t[i] = rng.gaussian();
  return t;
}

Tensor random_rows(std::size_t n, std::size_t d, Rng& rng) {
  Tensor t{Shape{n, d}};
  for (std::size_t i = 0; i < t.size(); ++i) t[i] = rng.gaussian();
  return t;
}

CorruptionMask make_mask(std::size_t d, const std::vector<std::size_t>& on_idx) {
  CorruptionMask m;
  m.h = 1;
  m.w = d;
  m.on.assign(d, 0);
  for (std::size_t i : on_idx) m.on[i] = 1;
  return m;
}

PairedDataset make_corrupted_data(std::size_t n, std::uint64_t seed) {
  PairedDataset d;
  d.kind = "synthetic";
  d.dim_x = 6;
  d.dim_y = 5;
  Rng rng(seed);
  d.x = random_rows(n, d.dim_x, rng);
  d.y = random_rows(n, d.dim_y, rng);
  for (std::size_t i = 0; i < n; ++i)
    d.masks.push_back(make_mask(d.dim_x, {i % d.dim_x, (i + 2) % d.dim_x}));
  return d;
}

}  // namespace

TEST_CASE("pearson_r: pinned values, affine invariance, rejections") {
  CHECK(pearson_r({1, 2, 3}, {1, 3, 2}) == 0.5);

  Rng rng(1);
  std::vector<double> u(40), v(40);
  for (std::size_t i = 0; i < u.size(); ++i) {
    u[i] = rng.gaussian();
    v[i] = rng.gaussian() + 0.4 * u[i];
  }
  double r = pearson_r(u, v);
  CHECK(pearson_r(u, u) == doctest::Approx(1.0).epsilon(1e-12));

  std::vector<double> neg(u);
  for (double& x : neg) x = -x;
  CHECK(pearson_r(u, neg) == doctest::Approx(-1.0).epsilon(1e-12));

  std::vector<double> shifted(u);
  for (double& x : shifted) x = 2.5 * x - 3.0;
  CHECK(pearson_r(shifted, v) == doctest::Approx(r).epsilon(1e-12));
  for (double& x : shifted) x = -x;
  CHECK(pearson_r(shifted, v) == doctest::Approx(-r).epsilon(1e-12));

  CHECK_THROWS_AS(pearson_r({1, 2}, {1, 2, 3}), ShapeError);
  CHECK_THROWS_AS(pearson_r({1}, {2}), ValueError);
  CHECK_THROWS_AS(pearson_r({1, 1, 1}, {1, 2, 3}), ValueError);
}

TEST_CASE("region_variance_ratio: pinned ratios and mask validation") {
  Tensor uniform{Shape{8}, 1.0};
  CorruptionMask half = make_mask(8, {0, 1, 2});
  CHECK(region_variance_ratio(uniform, half) == doctest::Approx(1.0).epsilon(1e-9));

  Tensor split{Shape{6}, std::vector<double>{2.0, 2.0, 0.5, 0.5, 0.5, 0.5}};
  CorruptionMask first_two = make_mask(6, {0, 1});
  CHECK(region_variance_ratio(split, first_two) == doctest::Approx(4.0).epsilon(1e-9));

  Tensor scaled{Shape{6}};
  for (std::size_t i = 0; i < 6; ++i) scaled[i] = 7.0 * split[i];
  CHECK(region_variance_ratio(scaled, first_two) == doctest::Approx(4.0).epsilon(1e-9));

  CHECK_THROWS_AS(region_variance_ratio(split, make_mask(6, {0, 1, 2, 3, 4, 5})), ValueError);
  CHECK_THROWS_AS(region_variance_ratio(split, make_mask(6, {})), ValueError);
  CHECK_THROWS_AS(region_variance_ratio(split, make_mask(7, {0})), ShapeError);
}

TEST_CASE("variance_map: degenerate posterior gives rounding-level variance") {
  PairedModel m = degenerate_model(1.5, -745.0, 5.0, true, 2);
  Rng data(3), rng(4);
  Tensor y = rand_vec(m.cfg.dim_y, data);
  VarianceMap vm = variance_map(m, y, 10, rng);
  REQUIRE(vm.variance.size() == m.cfg.dim_x);
  // Every decoded draw is bitwise identical, but the column mean (a sum over
  // 10 equal doubles divided by 10) rounds one ulp away from the common
  // value, so the variance bottoms out near ulp^2 rather than exactly 0.
  for (std::size_t j = 0; j < vm.variance.size(); ++j) CHECK(vm.variance[j] < 1e-30);
  CHECK(vm.mean.all_finite());

  Rng rng2(5);
  CHECK_THROWS_AS(variance_map(m, y, 1, rng2), ValueError);
}

TEST_CASE("variance_map: two samples give the half squared difference") {
  PairedModel m = degenerate_model(0.8, std::log(0.25), std::log(0.7), true, 6);
  Rng data(7);
  Tensor y = rand_vec(m.cfg.dim_y, data);

  Rng ra(8), rb(8);
  VarianceMap vm = variance_map(m, y, 2, ra);
  InvertResult inv = invert(m, y, 2, rb);  // same stream: identical draws
  std::size_t d = m.cfg.dim_x;
  for (std::size_t j = 0; j < d; ++j) {
    double diff = inv.xhat[j] - inv.xhat[d + j];
    CHECK(vm.variance[j] == doctest::Approx(0.5 * diff * diff).epsilon(1e-14));
    CHECK(vm.mean[j] == doctest::Approx(0.5 * (inv.xhat[j] + inv.xhat[d + j])).epsilon(1e-14));
  }
}

TEST_CASE("variance_map: linear decoder matches the analytic mixture variance") {
  const double mu = 0.8, var_slab = 0.25;
  const double omega = std::exp(-std::max(0.0, -std::log(0.7)));
  PairedModel m = degenerate_model(mu, std::log(var_slab), std::log(0.7), true, 9);

  double var_z = omega * (mu * mu + var_slab) - omega * mu * omega * mu;
  const Tensor& w = m.dec_x.head_weights[0].value();   // dim_x x lx
  const Tensor& b = m.dec_x.head_biases[0].value();

  Rng data(10);
  Tensor y = rand_vec(m.cfg.dim_y, data);
  const std::size_t n = 20000;
  Rng rng(11);
  VarianceMap vm = variance_map(m, y, n, rng);

  std::size_t lx = m.cfg.lx;
  for (std::size_t p = 0; p < m.cfg.dim_x; ++p) {
    double expect_var = 0.0, expect_mean = b[p];
    for (std::size_t j = 0; j < lx; ++j) {
      expect_var += w[p * lx + j] * w[p * lx + j] * var_z;
      expect_mean += w[p * lx + j] * omega * mu;
    }
    CHECK(vm.variance[p] == doctest::Approx(expect_var).epsilon(0.1));
    double se = std::sqrt(expect_var / static_cast<double>(n));
    CHECK(std::abs(vm.mean[p] - expect_mean) < 6.0 * se);
  }
}

TEST_CASE("perturbation_sweep: identity scales reproduce the base bitwise") {
  PairedModel m = degenerate_model(0.8, std::log(0.25), 5.0, false, 12);
  Rng data(13);
  Tensor y = rand_vec(m.cfg.dim_y, data);

  Rng ra(14);
  PerturbationSweep rel = perturbation_sweep(m, y, 1, PerturbMode::kRelative,
                                             {-1.0, 1.0}, 5, ra);
  REQUIRE(rel.recon.size() == 2);
  for (std::size_t p = 0; p < m.cfg.dim_x; ++p) CHECK(rel.recon[1][p] == rel.base[p]);

  Rng rb(15);
  PerturbationSweep std_mode = perturbation_sweep(m, y, 1, PerturbMode::kStd, {0.0}, 5, rb);
  for (std::size_t p = 0; p < m.cfg.dim_x; ++p) CHECK(std_mode.recon[0][p] == std_mode.base[p]);

  CHECK(rel.mu_dim == 0.8);
  CHECK(std_mode.sigma_dim == doctest::Approx(0.5).epsilon(1e-12));  // exp(log(0.25)/2)
}

TEST_CASE("perturbation_sweep: zero posterior mean makes relative sweeps constant") {
  PairedModel m = degenerate_model(0.0, std::log(0.25), 5.0, false, 16);
  Rng data(17), rng(18);
  Tensor y = rand_vec(m.cfg.dim_y, data);
  PerturbationSweep sweep = perturbation_sweep(m, y, 2, PerturbMode::kRelative,
                                               default_perturb_scales(), 4, rng);
  REQUIRE(sweep.recon.size() == 9);
  CHECK(sweep.mu_dim == 0.0);
  for (const Tensor& r : sweep.recon)
    for (std::size_t p = 0; p < m.cfg.dim_x; ++p) CHECK(r[p] == sweep.base[p]);
}

TEST_CASE("perturbation_sweep: affine decoder responds along one column") {
  PairedModel m = degenerate_model(1.5, -745.0, 5.0, true, 19);
  const std::size_t dim = 2;
  const Tensor& w = m.dec_x.head_weights[0].value();
  Rng data(20), rng(21);
  Tensor y = rand_vec(m.cfg.dim_y, data);

  std::vector<double> scales{-2.0, 0.5, 1.0, 3.0};
  PerturbationSweep sweep =
      perturbation_sweep(m, y, dim, PerturbMode::kRelative, scales, 1, rng);
  CHECK(sweep.mu_dim == doctest::Approx(1.5).epsilon(1e-12));
  CHECK(sweep.sigma_dim < 1e-150);
  for (std::size_t s = 0; s < scales.size(); ++s)
    for (std::size_t p = 0; p < m.cfg.dim_x; ++p) {
      double expect = (scales[s] - 1.0) * 1.5 * w[p * m.cfg.lx + dim];
      CHECK(sweep.recon[s][p] - sweep.base[p] == doctest::Approx(expect).epsilon(1e-9));
    }
}

TEST_CASE("perturbation_sweep: deterministic codes and argument validation") {
  Rng rng(22);
  PairedModel m = build_model(tiny_config(Variant::kPair), rng);
  Rng data(23), ra(24);
  Tensor y = rand_vec(m.cfg.dim_y, data);

  // std mode has sigma = 0 for a deterministic code: every scale is the base
  PerturbationSweep sweep =
      perturbation_sweep(m, y, 0, PerturbMode::kStd, default_perturb_scales(), 3, ra);
  CHECK(sweep.sigma_dim == 0.0);
  REQUIRE(sweep.recon.size() == 9);
  for (const Tensor& r : sweep.recon)
    for (std::size_t p = 0; p < m.cfg.dim_x; ++p) CHECK(r[p] == sweep.base[p]);

  Rng rb(25);
  CHECK_THROWS_AS(
      perturbation_sweep(m, y, m.cfg.lx, PerturbMode::kRelative, {1.0}, 3, rb), ValueError);
  CHECK_THROWS_AS(perturbation_sweep(m, y, 0, PerturbMode::kRelative, {}, 3, rb), ValueError);
  CHECK_THROWS_AS(perturbation_sweep(m, y, 0, PerturbMode::kRelative, {1.0}, 0, rb), ValueError);
}

TEST_CASE("perturb mode names round-trip") {
  CHECK(perturb_mode_name(PerturbMode::kRelative) == "relative");
  CHECK(perturb_mode_name(PerturbMode::kStd) == "std");
  CHECK(perturb_mode_from_name("relative") == PerturbMode::kRelative);
  CHECK(perturb_mode_from_name("std") == PerturbMode::kStd);
  CHECK_THROWS_AS(perturb_mode_from_name("huge"), ValueError);

  std::vector<double> s = default_perturb_scales();
  REQUIRE(s.size() == 9);
  for (int k = -4; k <= 4; ++k) CHECK(s[static_cast<std::size_t>(k + 4)] == k);
}

TEST_CASE("localization_ratio: responses confined to the corrupted region dominate") {
  const std::size_t dim = 1;
  std::vector<double> scales{0.0, 2.0};

  auto with_column = [&](double corrupted_w, double clean_w, std::uint64_t seed) {
    PairedModel m = degenerate_model(1.5, -745.0, 5.0, true, seed);
    Tensor& w = Var(m.dec_x.head_weights[0]).mutable_value();
    std::fill(w.values().begin(), w.values().end(), 0.0);
    for (std::size_t p = 0; p < m.cfg.dim_x; ++p)
      w[p * m.cfg.lx + dim] = (p == 0 || p == 2) ? corrupted_w : clean_w;
    return m;
  };
  CorruptionMask mask = make_mask(6, {0, 2});

  Rng data(26);
  Tensor y = rand_vec(5, data);

  Rng ra(27);
  PairedModel only_corr = with_column(1.0, 0.0, 28);
  CHECK(localization_ratio(only_corr, y, mask, dim, PerturbMode::kRelative, scales, 1, ra) >
        1e6);

  Rng rb(29);
  PairedModel uniform = with_column(0.2, 0.2, 30);
  CHECK(localization_ratio(uniform, y, mask, dim, PerturbMode::kRelative, scales, 1, rb) ==
        doctest::Approx(1.0).epsilon(1e-6));

  // squared-change ratio is (0.3 / 0.1)^2 = 9 by construction
  Rng rc(31);
  PairedModel split = with_column(0.3, 0.1, 32);
  CHECK(localization_ratio(split, y, mask, dim, PerturbMode::kRelative, scales, 1, rc) ==
        doctest::Approx(9.0).epsilon(1e-6));

  Rng rd(33);
  CHECK_THROWS_AS(localization_ratio(split, y, make_mask(6, {}), dim, PerturbMode::kRelative,
                                     scales, 1, rd),
                  ValueError);
  CHECK_THROWS_AS(localization_ratio(split, y, make_mask(7, {0}), dim, PerturbMode::kRelative,
                                     scales, 1, rd),
                  ShapeError);
}

TEST_CASE("consistently_active_dims: saturation, extinction, and the omega^n rate") {
  Rng data(34);
  Tensor y = rand_vec(5, data);

  PairedModel open = degenerate_model(0.5, 0.0, 5.0, false, 35);
  Rng ra(36);
  CHECK(consistently_active_dims(open, y, 20, ra) ==
        std::vector<std::size_t>{0, 1, 2, 3});

  PairedModel closed = degenerate_model(0.5, 0.0, -20.0, false, 37);
  Rng rb(38);
  CHECK(consistently_active_dims(closed, y, 50, rb).empty());

  // P(dim stays active over n draws) = omega^n
  const double omega = 0.9;
  PairedModel part = degenerate_model(0.5, 0.0, std::log(omega), false, 39);
  const std::size_t trials = 1000, n_draws = 30;
  Rng root(40);
  std::size_t hits = 0;
  for (std::size_t t = 0; t < trials; ++t) {
    Rng r = root.substream(t);
    hits += consistently_active_dims(part, y, n_draws, r).size();
  }
  double frac = static_cast<double>(hits) / static_cast<double>(trials * part.cfg.lx);
  double expect = std::pow(omega, static_cast<double>(n_draws));
  CHECK(std::abs(frac - expect) < 0.02);

  // ungated variants carry no gate draws
  Rng rng1(41), rng2(42), rng3(43);
  PairedModel pair_m = build_model(tiny_config(Variant::kPair), rng1);
  CHECK_THROWS_AS(consistently_active_dims(pair_m, y, 5, rng2), ValueError);
  PairedModel vpair_m = build_model(tiny_config(Variant::kVPair), rng3);
  Rng rng4(44);
  CHECK_THROWS_AS(consistently_active_dims(vpair_m, y, 5, rng4), ValueError);
  Rng rng5(45);
  CHECK_THROWS_AS(consistently_active_dims(open, y, 0, rng5), ValueError);
}

TEST_CASE("uq_suite: single-image aggregates decompose into the per-item diagnostics") {
  Rng rng(46);
  PairedModel m = build_model(tiny_config(), rng);
  fill_var(m.map->net.head_biases[2], 2.0);  // bias the gates open

  PairedDataset data = make_corrupted_data(1, 47);
  UqConfig cfg;
  cfg.n_samples = 16;
  cfg.seed = 99;

  UqReport rep = uq_suite(m, data, cfg);
  REQUIRE(rep.images.size() == 1);
  const UqImageRecord& rec = rep.images[0];
  CHECK(rec.index == 0);
  CHECK(rep.pearson == 0.0);  // undefined for one image
  CHECK(rep.median_ratio == rec.region_ratio);
  CHECK(rep.mean_ratio == rec.region_ratio);

  // replay image 0 with the same substream
  Tensor y = data.y_row(0), x = data.x_row(0);
  Rng item = Rng(cfg.seed).substream(0);
  VarianceMap vm = variance_map(m, y, cfg.n_samples, item);
  double se = 0.0, v = 0.0;
  for (std::size_t j = 0; j < vm.mean.size(); ++j) {
    double d = vm.mean[j] - x[j];
    se += d * d;
    v += vm.variance[j];
  }
  CHECK(rec.mse == se / static_cast<double>(vm.mean.size()));
  CHECK(rec.mean_variance == v / static_cast<double>(vm.variance.size()));
  CHECK(rec.region_ratio == region_variance_ratio(vm.variance, data.masks[0]));

  // candidate dims and the localization search replay through keyed substreams
  Rng item2 = Rng(cfg.seed).substream(0);
  std::vector<std::size_t> dims = consistently_active_dims(m, y, cfg.n_samples, item2);
  CHECK(rec.n_always_active == dims.size());
  double best = 0.0;
  std::ptrdiff_t best_dim = -1;
  Rng item3 = Rng(cfg.seed).substream(0);
  for (std::size_t d : dims) {
    Rng sweep_rng = item3.substream(d + 1);
    double r = localization_ratio(m, y, data.masks[0], d, cfg.mode, cfg.scales,
                                  cfg.n_samples, sweep_rng);
    if (best_dim < 0 || r > best) {
      best = r;
      best_dim = static_cast<std::ptrdiff_t>(d);
    }
  }
  CHECK(rec.best_dim == best_dim);
  CHECK(rec.max_localization_ratio == best);

  // histograms of a single image collapse to one occupied bin
  std::size_t ratio_total = 0, mse_total = 0;
  for (std::size_t c : rep.ratio_hist.counts) ratio_total += c;
  for (std::size_t c : rep.mse_hist.counts) mse_total += c;
  CHECK(ratio_total == 1);
  CHECK(mse_total == 1);
}

TEST_CASE("uq_suite: records are independent of the rest of the test set") {
  Rng rng(48);
  PairedModel m = build_model(tiny_config(), rng);
  fill_var(m.map->net.head_biases[2], 2.0);

  PairedDataset big = make_corrupted_data(3, 49);
  PairedDataset small;
  small.kind = big.kind;
  small.dim_x = big.dim_x;
  small.dim_y = big.dim_y;
  small.x = Tensor(Shape{1, big.dim_x});
  small.y = Tensor(Shape{1, big.dim_y});
  for (std::size_t j = 0; j < big.dim_x; ++j) small.x[j] = big.x[j];
  for (std::size_t j = 0; j < big.dim_y; ++j) small.y[j] = big.y[j];
  small.masks.push_back(big.masks[0]);

  UqConfig cfg;
  cfg.n_samples = 8;
  UqReport rep_big = uq_suite(m, big, cfg);
  UqReport rep_small = uq_suite(m, small, cfg);

  const UqImageRecord& a = rep_big.images[0];
  const UqImageRecord& b = rep_small.images[0];
  CHECK(a.mse == b.mse);
  CHECK(a.mean_variance == b.mean_variance);
  CHECK(a.region_ratio == b.region_ratio);
  CHECK(a.max_localization_ratio == b.max_localization_ratio);
  CHECK(a.best_dim == b.best_dim);
  CHECK(a.n_always_active == b.n_always_active);
}

TEST_CASE("uq_suite: widening the search can only raise the best ratio") {
  Rng rng(50);
  PairedModel m = build_model(tiny_config(), rng);
  fill_var(m.map->net.head_biases[2], 1.0);  // mostly-open gates, occasionally shut

  PairedDataset data = make_corrupted_data(1, 51);
  UqConfig narrow;
  narrow.n_samples = 8;
  UqConfig wide = narrow;
  wide.search_all_dims = true;

  UqReport rep_n = uq_suite(m, data, narrow);
  UqReport rep_w = uq_suite(m, data, wide);
  CHECK(rep_w.images[0].best_dim >= 0);
  CHECK(rep_w.images[0].max_localization_ratio >=
        rep_n.images[0].max_localization_ratio);
}

TEST_CASE("uq_suite: histograms partition the test set; ungated latents count as full") {
  Rng rng(52);
  PairedModel m = build_model(tiny_config(), rng);
  PairedDataset data = make_corrupted_data(6, 53);

  UqConfig cfg;
  cfg.n_samples = 8;
  cfg.localization = false;
  UqReport rep = uq_suite(m, data, cfg);
  REQUIRE(rep.images.size() == 6);
  std::size_t ratio_total = 0, mse_total = 0;
  for (std::size_t c : rep.ratio_hist.counts) ratio_total += c;
  for (std::size_t c : rep.mse_hist.counts) mse_total += c;
  CHECK(ratio_total == 6);
  CHECK(mse_total == 6);
  CHECK(rep.ratio_hist.lo <= rep.ratio_hist.hi);
  for (std::size_t i = 0; i < rep.images.size(); ++i) {
    CHECK(rep.images[i].index == i);
    CHECK(rep.images[i].best_dim == -1);
    CHECK(rep.images[i].max_localization_ratio == 0.0);
  }

  Rng rng2(54);
  PairedModel dense = build_model(tiny_config(Variant::kVPair), rng2);
  UqReport rep2 = uq_suite(dense, data, cfg);
  for (const auto& r : rep2.images) CHECK(r.n_always_active == dense.cfg.lx);
}

TEST_CASE("uq_suite: rejects unusable inputs and degenerate uncertainty") {
  Rng rng(55);
  PairedModel m = build_model(tiny_config(), rng);

  PairedDataset empty;
  UqConfig cfg;
  cfg.localization = false;
  CHECK_THROWS_AS(uq_suite(m, empty, cfg), ValueError);

  PairedDataset no_masks = make_corrupted_data(3, 56);
  no_masks.masks.clear();
  CHECK_THROWS_AS(uq_suite(m, no_masks, cfg), ValueError);

  PairedDataset data = make_corrupted_data(3, 57);
  UqConfig few = cfg;
  few.n_samples = 1;
  CHECK_THROWS_AS(uq_suite(m, data, few), ValueError);

  // zero posterior spread on every image: the error/uncertainty correlation
  // is undefined
  PairedModel fixed = degenerate_model(1.5, -745.0, 5.0, false, 58);
  UqConfig quiet = cfg;
  quiet.n_samples = 4;
  CHECK_THROWS_AS(uq_suite(fixed, data, quiet), ValueError);
}
