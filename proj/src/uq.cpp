#include "vspair/uq.hpp"

#include <algorithm>
#include <cmath>
#include <variant>

#include "vspair/autodiff.hpp"

namespace vspair {

namespace {

// Column-wise mean and unbiased variance of an (n x d) sample matrix.
VarianceMap column_moments(const Tensor& rows) {
  std::size_t n = rows.dim(0), d = rows.dim(1);
  VarianceMap out{Tensor(Shape{d}), Tensor(Shape{d})};
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = 0; j < d; ++j) out.mean[j] += rows[i * d + j];
  for (std::size_t j = 0; j < d; ++j) out.mean[j] /= static_cast<double>(n);
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = 0; j < d; ++j) {
      double c = rows[i * d + j] - out.mean[j];
      out.variance[j] += c * c;
    }
  for (std::size_t j = 0; j < d; ++j) out.variance[j] /= static_cast<double>(n - 1);
  return out;
}

void require_two_regions(const CorruptionMask& mask, std::size_t want, const char* who) {
  if (mask.on.size() != want)
    throw ShapeError(std::string(who) + ": mask has " + std::to_string(mask.on.size()) +
                     " pixels, expected " + std::to_string(want));
  std::size_t pop = mask.popcount();
  if (pop == 0 || pop == mask.on.size())
    throw ValueError(std::string(who) + ": mask must contain both regions");
}

// The predicted QoI posterior flattened to plain vectors. sigma is zero and
// omega empty for deterministic codes; omega empty for dense posteriors.
struct FlatPosterior {
  Tensor mu;
  Tensor sigma;
  Tensor omega;
  bool stochastic = true;
};

FlatPosterior flatten_posterior(const PairedModel& m, const Tensor& y) {
  PredictedParams p = predict_x_params(m, y);
  FlatPosterior out;
  if (const auto* code = std::get_if<Tensor>(&p)) {
    out.mu = *code;
    out.sigma = Tensor(out.mu.shape());
    out.stochastic = false;
  } else if (const auto* g = std::get_if<std::pair<Tensor, Tensor>>(&p)) {
    out.mu = g->first;
    out.sigma = Tensor(out.mu.shape());
    for (std::size_t j = 0; j < out.sigma.size(); ++j)
      out.sigma[j] = std::exp(0.5 * g->second[j]);
  } else if (const auto* ss = std::get_if<std::array<Tensor, 3>>(&p)) {
    out.mu = (*ss)[0];
    out.sigma = Tensor(out.mu.shape());
    for (std::size_t j = 0; j < out.sigma.size(); ++j)
      out.sigma[j] = std::exp(0.5 * (*ss)[1][j]);
    out.omega = (*ss)[2];
  } else {
    throw ValueError("perturbation sweep: no predicted posterior for this map");
  }
  return out;
}

struct LocalizationResult {
  double ratio = 0.0;
  double corrupted_change = 0.0;
};

LocalizationResult localization_impl(const PairedModel& m, const Tensor& y,
                                     const CorruptionMask& mask, std::size_t dim,
                                     PerturbMode mode, const std::vector<double>& scales,
                                     std::size_t n, Rng& rng) {
  require_two_regions(mask, m.cfg.dim_x, "localization_ratio");
  PerturbationSweep sweep = perturbation_sweep(m, y, dim, mode, scales, n, rng);

  std::size_t d = m.cfg.dim_x;
  std::size_t n_corr = mask.popcount();
  std::size_t n_unc = d - n_corr;
  double corr = 0.0, unc = 0.0;
  for (const Tensor& recon : sweep.recon)
    for (std::size_t j = 0; j < d; ++j) {
      double diff = recon[j] - sweep.base[j];
      (mask.on[j] ? corr : unc) += diff * diff;
    }
  double per = static_cast<double>(sweep.recon.size());
  double corr_mean = corr / (per * static_cast<double>(n_corr));
  double unc_mean = unc / (per * static_cast<double>(n_unc));
  return {corr_mean / (unc_mean + 1e-12), corr_mean};
}

double median(std::vector<double> v) {
  std::sort(v.begin(), v.end());
  std::size_t n = v.size();
  return n % 2 ? v[n / 2] : 0.5 * (v[n / 2 - 1] + v[n / 2]);
}

UqHistogram histogram(const std::vector<double>& v, std::size_t bins) {
  UqHistogram h;
  h.lo = *std::min_element(v.begin(), v.end());
  h.hi = *std::max_element(v.begin(), v.end());
  h.counts.assign(bins, 0);
  double span = h.hi - h.lo;
  for (double x : v) {
    std::size_t b = span > 0.0 ? static_cast<std::size_t>((x - h.lo) / span *
                                                          static_cast<double>(bins))
                               : 0;
    h.counts[std::min(b, bins - 1)] += 1;
  }
  return h;
}

}  // namespace

VarianceMap variance_map(const PairedModel& m, const Tensor& y, std::size_t n, Rng& rng) {
  if (n < 2) throw ValueError("variance_map: need at least 2 samples");
  InvertResult inv = invert(m, y, n, rng);
  return column_moments(inv.xhat);
}

double pearson_r(const std::vector<double>& u, const std::vector<double>& v) {
  if (u.size() != v.size())
    throw ShapeError("pearson_r: length mismatch " + std::to_string(u.size()) + " vs " +
                     std::to_string(v.size()));
  if (u.size() < 2) throw ValueError("pearson_r: need at least 2 points");
  double n = static_cast<double>(u.size());
  double mu = 0.0, mv = 0.0;
  for (std::size_t i = 0; i < u.size(); ++i) {
    mu += u[i];
    mv += v[i];
  }
  mu /= n;
  mv /= n;
  double suu = 0.0, svv = 0.0, suv = 0.0;
  for (std::size_t i = 0; i < u.size(); ++i) {
    double du = u[i] - mu, dv = v[i] - mv;
    suu += du * du;
    svv += dv * dv;
    suv += du * dv;
  }
  if (suu == 0.0 || svv == 0.0) throw ValueError("pearson_r: zero variance");
  return suv / std::sqrt(suu * svv);
}

double region_variance_ratio(const Tensor& variance, const CorruptionMask& mask) {
  require_two_regions(mask, variance.size(), "region_variance_ratio");
  double corr = 0.0, unc = 0.0;
  std::size_t n_corr = 0;
  for (std::size_t j = 0; j < variance.size(); ++j) {
    if (mask.on[j]) {
      corr += variance[j];
      ++n_corr;
    } else {
      unc += variance[j];
    }
  }
  corr /= static_cast<double>(n_corr);
  unc /= static_cast<double>(variance.size() - n_corr);
  return corr / (unc + 1e-12);
}

std::string perturb_mode_name(PerturbMode m) {
  return m == PerturbMode::kRelative ? "relative" : "std";
}

PerturbMode perturb_mode_from_name(const std::string& name) {
  if (name == "relative") return PerturbMode::kRelative;
  if (name == "std") return PerturbMode::kStd;
  throw ValueError("unknown perturbation mode '" + name + "' (expected relative or std)");
}

std::vector<double> default_perturb_scales() {
  return {-4.0, -3.0, -2.0, -1.0, 0.0, 1.0, 2.0, 3.0, 4.0};
}

PerturbationSweep perturbation_sweep(const PairedModel& m, const Tensor& y, std::size_t dim,
                                     PerturbMode mode, const std::vector<double>& scales,
                                     std::size_t n, Rng& rng) {
  if (scales.empty()) throw ValueError("perturbation_sweep: scales must be nonempty");
  if (n == 0) throw ValueError("perturbation_sweep: need at least 1 sample");
  if (dim >= m.cfg.lx)
    throw ValueError("perturbation_sweep: dim " + std::to_string(dim) + " out of range for lx " +
                     std::to_string(m.cfg.lx));

  FlatPosterior post = flatten_posterior(m, y);
  std::size_t lx = m.cfg.lx;
  bool gated = post.omega.size() > 0;

  // Common random numbers: one gate / noise block shared by every scale, so
  // reconstructions differ only through the perturbed coordinate. Gates use
  // the thresholded-relaxation identity: open iff eta > 1 - omega + shift.
  Tensor eta;
  if (gated) {
    eta = Tensor(Shape{n, lx});
    for (std::size_t i = 0; i < eta.size(); ++i) eta[i] = rng.uniform();
  }
  Tensor eps;
  if (post.stochastic) {
    eps = Tensor(Shape{n, lx});
    for (std::size_t i = 0; i < eps.size(); ++i) eps[i] = rng.gaussian();
  }
  double th = m.cfg.gate.threshold;
  double gate_shift = gated ? std::log(th / (1.0 - th)) / m.cfg.gate.temperature : 0.0;

  auto decode_mean = [&](double mu_dim) {
    Tensor z(Shape{n, lx});
    for (std::size_t i = 0; i < n; ++i)
      for (std::size_t j = 0; j < lx; ++j) {
        bool open = j == dim || !gated || eta[i * lx + j] > 1.0 - post.omega[j] + gate_shift;
        if (!open) continue;  // leaves the literal +0.0 fill
        double mj = j == dim ? mu_dim : post.mu[j];
        z[i * lx + j] = post.stochastic ? mj + post.sigma[j] * eps[i * lx + j] : mj;
      }
    NoGradGuard ng;
    Tensor xhat = decode_x(m, Var::constant(std::move(z))).value();
    return column_moments(xhat).mean;
  };

  PerturbationSweep sweep;
  sweep.scales = scales;
  sweep.mu_dim = post.mu[dim];
  sweep.sigma_dim = post.sigma[dim];
  sweep.base = decode_mean(sweep.mu_dim);
  sweep.recon.reserve(scales.size());
  for (double s : scales) {
    double mu_dim = mode == PerturbMode::kRelative ? s * sweep.mu_dim
                                                    : sweep.mu_dim + s * sweep.sigma_dim;
    sweep.recon.push_back(decode_mean(mu_dim));
  }
  return sweep;
}

double localization_ratio(const PairedModel& m, const Tensor& y, const CorruptionMask& mask,
                          std::size_t dim, PerturbMode mode, const std::vector<double>& scales,
                          std::size_t n, Rng& rng) {
  return localization_impl(m, y, mask, dim, mode, scales, n, rng).ratio;
}

std::vector<std::size_t> consistently_active_dims(const PairedModel& m, const Tensor& y,
                                                  std::size_t n, Rng& rng) {
  if (n == 0) throw ValueError("consistently_active_dims: need at least 1 draw");
  InvertResult inv = invert(m, y, n, rng);
  if (inv.masks.size() == 0)
    throw ValueError("consistently_active_dims: " + variant_name(m.cfg.variant) +
                     " draws carry no gates");
  std::size_t lx = inv.masks.dim(1);
  std::vector<std::size_t> dims;
  for (std::size_t j = 0; j < lx; ++j) {
    bool all_on = true;
    for (std::size_t i = 0; i < n && all_on; ++i) all_on = inv.masks[i * lx + j] == 1.0;
    if (all_on) dims.push_back(j);
  }
  return dims;
}

UqReport uq_suite(const PairedModel& m, const PairedDataset& data, const UqConfig& cfg) {
  if (data.size() == 0) throw ValueError("uq_suite: empty test set");
  if (data.masks.size() != data.size())
    throw ValueError("uq_suite: test set needs one corruption mask per item");
  if (cfg.n_samples < 2) throw ValueError("uq_suite: need at least 2 samples");

  Rng base(cfg.seed);
  UqReport rep;
  rep.images.reserve(data.size());

  for (std::size_t i = 0; i < data.size(); ++i) {
    Rng item = base.substream(i);
    Tensor y = data.y_row(i);
    Tensor x = data.x_row(i);

    InvertResult inv = invert(m, y, cfg.n_samples, item);
    VarianceMap vm = column_moments(inv.xhat);

    UqImageRecord rec;
    rec.index = i;
    double se = 0.0;
    for (std::size_t j = 0; j < vm.mean.size(); ++j) {
      double d = vm.mean[j] - x[j];
      se += d * d;
    }
    rec.mse = se / static_cast<double>(vm.mean.size());
    double v = 0.0;
    for (std::size_t j = 0; j < vm.variance.size(); ++j) v += vm.variance[j];
    rec.mean_variance = v / static_cast<double>(vm.variance.size());
    rec.region_ratio = region_variance_ratio(vm.variance, data.masks[i]);

    std::vector<std::size_t> candidates;
    if (inv.masks.size() > 0) {
      std::size_t lx = inv.masks.dim(1);
      for (std::size_t j = 0; j < lx; ++j) {
        bool all_on = true;
        for (std::size_t s = 0; s < cfg.n_samples && all_on; ++s)
          all_on = inv.masks[s * lx + j] == 1.0;
        if (all_on) candidates.push_back(j);
      }
      rec.n_always_active = candidates.size();
    } else {
      rec.n_always_active = m.cfg.lx;  // ungated: every dim is always on
      for (std::size_t j = 0; j < m.cfg.lx; ++j) candidates.push_back(j);
    }

    if (cfg.localization) {
      if (cfg.search_all_dims) {
        candidates.resize(m.cfg.lx);
        for (std::size_t j = 0; j < m.cfg.lx; ++j) candidates[j] = j;
      }
      if (candidates.size() > cfg.max_search_dims) candidates.resize(cfg.max_search_dims);
      for (std::size_t d : candidates) {
        Rng sweep_rng = item.substream(d + 1);
        LocalizationResult lr =
            localization_impl(m, y, data.masks[i], d, cfg.mode, cfg.scales, cfg.n_samples,
                              sweep_rng);
        if (rec.best_dim < 0 || lr.ratio > rec.max_localization_ratio) {
          rec.max_localization_ratio = lr.ratio;
          rec.best_dim = static_cast<std::ptrdiff_t>(d);
          rec.corrupted_mse_change = lr.corrupted_change;
        }
      }
    }
    rep.images.push_back(rec);
  }

  std::vector<double> mses, vars, ratios;
  for (const auto& r : rep.images) {
    mses.push_back(r.mse);
    vars.push_back(r.mean_variance);
    ratios.push_back(r.region_ratio);
  }
  if (rep.images.size() >= 2) rep.pearson = pearson_r(mses, vars);
  rep.median_ratio = median(ratios);
  rep.mean_ratio = 0.0;
  for (double r : ratios) rep.mean_ratio += r;
  rep.mean_ratio /= static_cast<double>(ratios.size());
  rep.ratio_hist = histogram(ratios, cfg.hist_bins);
  rep.mse_hist = histogram(mses, cfg.hist_bins);
  return rep;
}

}  // namespace vspair
