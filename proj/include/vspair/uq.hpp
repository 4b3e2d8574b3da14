#pragma once

#include <cstddef>
#include <cstdint>
#include <string>
#include <vector>

#include "vspair/dataset.hpp"
#include "vspair/model.hpp"
#include "vspair/rng.hpp"
#include "vspair/tensor.hpp"

namespace vspair {

// ---- per-observation diagnostics -------------------------------------------

// Mean and unbiased per-pixel variance over n decoded posterior samples.
struct VarianceMap {
  Tensor mean;      // dim_x
  Tensor variance;  // dim_x
};
VarianceMap variance_map(const PairedModel& m, const Tensor& y, std::size_t n, Rng& rng);

// Standard Pearson coefficient; rejects mismatched lengths, fewer than two
// points, and zero variance in either argument.
double pearson_r(const std::vector<double>& u, const std::vector<double>& v);

// mean(variance | corrupted) / (mean(variance | uncorrupted) + 1e-12).
// The mask must contain both regions.
double region_variance_ratio(const Tensor& variance, const CorruptionMask& mask);

// How one latent coordinate's posterior mean is swept:
//   relative  mu_dim -> scale * mu_dim          (identity at scale = 1)
//   std       mu_dim -> mu_dim + scale * sigma_dim  (identity at scale = 0)
enum class PerturbMode { kRelative, kStd };
std::string perturb_mode_name(PerturbMode m);
PerturbMode perturb_mode_from_name(const std::string& name);

// Nine points, -4 .. +4, for either mode.
std::vector<double> default_perturb_scales();

// Mean reconstructions with one latent coordinate's posterior mean replaced
// per scale, its gate held open, and common random numbers across scales, so
// reconstructions differ only through the perturbed coordinate. `base` is the
// unperturbed reconstruction under the same draws.
struct PerturbationSweep {
  std::vector<double> scales;
  std::vector<Tensor> recon;  // one (dim_x) mean reconstruction per scale
  Tensor base;                // unperturbed, same draws
  double mu_dim = 0.0;
  double sigma_dim = 0.0;  // zero for deterministic codes
};
PerturbationSweep perturbation_sweep(const PairedModel& m, const Tensor& y, std::size_t dim,
                                     PerturbMode mode, const std::vector<double>& scales,
                                     std::size_t n, Rng& rng);

// (mean over scales of the squared reconstruction change on corrupted pixels)
// / (same on uncorrupted pixels + 1e-12).
double localization_ratio(const PairedModel& m, const Tensor& y, const CorruptionMask& mask,
                          std::size_t dim, PerturbMode mode, const std::vector<double>& scales,
                          std::size_t n, Rng& rng);

// Latent dims whose gate opened in every one of n posterior draws. Only
// meaningful for gated QoI latents; other variants are rejected.
std::vector<std::size_t> consistently_active_dims(const PairedModel& m, const Tensor& y,
                                                  std::size_t n, Rng& rng);

// ---- whole-test-set suite ---------------------------------------------------

struct UqImageRecord {
  std::size_t index = 0;
  double mse = 0.0;            // n-sample mean reconstruction vs ground truth
  double mean_variance = 0.0;  // mean of the variance map
  double region_ratio = 0.0;
  double max_localization_ratio = 0.0;  // 0 when the search is disabled
  std::ptrdiff_t best_dim = -1;         // -1 when no dim was searched
  double corrupted_mse_change = 0.0;    // numerator at the best dim
  std::size_t n_always_active = 0;      // lx for ungated latents
};

struct UqHistogram {
  double lo = 0.0;
  double hi = 0.0;
  std::vector<std::size_t> counts;  // sums to the image count
};

struct UqConfig {
  std::size_t n_samples = 30;
  bool localization = true;         // the sweep search dominates the runtime
  bool search_all_dims = false;     // default: only consistently active dims
  std::size_t max_search_dims = 16; // per image, keeps the search bounded
  PerturbMode mode = PerturbMode::kRelative;
  std::vector<double> scales = default_perturb_scales();
  std::uint64_t seed = 0x5eed;
  std::size_t hist_bins = 20;
};

struct UqReport {
  std::vector<UqImageRecord> images;
  double pearson = 0.0;  // corr(per-image MSE, per-image mean variance)
  double median_ratio = 0.0;
  double mean_ratio = 0.0;
  UqHistogram ratio_hist;
  UqHistogram mse_hist;
};

// Per-image posterior diagnostics over a corrupted test set, aggregated into
// the uncertainty/error correlation and region-ratio statistics. Requires
// corruption masks; per-image Rng substreams keep records independent of
// iteration order.
UqReport uq_suite(const PairedModel& m, const PairedDataset& data, const UqConfig& cfg);

}  // namespace vspair
