#pragma once

#include <array>
#include <cstddef>
#include <optional>
#include <string>
#include <utility>
#include <variant>
#include <vector>

#include "vspair/distributions.hpp"

namespace vspair {

// Fully connected stack with silu hidden activations and 1..3 linear output
// heads sharing the last hidden representation. Weights are (out x in) and
// initialized uniformly in +-sqrt(1/fan_in); biases start at zero.
struct Mlp {
  std::vector<Var> weights;  // hidden stack
  std::vector<Var> biases;
  std::vector<Var> head_weights;
  std::vector<Var> head_biases;
  std::size_t in_dim = 0;
  std::size_t out_dim = 0;

  static Mlp make(std::size_t in_dim, const std::vector<std::size_t>& hidden,
                  std::size_t out_dim, std::size_t n_heads, Rng& rng);

  // x is (batch x in_dim); returns one (batch x out_dim) tensor per head.
  std::vector<Var> forward(const Var& x) const;

  void collect_params(const std::string& prefix,
                      std::vector<std::pair<std::string, Var>>& out) const;
};

enum class Variant { kPair, kVPair, kSvae, kVsPair };
enum class MapMode { kLinearCode, kParamMlp, kSampleMatch };

std::string variant_name(Variant v);
Variant variant_from_name(const std::string& name);
std::string map_mode_name(MapMode m);
MapMode map_mode_from_name(const std::string& name);

// Inverse latent map M<-. In param mode it consumes the observation
// posterior (mu_y | log_var_y) and predicts QoI posterior parameters (two
// heads for a Gaussian target, three when the target is spike-and-slab);
// in code/sample modes it maps latent points directly.
struct LatentMap {
  MapMode mode = MapMode::kParamMlp;
  Mlp net;

  // Predicted parameters from observation-posterior moments (param mode).
  std::vector<Var> predict_params(const DiagGaussianParams& obs) const;
  // Mapped latent point (code / sample-match modes).
  Var map_point(const Var& z_y) const;
};

struct ModelConfig {
  Variant variant = Variant::kVsPair;
  std::size_t dim_x = 784;  // flattened QoI size
  std::size_t dim_y = 784;  // flattened observation size
  std::size_t lx = 128;
  std::size_t ly = 32;
  std::vector<std::size_t> hidden_x{256};
  std::vector<std::size_t> hidden_y{256};
  std::vector<std::size_t> hidden_map{256};
  MapMode map_mode = MapMode::kParamMlp;
  GateConfig gate;
  double alpha0 = 1.0;
  double beta0 = 127.0;
};

// The paired model family.
//   pair   deterministic autoencoders + linear latent code map
//   vpair  Gaussian VAEs on both sides + parameter map
//   svae   spike-and-slab encoder reading y directly, decoding the QoI
//   vspair spike-and-slab QoI side, Gaussian observation side, parameter map
// For svae, enc_x consumes dim_y inputs and dec_x emits dim_x outputs; the
// y-side networks and the map are absent.
struct PairedModel {
  ModelConfig cfg;
  Mlp enc_x;
  Mlp dec_x;
  std::optional<Mlp> enc_y;
  std::optional<Mlp> dec_y;
  std::optional<LatentMap> map;
  std::optional<SparsityPrior> prior;

  std::vector<std::pair<std::string, Var>> named_params() const;
  void zero_grad() const;
};

PairedModel build_model(const ModelConfig& cfg, Rng& rng);

// Encoder output, depending on the variant.
using EncodeResult = std::variant<Var, DiagGaussianParams, SpikeSlabParams>;

EncodeResult encode_x(const PairedModel& m, const Var& x);
EncodeResult encode_y(const PairedModel& m, const Var& y);
Var decode_x(const PairedModel& m, const Var& z);
Var decode_y(const PairedModel& m, const Var& z);

// ---- losses; reconstruction errors are summed over elements, so a batch of
// rows yields the sum of per-sample losses (callers divide by batch size) ----

// 1/2 ||x - xt||^2 + gamma * gaussian_kl(p).
Var vae_elbo_loss(const DiagGaussianParams& p, const Var& x, const Var& xt, double gamma);

// 1/2 ||x - xt||^2 + gamma_x * spike_slab_kl + lambda_rho * beta_hyperprior.
Var svae_elbo_loss(const SpikeSlabParams& p, const Var& x, const Var& xt,
                   const SparsityPrior& prior, double gamma_x, double lambda_rho);

// || pred - target ||^2 over the stacked (mu, log_var [, omega]) blocks plus
// lambda_b * sum omega_hat (1 - omega_hat). Variance blocks are compared in
// log space. The omega pair is present for spike-and-slab targets only.
Var map_param_loss(const std::vector<Var>& pred, const std::vector<Var>& target,
                   double lambda_b);

// || mapped - z_x ||^2 for sample-matching maps.
Var map_sample_loss(const Var& mapped, const Var& z_x);

// Deterministic-variant losses. The forward surrogate slot is kept for shape
// compatibility but is not modeled and is always zero.
struct PairLossTerms {
  Var rec_x;
  Var rec_y;
  Var fwd;
  Var inv;
};
PairLossTerms pair_losses(const PairedModel& m, const Var& x, const Var& y);

struct LossWeights {
  double lambda1 = 1.0;
  double lambda2 = 0.5;
  double lambda3 = 1.0;
  double lambda_rho = 1.4;
  double lambda_b = 0.05;
  double gamma_x = 1.0;
  double gamma_y = 0.1;
};

// Per-term values of one composite-loss evaluation (already weighted into
// total; the fields store the raw unweighted terms).
struct LossBreakdown {
  double total = 0.0;
  double recon_x = 0.0;
  double kl_x = 0.0;
  double recon_y = 0.0;
  double kl_y = 0.0;
  double map_loss = 0.0;
  double hyperprior = 0.0;
  double mean_nnz = 0.0;  // of the QoI-side draw; lx for dense variants
};

// Composite objective for the paired variational variants:
//   lambda1 * ELBO_x + lambda2 * ELBO_y + lambda3 * map loss
//   + lambda_rho * beta hyperprior            (spike-and-slab x-side only)
// Draw order per call: x-side gates (one uniform per coordinate), x-side
// slab noise, then y-side noise. Rejects the deterministic pair variant.
std::pair<Var, LossBreakdown> vspair_total_loss(const PairedModel& m, const Var& x,
                                                const Var& y, const LossWeights& w, Rng& rng);

// Variant-dispatched training objective (handles all four variants).
std::pair<Var, LossBreakdown> training_loss(const PairedModel& m, const Var& x, const Var& y,
                                            const LossWeights& w, Rng& rng);

// Posterior parameters predicted for the QoI latent given an observation.
// monostate marks sample-matching maps, which predict points, not parameters.
using PredictedParams = std::variant<std::monostate,
                                     Tensor,                       // deterministic code
                                     std::pair<Tensor, Tensor>,    // mu, log_var
                                     std::array<Tensor, 3>>;       // mu, log_var, omega

// Draws from the predicted QoI posterior decoded to QoI space.
struct InvertResult {
  Tensor xhat;   // n x dim_x
  Tensor zx;     // n x lx, exact zeros at closed gates
  Tensor masks;  // n x lx hard gate draws; empty for dense variants
  PredictedParams params;
};

// y -> encode -> map -> sample n draws -> decode. For svae the encoder reads
// y directly; for pair the single deterministic solution is repeated n times.
InvertResult invert(const PairedModel& m, const Tensor& y, std::size_t n_samples, Rng& rng);

// Predicted QoI-latent posterior parameters for a single observation, as
// row vectors. Sample-matching maps predict no distribution; they yield the
// deterministic-code alternative: the mapped image of the observation-
// posterior mean.
PredictedParams predict_x_params(const PairedModel& m, const Tensor& y);

}  // namespace vspair
