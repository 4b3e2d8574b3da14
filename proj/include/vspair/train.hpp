#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "vspair/dataset.hpp"
#include "vspair/model.hpp"

namespace vspair {

struct AdamConfig {
  double lr = 1e-4;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
};

// Adam with bias correction. State is one (m, v) pair per registered tensor;
// step() reads the accumulated gradients and updates values in place.
class Adam {
 public:
  Adam(std::vector<std::pair<std::string, Var>> params, AdamConfig cfg = {});

  // One update; rejects non-finite gradients naming the offending parameter.
  void step();
  void zero_grad();
  std::size_t steps_taken() const { return t_; }

 private:
  struct Slot {
    std::string name;
    Var param;
    Tensor m;
    Tensor v;
  };
  std::vector<Slot> slots_;
  AdamConfig cfg_;
  std::size_t t_ = 0;
};

// Everything a training run needs. Weight defaults suit the blind-inpainting
// setup of the vspair variant; override per run as needed.
struct TrainConfig {
  Variant variant = Variant::kVsPair;
  LossWeights weights;
  double alpha0 = 1.0;
  double beta0 = 127.0;
  double gate_temperature = 50.0;
  double gate_threshold = 0.5;
  double lr = 1e-4;
  std::size_t epochs = 100;
  std::size_t batch_size = 64;
  std::uint64_t seed = 1;
  // architecture
  std::size_t lx = 128;
  std::size_t ly = 32;
  std::vector<std::size_t> hidden_x{256};
  std::vector<std::size_t> hidden_y{256};
  std::vector<std::size_t> hidden_map{256};
  MapMode map_mode = MapMode::kParamMlp;
  std::size_t eval_samples = 30;

  ModelConfig model_config(std::size_t dim_x, std::size_t dim_y) const;
  void validate() const;
};

// Per-epoch record: loss terms averaged over the epoch's optimizer steps,
// mean gate occupancy of the drawn QoI latents, and the current rho.
struct EpochStats {
  std::size_t epoch = 0;
  double total = 0.0;
  double recon_x = 0.0;
  double kl_x = 0.0;
  double recon_y = 0.0;
  double kl_y = 0.0;
  double map_loss = 0.0;
  double hyperprior = 0.0;
  double mean_nnz = 0.0;
  double rho = 0.0;  // zero for variants without a sparsity prior
};

// Minibatch training with per-epoch reshuffling; loss is the batch mean of
// the per-sample composite objective. Deterministic: one run of (config,
// dataset) reproduces parameters bitwise.
std::vector<EpochStats> train(PairedModel& model, const PairedDataset& data,
                              const TrainConfig& cfg);

struct EvalMetrics {
  double mse = 0.0;          // single-sample reconstruction, per-pixel
  double mse_n = 0.0;        // n-sample posterior-mean reconstruction
  double mse_sample_mean = 0.0;  // mean over all n per-sample MSEs
  double avg_nnz = 0.0;      // nonzero coordinates per drawn QoI latent
  double sparsity = 0.0;     // fraction of coordinates pinned to zero, in [0, 1]
  double psnr = 0.0;         // dB from mse, capped at 99
  std::size_t n_samples = 0;
  std::size_t n_items = 0;
};

// Test-set metrics via invert(); per-item substreams keep results independent
// of iteration order. mse_n <= mse_sample_mean always (posterior-mean bound).
EvalMetrics evaluate(const PairedModel& model, const PairedDataset& data,
                     std::size_t n_samples, std::uint64_t seed = 0x5eed);

}  // namespace vspair
