#include "vspair/train.hpp"

#include <cmath>

namespace vspair {

// ----------------------------------------------------------------------- Adam

Adam::Adam(std::vector<std::pair<std::string, Var>> params, AdamConfig cfg) : cfg_(cfg) {
  if (!(cfg.lr > 0.0)) throw ValueError("adam: lr must be positive");
  slots_.reserve(params.size());
  for (auto& [name, p] : params)
    slots_.push_back(Slot{name, p, Tensor::zeros_like(p.value()), Tensor::zeros_like(p.value())});
}

void Adam::step() {
  ++t_;
  double bc1 = 1.0 - std::pow(cfg_.beta1, static_cast<double>(t_));
  double bc2 = 1.0 - std::pow(cfg_.beta2, static_cast<double>(t_));
  for (Slot& s : slots_) {
    Tensor g = s.param.grad();
    Tensor& w = s.param.mutable_value();
    for (std::size_t i = 0; i < g.size(); ++i) {
      if (!std::isfinite(g[i]))
        throw ValueError("adam: non-finite gradient in parameter '" + s.name + "'");
      s.m[i] = cfg_.beta1 * s.m[i] + (1.0 - cfg_.beta1) * g[i];
      s.v[i] = cfg_.beta2 * s.v[i] + (1.0 - cfg_.beta2) * g[i] * g[i];
      w[i] -= cfg_.lr * (s.m[i] / bc1) / (std::sqrt(s.v[i] / bc2) + cfg_.eps);
    }
  }
}

void Adam::zero_grad() {
  for (Slot& s : slots_) s.param.zero_grad();
}

// ---------------------------------------------------------------- TrainConfig

ModelConfig TrainConfig::model_config(std::size_t dim_x, std::size_t dim_y) const {
  ModelConfig mc;
  mc.variant = variant;
  mc.dim_x = dim_x;
  mc.dim_y = dim_y;
  mc.lx = lx;
  mc.ly = ly;
  mc.hidden_x = hidden_x;
  mc.hidden_y = hidden_y;
  mc.hidden_map = hidden_map;
  mc.map_mode = map_mode;
  mc.gate.temperature = gate_temperature;
  mc.gate.threshold = gate_threshold;
  mc.alpha0 = alpha0;
  mc.beta0 = beta0;
  return mc;
}

void TrainConfig::validate() const {
  if (!(lr > 0.0)) throw ValueError("config: lr must be positive");
  if (batch_size == 0) throw ValueError("config: batch_size must be positive");
  if (!(gate_temperature > 0.0)) throw ValueError("config: gate_temperature must be positive");
  if (!(gate_threshold > 0.0 && gate_threshold < 1.0))
    throw ValueError("config: gate_threshold must lie in (0, 1)");
  if (!(alpha0 > 0.0) || !(beta0 > 0.0))
    throw ValueError("config: alpha0 and beta0 must be positive");
  if (lx == 0 || ly == 0) throw ValueError("config: latent sizes must be positive");
  if (eval_samples == 0) throw ValueError("config: eval_samples must be positive");
}

// ---------------------------------------------------------------------- train

std::vector<EpochStats> train(PairedModel& model, const PairedDataset& data,
                              const TrainConfig& cfg) {
  cfg.validate();
  std::size_t n = data.size();
  if (n == 0) throw ValueError("train: empty dataset");
  if (data.dim_x != model.cfg.dim_x || data.dim_y != model.cfg.dim_y)
    throw ShapeError("train: dataset dims (" + std::to_string(data.dim_x) + ", " +
                     std::to_string(data.dim_y) + ") vs model dims (" +
                     std::to_string(model.cfg.dim_x) + ", " + std::to_string(model.cfg.dim_y) +
                     ")");

  Adam opt(model.named_params(), AdamConfig{.lr = cfg.lr});
  Rng shuffle_rng = Rng(cfg.seed).substream(1);
  Rng noise_rng = Rng(cfg.seed).substream(2);

  std::vector<std::size_t> order(n);
  for (std::size_t i = 0; i < n; ++i) order[i] = i;

  std::vector<EpochStats> history;
  history.reserve(cfg.epochs);
  for (std::size_t epoch = 0; epoch < cfg.epochs; ++epoch) {
    // Fisher-Yates on the item order, one uniform per position.
    for (std::size_t i = n - 1; i > 0; --i)
      std::swap(order[i], order[shuffle_rng.next_below(i + 1)]);

    EpochStats st;
    st.epoch = epoch;
    std::size_t steps = 0;
    for (std::size_t start = 0; start < n; start += cfg.batch_size) {
      std::size_t stop = std::min(start + cfg.batch_size, n);
      std::vector<std::size_t> idx(order.begin() + static_cast<std::ptrdiff_t>(start),
                                   order.begin() + static_cast<std::ptrdiff_t>(stop));
      double bsz = static_cast<double>(idx.size());
      Var bx = Var::constant(gather_rows(data.x, idx));
      Var by = Var::constant(gather_rows(data.y, idx));

      opt.zero_grad();
      auto [loss_sum, bd] = training_loss(model, bx, by, cfg.weights, noise_rng);
      Var loss = loss_sum * (1.0 / bsz);  // batch mean of per-sample objectives
      backward(loss);
      opt.step();

      st.total += bd.total / bsz;
      st.recon_x += bd.recon_x / bsz;
      st.kl_x += bd.kl_x / bsz;
      st.recon_y += bd.recon_y / bsz;
      st.kl_y += bd.kl_y / bsz;
      st.map_loss += bd.map_loss / bsz;
      st.hyperprior += bd.hyperprior;  // already per run, not per sample
      st.mean_nnz += bd.mean_nnz;
      ++steps;
    }
    double inv = 1.0 / static_cast<double>(steps);
    st.total *= inv;
    st.recon_x *= inv;
    st.kl_x *= inv;
    st.recon_y *= inv;
    st.kl_y *= inv;
    st.map_loss *= inv;
    st.hyperprior *= inv;
    st.mean_nnz *= inv;
    if (model.prior) st.rho = model.prior->rho().value().item();
    history.push_back(st);
  }
  return history;
}

// ------------------------------------------------------------------- evaluate

EvalMetrics evaluate(const PairedModel& model, const PairedDataset& data, std::size_t n_samples,
                     std::uint64_t seed) {
  if (n_samples == 0) throw ValueError("evaluate: n_samples must be positive");
  std::size_t n = data.size();
  if (n == 0) throw ValueError("evaluate: empty dataset");
  NoGradGuard ng;

  Rng root(seed);
  EvalMetrics out;
  out.n_samples = n_samples;
  out.n_items = n;
  double dim = static_cast<double>(data.dim_x);
  for (std::size_t i = 0; i < n; ++i) {
    Rng rng = root.substream(i);  // order-independent per item
    Tensor xi = data.x_row(i);
    InvertResult r = invert(model, data.y_row(i), n_samples, rng);

    double first = 0.0, per_sample = 0.0;
    for (std::size_t s = 0; s < n_samples; ++s) {
      double se = 0.0;
      for (std::size_t p = 0; p < data.dim_x; ++p) {
        double e = r.xhat[s * data.dim_x + p] - xi[p];
        se += e * e;
      }
      if (s == 0) first = se / dim;
      per_sample += se / dim;
    }
    double mean_mse = 0.0;
    for (std::size_t p = 0; p < data.dim_x; ++p) {
      double acc = 0.0;
      for (std::size_t s = 0; s < n_samples; ++s) acc += r.xhat[s * data.dim_x + p];
      double e = acc / static_cast<double>(n_samples) - xi[p];
      mean_mse += e * e;
    }
    out.mse += first;
    out.mse_sample_mean += per_sample / static_cast<double>(n_samples);
    out.mse_n += mean_mse / dim;

    double nnz = 0.0;
    for (std::size_t k = 0; k < r.zx.size(); ++k) nnz += r.zx[k] != 0.0;
    out.avg_nnz += nnz / static_cast<double>(n_samples);
  }
  double inv = 1.0 / static_cast<double>(n);
  out.mse *= inv;
  out.mse_n *= inv;
  out.mse_sample_mean *= inv;
  out.avg_nnz *= inv;
  out.sparsity = 1.0 - out.avg_nnz / static_cast<double>(model.cfg.lx);
  out.psnr = out.mse <= 0.0 ? 99.0 : std::min(99.0, -10.0 * std::log10(out.mse));
  return out;
}

}  // namespace vspair
