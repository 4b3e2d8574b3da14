#include "vspair/model.hpp"

#include <algorithm>
#include <cmath>

namespace vspair {

// ------------------------------------------------------------------------ Mlp

Mlp Mlp::make(std::size_t in_dim, const std::vector<std::size_t>& hidden, std::size_t out_dim,
              std::size_t n_heads, Rng& rng) {
  if (in_dim == 0 || out_dim == 0) throw ShapeError("mlp: zero-width layer");
  if (n_heads < 1 || n_heads > 3)
    throw ShapeError("mlp: " + std::to_string(n_heads) + " heads, expected 1..3");
  for (std::size_t h : hidden)
    if (h == 0) throw ShapeError("mlp: zero-width hidden layer");

  auto init_linear = [&rng](std::size_t out, std::size_t in) {
    double s = std::sqrt(1.0 / static_cast<double>(in));
    Tensor w{Shape{out, in}};
    for (std::size_t i = 0; i < w.size(); ++i) w[i] = (2.0 * rng.uniform() - 1.0) * s;
    return Var::param(std::move(w));
  };

  Mlp net;
  net.in_dim = in_dim;
  net.out_dim = out_dim;
  std::size_t prev = in_dim;
  for (std::size_t h : hidden) {
    net.weights.push_back(init_linear(h, prev));
    net.biases.push_back(Var::param(Tensor{Shape{h}}));
    prev = h;
  }
  for (std::size_t k = 0; k < n_heads; ++k) {
    net.head_weights.push_back(init_linear(out_dim, prev));
    net.head_biases.push_back(Var::param(Tensor{Shape{out_dim}}));
  }
  return net;
}

std::vector<Var> Mlp::forward(const Var& x) const {
  if (x.value().rank() != 2 || x.value().dim(1) != in_dim)
    throw ShapeError("mlp: input shape " + shape_str(x.shape()) + ", expected (batch, " +
                     std::to_string(in_dim) + ")");
  Var h = x;
  for (std::size_t l = 0; l < weights.size(); ++l)
    h = silu(add_rowvec(matmul_nt(h, weights[l]), biases[l]));
  std::vector<Var> out;
  out.reserve(head_weights.size());
  for (std::size_t k = 0; k < head_weights.size(); ++k)
    out.push_back(add_rowvec(matmul_nt(h, head_weights[k]), head_biases[k]));
  return out;
}

void Mlp::collect_params(const std::string& prefix,
                         std::vector<std::pair<std::string, Var>>& out) const {
  for (std::size_t l = 0; l < weights.size(); ++l) {
    out.emplace_back(prefix + ".w" + std::to_string(l), weights[l]);
    out.emplace_back(prefix + ".b" + std::to_string(l), biases[l]);
  }
  for (std::size_t k = 0; k < head_weights.size(); ++k) {
    out.emplace_back(prefix + ".head" + std::to_string(k) + ".w", head_weights[k]);
    out.emplace_back(prefix + ".head" + std::to_string(k) + ".b", head_biases[k]);
  }
}

// ------------------------------------------------------------------ variants

std::string variant_name(Variant v) {
  switch (v) {
    case Variant::kPair: return "pair";
    case Variant::kVPair: return "vpair";
    case Variant::kSvae: return "svae";
    case Variant::kVsPair: return "vspair";
  }
  throw ValueError("variant_name: unknown variant");
}

Variant variant_from_name(const std::string& name) {
  if (name == "pair") return Variant::kPair;
  if (name == "vpair") return Variant::kVPair;
  if (name == "svae") return Variant::kSvae;
  if (name == "vspair") return Variant::kVsPair;
  throw ValueError("unknown variant '" + name + "', expected pair|vpair|svae|vspair");
}

std::string map_mode_name(MapMode m) {
  switch (m) {
    case MapMode::kLinearCode: return "linear_code";
    case MapMode::kParamMlp: return "param_mlp";
    case MapMode::kSampleMatch: return "sample_match";
  }
  throw ValueError("map_mode_name: unknown mode");
}

MapMode map_mode_from_name(const std::string& name) {
  if (name == "linear_code") return MapMode::kLinearCode;
  if (name == "param_mlp") return MapMode::kParamMlp;
  if (name == "sample_match") return MapMode::kSampleMatch;
  throw ValueError("unknown map mode '" + name +
                   "', expected linear_code|param_mlp|sample_match");
}

// ------------------------------------------------------------------ LatentMap

std::vector<Var> LatentMap::predict_params(const DiagGaussianParams& obs) const {
  if (mode != MapMode::kParamMlp)
    throw ValueError("latent map: predict_params requires param_mlp mode, map is " +
                     map_mode_name(mode));
  std::vector<Var> heads = net.forward(concat_cols(obs.mu, obs.log_var));
  if (heads.size() == 3) heads[2] = omega_from_logits(heads[2]);
  return heads;
}

Var LatentMap::map_point(const Var& z_y) const {
  if (mode == MapMode::kParamMlp)
    throw ValueError("latent map: map_point is undefined for param_mlp mode");
  return net.forward(z_y)[0];
}

// ---------------------------------------------------------------- build_model

PairedModel build_model(const ModelConfig& cfg, Rng& rng) {
  if (cfg.lx == 0 || cfg.ly == 0 || cfg.dim_x == 0 || cfg.dim_y == 0)
    throw ShapeError("build_model: zero dimension in config");
  PairedModel m;
  m.cfg = cfg;

  auto mirrored = [](std::vector<std::size_t> v) {
    std::reverse(v.begin(), v.end());
    return v;
  };

  switch (cfg.variant) {
    case Variant::kPair: {
      m.cfg.map_mode = MapMode::kLinearCode;
      m.enc_x = Mlp::make(cfg.dim_x, cfg.hidden_x, cfg.lx, 1, rng);
      m.dec_x = Mlp::make(cfg.lx, mirrored(cfg.hidden_x), cfg.dim_x, 1, rng);
      m.enc_y = Mlp::make(cfg.dim_y, cfg.hidden_y, cfg.ly, 1, rng);
      m.dec_y = Mlp::make(cfg.ly, mirrored(cfg.hidden_y), cfg.dim_y, 1, rng);
      m.map = LatentMap{MapMode::kLinearCode, Mlp::make(cfg.ly, {}, cfg.lx, 1, rng)};
      break;
    }
    case Variant::kVPair: {
      m.enc_x = Mlp::make(cfg.dim_x, cfg.hidden_x, cfg.lx, 2, rng);
      m.dec_x = Mlp::make(cfg.lx, mirrored(cfg.hidden_x), cfg.dim_x, 1, rng);
      m.enc_y = Mlp::make(cfg.dim_y, cfg.hidden_y, cfg.ly, 2, rng);
      m.dec_y = Mlp::make(cfg.ly, mirrored(cfg.hidden_y), cfg.dim_y, 1, rng);
      if (cfg.map_mode == MapMode::kSampleMatch)
        m.map = LatentMap{MapMode::kSampleMatch, Mlp::make(cfg.ly, cfg.hidden_map, cfg.lx, 1, rng)};
      else
        m.map = LatentMap{MapMode::kParamMlp, Mlp::make(2 * cfg.ly, cfg.hidden_map, cfg.lx, 2, rng)};
      m.cfg.map_mode = m.map->mode;
      break;
    }
    case Variant::kSvae: {
      m.enc_x = Mlp::make(cfg.dim_y, cfg.hidden_x, cfg.lx, 3, rng);
      m.dec_x = Mlp::make(cfg.lx, mirrored(cfg.hidden_x), cfg.dim_x, 1, rng);
      break;
    }
    case Variant::kVsPair: {
      m.enc_x = Mlp::make(cfg.dim_x, cfg.hidden_x, cfg.lx, 3, rng);
      m.dec_x = Mlp::make(cfg.lx, mirrored(cfg.hidden_x), cfg.dim_x, 1, rng);
      m.enc_y = Mlp::make(cfg.dim_y, cfg.hidden_y, cfg.ly, 2, rng);
      m.dec_y = Mlp::make(cfg.ly, mirrored(cfg.hidden_y), cfg.dim_y, 1, rng);
      if (cfg.map_mode == MapMode::kSampleMatch)
        m.map = LatentMap{MapMode::kSampleMatch, Mlp::make(cfg.ly, cfg.hidden_map, cfg.lx, 1, rng)};
      else
        m.map = LatentMap{MapMode::kParamMlp, Mlp::make(2 * cfg.ly, cfg.hidden_map, cfg.lx, 3, rng)};
      m.cfg.map_mode = m.map->mode;
      break;
    }
  }

  if (cfg.variant == Variant::kSvae || cfg.variant == Variant::kVsPair) {
    // rho starts at 1/2 (logit 0), symmetric between sparse and dense priors;
    // the hyperprior is what moves it.
    m.prior = SparsityPrior{Var::param(Tensor::scalar(0.0)), cfg.alpha0, cfg.beta0};
  }
  return m;
}

std::vector<std::pair<std::string, Var>> PairedModel::named_params() const {
  std::vector<std::pair<std::string, Var>> out;
  enc_x.collect_params("enc_x", out);
  dec_x.collect_params("dec_x", out);
  if (enc_y) enc_y->collect_params("enc_y", out);
  if (dec_y) dec_y->collect_params("dec_y", out);
  if (map) map->net.collect_params("map", out);
  if (prior) out.emplace_back("prior.rho_logit", prior->rho_logit);
  return out;
}

void PairedModel::zero_grad() const {
  for (auto& [name, p] : named_params()) Var(p).zero_grad();
}

// --------------------------------------------------------------- encode/decode

namespace {

void require_input(const Var& x, std::size_t dim, const char* who) {
  if (x.value().rank() != 2 || x.value().dim(1) != dim)
    throw ShapeError(std::string(who) + ": input shape " + shape_str(x.shape()) +
                     ", expected (batch, " + std::to_string(dim) + ")");
}

}  // namespace

EncodeResult encode_x(const PairedModel& m, const Var& x) {
  require_input(x, m.enc_x.in_dim, "encode_x");
  std::vector<Var> heads = m.enc_x.forward(x);
  switch (m.cfg.variant) {
    case Variant::kPair: return heads[0];
    case Variant::kVPair: return DiagGaussianParams{heads[0], heads[1]};
    case Variant::kSvae:
    case Variant::kVsPair:
      return SpikeSlabParams{heads[0], heads[1], omega_from_logits(heads[2])};
  }
  throw ValueError("encode_x: unknown variant");
}

EncodeResult encode_y(const PairedModel& m, const Var& y) {
  if (!m.enc_y)
    throw ValueError("encode_y: variant " + variant_name(m.cfg.variant) +
                     " has no observation encoder");
  require_input(y, m.enc_y->in_dim, "encode_y");
  std::vector<Var> heads = m.enc_y->forward(y);
  if (m.cfg.variant == Variant::kPair) return heads[0];
  return DiagGaussianParams{heads[0], heads[1]};
}

Var decode_x(const PairedModel& m, const Var& z) {
  require_input(z, m.cfg.lx, "decode_x");
  return m.dec_x.forward(z)[0];
}

Var decode_y(const PairedModel& m, const Var& z) {
  if (!m.dec_y)
    throw ValueError("decode_y: variant " + variant_name(m.cfg.variant) +
                     " has no observation decoder");
  require_input(z, m.cfg.ly, "decode_y");
  return m.dec_y->forward(z)[0];
}

// --------------------------------------------------------------------- losses

namespace {

Var sse(const Var& a, const Var& b) { return sum(square(a - b)); }

}  // namespace

Var vae_elbo_loss(const DiagGaussianParams& p, const Var& x, const Var& xt, double gamma) {
  if (!x.value().same_shape(xt.value()))
    throw ShapeError("vae_elbo_loss: x shape " + shape_str(x.shape()) +
                     " vs reconstruction shape " + shape_str(xt.shape()));
  return 0.5 * sse(x, xt) + gamma * gaussian_kl(p);
}

Var svae_elbo_loss(const SpikeSlabParams& p, const Var& x, const Var& xt,
                   const SparsityPrior& prior, double gamma_x, double lambda_rho) {
  if (!x.value().same_shape(xt.value()))
    throw ShapeError("svae_elbo_loss: x shape " + shape_str(x.shape()) +
                     " vs reconstruction shape " + shape_str(xt.shape()));
  return 0.5 * sse(x, xt) + gamma_x * spike_slab_kl(p, prior) +
         lambda_rho * beta_hyperprior_loss(prior);
}

Var map_param_loss(const std::vector<Var>& pred, const std::vector<Var>& target,
                   double lambda_b) {
  if (pred.size() != target.size() || (pred.size() != 2 && pred.size() != 3))
    throw ShapeError("map_param_loss: " + std::to_string(pred.size()) + " predicted vs " +
                     std::to_string(target.size()) + " target blocks, expected 2 or 3 of each");
  for (std::size_t i = 0; i < pred.size(); ++i)
    if (!pred[i].value().same_shape(target[i].value()))
      throw ShapeError("map_param_loss: block " + std::to_string(i) + " shapes " +
                       shape_str(pred[i].shape()) + " vs " + shape_str(target[i].shape()));
  Var loss = sse(pred[0], target[0]) + sse(pred[1], target[1]);
  if (pred.size() == 3) {
    loss = loss + sse(pred[2], target[2]);
    // Entropy-style penalty pushing predicted gate probabilities off 1/2.
    loss = loss + lambda_b * sum(pred[2] * (1.0 - pred[2]));
  }
  return loss;
}

Var map_sample_loss(const Var& mapped, const Var& z_x) {
  if (!mapped.value().same_shape(z_x.value()))
    throw ShapeError("map_sample_loss: shapes " + shape_str(mapped.shape()) + " vs " +
                     shape_str(z_x.shape()));
  return sse(mapped, z_x);
}

PairLossTerms pair_losses(const PairedModel& m, const Var& x, const Var& y) {
  if (m.cfg.variant != Variant::kPair)
    throw ValueError("pair_losses: variant is " + variant_name(m.cfg.variant) +
                     ", expected pair");
  Var zx = std::get<Var>(encode_x(m, x));
  Var zy = std::get<Var>(encode_y(m, y));
  PairLossTerms t;
  t.rec_x = sse(decode_x(m, zx), x);
  t.rec_y = sse(decode_y(m, zy), y);
  t.fwd = Var::constant(Tensor::scalar(0.0));  // forward surrogate not modeled
  t.inv = sse(decode_x(m, m.map->map_point(zy)), x);
  return t;
}

std::pair<Var, LossBreakdown> vspair_total_loss(const PairedModel& m, const Var& x, const Var& y,
                                                const LossWeights& w, Rng& rng) {
  if (m.cfg.variant != Variant::kVPair && m.cfg.variant != Variant::kVsPair)
    throw ValueError("vspair_total_loss: variant " + variant_name(m.cfg.variant) +
                     " is not a paired variational model");
  LossBreakdown b;
  double batch = static_cast<double>(x.value().dim(0));

  // x side.
  Var recon_x, kl_x, z_x;
  std::vector<Var> target;
  if (m.cfg.variant == Variant::kVsPair) {
    auto px = std::get<SpikeSlabParams>(encode_x(m, x));
    auto [z, mask] = spike_slab_sample(px, m.cfg.gate, rng);
    z_x = z;
    recon_x = 0.5 * sse(x, decode_x(m, z));
    kl_x = spike_slab_kl(px, *m.prior);
    target = {px.mu, px.log_var, px.omega};
    double nnz = 0.0;
    for (std::size_t i = 0; i < mask.size(); ++i) nnz += mask[i];
    b.mean_nnz = nnz / batch;
  } else {
    auto px = std::get<DiagGaussianParams>(encode_x(m, x));
    z_x = gaussian_reparam_sample(px, rng);
    recon_x = 0.5 * sse(x, decode_x(m, z_x));
    kl_x = gaussian_kl(px);
    target = {px.mu, px.log_var};
    b.mean_nnz = static_cast<double>(m.cfg.lx);
  }

  // y side.
  auto py = std::get<DiagGaussianParams>(encode_y(m, y));
  Var z_y = gaussian_reparam_sample(py, rng);
  Var recon_y = 0.5 * sse(y, decode_y(m, z_y));
  Var kl_y = gaussian_kl(py);

  // inverse map.
  Var map_term = m.map->mode == MapMode::kSampleMatch
                     ? map_sample_loss(m.map->map_point(z_y), z_x)
                     : map_param_loss(m.map->predict_params(py), target, w.lambda_b);

  Var total = w.lambda1 * (recon_x + w.gamma_x * kl_x) +
              w.lambda2 * (recon_y + w.gamma_y * kl_y) + w.lambda3 * map_term;
  if (m.prior) {
    Var hyper = beta_hyperprior_loss(*m.prior);
    total = total + w.lambda_rho * hyper;
    b.hyperprior = hyper.value().item();
  }

  b.total = total.value().item();
  b.recon_x = recon_x.value().item();
  b.kl_x = kl_x.value().item();
  b.recon_y = recon_y.value().item();
  b.kl_y = kl_y.value().item();
  b.map_loss = map_term.value().item();
  return {total, b};
}

std::pair<Var, LossBreakdown> training_loss(const PairedModel& m, const Var& x, const Var& y,
                                            const LossWeights& w, Rng& rng) {
  switch (m.cfg.variant) {
    case Variant::kPair: {
      PairLossTerms t = pair_losses(m, x, y);
      Var total = w.lambda1 * t.rec_x + w.lambda2 * t.rec_y + w.lambda3 * t.inv;
      LossBreakdown b;
      b.total = total.value().item();
      b.recon_x = t.rec_x.value().item();
      b.recon_y = t.rec_y.value().item();
      b.map_loss = t.inv.value().item();
      b.mean_nnz = static_cast<double>(m.cfg.lx);
      return {total, b};
    }
    case Variant::kSvae: {
      auto p = std::get<SpikeSlabParams>(encode_x(m, y));  // svae reads y directly
      auto [z, mask] = spike_slab_sample(p, m.cfg.gate, rng);
      Var xt = decode_x(m, z);
      Var total = svae_elbo_loss(p, x, xt, *m.prior, w.gamma_x, w.lambda_rho);
      LossBreakdown b;
      b.total = total.value().item();
      b.recon_x = (0.5 * sum(square(x - xt))).value().item();
      b.kl_x = spike_slab_kl(p, *m.prior).value().item();
      b.hyperprior = beta_hyperprior_loss(*m.prior).value().item();
      double nnz = 0.0;
      for (std::size_t i = 0; i < mask.size(); ++i) nnz += mask[i];
      b.mean_nnz = nnz / static_cast<double>(x.value().dim(0));
      return {total, b};
    }
    default:
      return vspair_total_loss(m, x, y, w, rng);
  }
}

// --------------------------------------------------------------------- invert

namespace {

Var as_row(const Tensor& y, std::size_t dim, const char* who) {
  if (y.rank() == 1 && y.dim(0) == dim) return Var::constant(Tensor{Shape{1, dim}, y.values()});
  if (y.rank() == 2 && y.dim(0) == 1 && y.dim(1) == dim) return Var::constant(y);
  throw ShapeError(std::string(who) + ": observation shape " + shape_str(y.shape()) +
                   ", expected (" + std::to_string(dim) + ") or (1, " + std::to_string(dim) +
                   ")");
}

Tensor first_row(const Tensor& m) {
  Tensor r{Shape{m.dim(1)}};
  for (std::size_t c = 0; c < m.dim(1); ++c) r[c] = m[c];
  return r;
}

}  // namespace

InvertResult invert(const PairedModel& m, const Tensor& y, std::size_t n_samples, Rng& rng) {
  if (n_samples == 0) throw ValueError("invert: n_samples must be positive");
  NoGradGuard ng;
  InvertResult res;

  auto sample_spike_slab = [&](const SpikeSlabParams& row) {
    SpikeSlabParams tiled{tile_rows(row.mu, n_samples), tile_rows(row.log_var, n_samples),
                          tile_rows(row.omega, n_samples)};
    auto [z, mask] = spike_slab_sample(tiled, m.cfg.gate, rng);
    res.zx = z.value();
    res.masks = mask;
    res.xhat = decode_x(m, z).value();
    res.params = std::array<Tensor, 3>{first_row(row.mu.value()), first_row(row.log_var.value()),
                                       first_row(row.omega.value())};
  };

  switch (m.cfg.variant) {
    case Variant::kSvae: {
      Var yv = as_row(y, m.cfg.dim_y, "invert");
      sample_spike_slab(std::get<SpikeSlabParams>(encode_x(m, yv)));
      break;
    }
    case Variant::kPair: {
      Var yv = as_row(y, m.cfg.dim_y, "invert");
      Var code = std::get<Var>(encode_y(m, yv));
      Var zx = m.map->map_point(code);
      Var xhat = decode_x(m, zx);
      res.zx = tile_rows(Var::constant(zx.value()), n_samples).value();
      res.xhat = tile_rows(Var::constant(xhat.value()), n_samples).value();
      res.params = first_row(zx.value());
      break;
    }
    case Variant::kVPair:
    case Variant::kVsPair: {
      Var yv = as_row(y, m.cfg.dim_y, "invert");
      auto py = std::get<DiagGaussianParams>(encode_y(m, yv));
      if (m.map->mode == MapMode::kSampleMatch) {
        DiagGaussianParams tiled{tile_rows(py.mu, n_samples), tile_rows(py.log_var, n_samples)};
        Var zy = gaussian_reparam_sample(tiled, rng);
        Var zx = m.map->map_point(zy);
        res.zx = zx.value();
        res.xhat = decode_x(m, zx).value();
        res.params = std::monostate{};
      } else if (m.cfg.variant == Variant::kVsPair) {
        std::vector<Var> pred = m.map->predict_params(py);
        sample_spike_slab(SpikeSlabParams{pred[0], pred[1], pred[2]});
      } else {
        std::vector<Var> pred = m.map->predict_params(py);
        DiagGaussianParams row{pred[0], pred[1]};
        DiagGaussianParams tiled{tile_rows(row.mu, n_samples), tile_rows(row.log_var, n_samples)};
        Var z = gaussian_reparam_sample(tiled, rng);
        res.zx = z.value();
        res.xhat = decode_x(m, z).value();
        res.params = std::make_pair(first_row(row.mu.value()), first_row(row.log_var.value()));
      }
      break;
    }
  }
  return res;
}

PredictedParams predict_x_params(const PairedModel& m, const Tensor& y) {
  NoGradGuard ng;
  Var yv = as_row(y, m.cfg.dim_y, "predict_x_params");
  switch (m.cfg.variant) {
    case Variant::kSvae: {
      auto p = std::get<SpikeSlabParams>(encode_x(m, yv));
      return std::array<Tensor, 3>{first_row(p.mu.value()), first_row(p.log_var.value()),
                                   first_row(p.omega.value())};
    }
    case Variant::kPair: {
      Var code = std::get<Var>(encode_y(m, yv));
      return first_row(m.map->map_point(code).value());
    }
    case Variant::kVPair:
    case Variant::kVsPair: {
      auto py = std::get<DiagGaussianParams>(encode_y(m, yv));
      if (m.map->mode == MapMode::kSampleMatch)
        return first_row(m.map->map_point(py.mu).value());
      std::vector<Var> pred = m.map->predict_params(py);
      if (m.cfg.variant == Variant::kVsPair)
        return std::array<Tensor, 3>{first_row(pred[0].value()), first_row(pred[1].value()),
                                     first_row(pred[2].value())};
      return std::make_pair(first_row(pred[0].value()), first_row(pred[1].value()));
    }
  }
  throw ValueError("predict_x_params: unknown variant");
}

}  // namespace vspair
