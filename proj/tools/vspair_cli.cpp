#include <cstdio>
#include <filesystem>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "vspair/dataset.hpp"
#include "vspair/io.hpp"
#include "vspair/model.hpp"
#include "vspair/rng.hpp"
#include "vspair/theory.hpp"
#include "vspair/train.hpp"
#include "vspair/uq.hpp"

namespace fs = std::filesystem;
using namespace vspair;

namespace {

// ----------------------------------------------------------------- gen-data

struct GenDataArgs {
  std::string kind = "toy_digits";
  std::string out;
  std::size_t n = 1024;
  std::uint64_t seed = 1;
  SynthOptions opt;
};

int run_gen_data(const GenDataArgs& a) {
  Rng rng(a.seed);
  PairedDataset data = synth_dataset(synth_kind_from_name(a.kind), a.n, rng, a.opt);
  save_dataset(data, a.out);
  std::cout << "wrote " << data.size() << " " << a.kind << " pairs (dim_x=" << data.dim_x
            << ", dim_y=" << data.dim_y << ") to " << a.out << "\n";
  return 0;
}

// -------------------------------------------------------------------- train

struct TrainArgs {
  std::string data;
  std::string out;
  std::string config;
  std::optional<std::string> variant;
  std::optional<std::string> map_mode;
  std::optional<std::size_t> epochs;
  std::optional<std::size_t> batch_size;
  std::optional<std::size_t> lx;
  std::optional<std::size_t> ly;
  std::optional<double> lr;
  std::optional<std::uint64_t> seed;
  bool quiet = false;
};

int run_train(const TrainArgs& a) {
  TrainConfig cfg = a.config.empty() ? TrainConfig{} : load_config(a.config);
  if (a.variant) cfg.variant = variant_from_name(*a.variant);
  if (a.map_mode) cfg.map_mode = map_mode_from_name(*a.map_mode);
  if (a.epochs) cfg.epochs = *a.epochs;
  if (a.batch_size) cfg.batch_size = *a.batch_size;
  if (a.lx) cfg.lx = *a.lx;
  if (a.ly) cfg.ly = *a.ly;
  if (a.lr) cfg.lr = *a.lr;
  if (a.seed) cfg.seed = *a.seed;
  cfg.validate();

  PairedDataset data = load_dataset(a.data);
  Rng init(cfg.seed);
  PairedModel model = build_model(cfg.model_config(data.dim_x, data.dim_y), init);
  std::vector<EpochStats> hist = train(model, data, cfg);

  if (!a.quiet)
    for (const EpochStats& st : hist)
      std::printf(
          "epoch %4zu  total %11.4f  rec_x %10.4f  kl_x %8.3f  rec_y %10.4f  kl_y %8.3f"
          "  map %9.4f  hyp %8.3f  nnz %6.1f  rho %.5f\n",
          st.epoch + 1, st.total, st.recon_x, st.kl_x, st.recon_y, st.kl_y, st.map_loss,
          st.hyperprior, st.mean_nnz, st.rho);

  save_model(model, cfg, a.out);
  std::cout << "saved " << variant_name(cfg.variant) << " model (lx=" << cfg.lx
            << ", ly=" << cfg.ly << ") to " << a.out << "\n";
  return 0;
}

// --------------------------------------------------------------------- eval

struct EvalArgs {
  std::string ckpt;
  std::string data;
  std::string csv;
  std::size_t samples = 30;
  std::uint64_t seed = 0x5eed;
};

int run_eval(const EvalArgs& a) {
  LoadedModel lm = load_model(a.ckpt);
  PairedDataset data = load_dataset(a.data);
  EvalMetrics m = evaluate(lm.model, data, a.samples, a.seed);

  std::printf("items            %zu\n", m.n_items);
  std::printf("samples          %zu\n", m.n_samples);
  std::printf("mse              %.6g\n", m.mse);
  std::printf("mse_%zu           %.6g\n", m.n_samples, m.mse_n);
  std::printf("mse_sample_mean  %.6g\n", m.mse_sample_mean);
  std::printf("psnr             %.4f dB\n", m.psnr);
  std::printf("avg_nnz          %.3f\n", m.avg_nnz);
  std::printf("sparsity         %.2f %%\n", 100.0 * m.sparsity);

  if (!a.csv.empty())
    write_csv(a.csv, {"mse", "mse_n", "psnr", "avg_nnz", "sparsity"},
              {{m.mse, m.mse_n, m.psnr, m.avg_nnz, m.sparsity}});
  return 0;
}

// ----------------------------------------------------------------------- uq

struct UqArgs {
  std::string ckpt;
  std::string data;
  std::string report;
  std::string images;
  std::size_t samples = 30;
  std::size_t max_dims = 16;
  std::size_t dump = 8;
  std::string mode = "relative";
  bool no_localization = false;
  bool all_dims = false;
  std::uint64_t seed = 0x5eed;
};

int run_uq(const UqArgs& a) {
  LoadedModel lm = load_model(a.ckpt);
  PairedDataset data = load_dataset(a.data);

  UqConfig cfg;
  cfg.n_samples = a.samples;
  cfg.localization = !a.no_localization;
  cfg.search_all_dims = a.all_dims;
  cfg.max_search_dims = a.max_dims;
  cfg.mode = perturb_mode_from_name(a.mode);
  cfg.seed = a.seed;

  UqReport rep = uq_suite(lm.model, data, cfg);

  std::size_t above = 0;
  for (const auto& r : rep.images) above += r.region_ratio > 1.0;
  std::printf("images                 %zu\n", rep.images.size());
  std::printf("pearson(mse, var)      %.4f\n", rep.pearson);
  std::printf("region ratio median    %.4f\n", rep.median_ratio);
  std::printf("region ratio mean      %.4f\n", rep.mean_ratio);
  std::printf("region ratio > 1       %.1f %%\n",
              100.0 * static_cast<double>(above) / static_cast<double>(rep.images.size()));
  if (cfg.localization) {
    double med = 0.0;
    std::vector<double> locs;
    for (const auto& r : rep.images) locs.push_back(r.max_localization_ratio);
    std::sort(locs.begin(), locs.end());
    med = locs.size() % 2 ? locs[locs.size() / 2]
                          : 0.5 * (locs[locs.size() / 2 - 1] + locs[locs.size() / 2]);
    std::printf("localization median    %.4f\n", med);
  }

  if (!a.report.empty()) {
    std::vector<std::vector<double>> rows;
    rows.reserve(rep.images.size());
    for (const auto& r : rep.images)
      rows.push_back({static_cast<double>(r.index), r.mse, r.mean_variance, r.region_ratio,
                      r.max_localization_ratio, static_cast<double>(r.best_dim),
                      r.corrupted_mse_change, static_cast<double>(r.n_always_active)});
    write_csv(a.report,
              {"index", "mse", "mean_variance", "region_ratio", "max_localization_ratio",
               "best_dim", "corrupted_mse_change", "n_always_active"},
              rows);
    std::cout << "wrote per-image report to " << a.report << "\n";
  }

  if (!a.images.empty()) {
    if (data.img_h == 0 || data.img_w == 0) {
      std::cerr << "note: dataset has no image geometry; skipping --images dumps\n";
    } else {
      fs::create_directories(a.images);
      std::size_t k = std::min(a.dump, data.size());
      Rng base(cfg.seed);
      for (std::size_t i = 0; i < k; ++i) {
        Rng item = base.substream(i);
        VarianceMap vm = variance_map(lm.model, data.y_row(i), cfg.n_samples, item);
        Tensor mean(Shape{data.img_h, data.img_w}, vm.mean.values());
        Tensor var(Shape{data.img_h, data.img_w}, vm.variance.values());
        double vmax = 0.0;
        for (std::size_t j = 0; j < var.size(); ++j) vmax = std::max(vmax, var[j]);
        if (vmax > 0.0)  // max-normalized for visibility
          for (std::size_t j = 0; j < var.size(); ++j) var[j] /= vmax;
        write_pgm(mean, a.images + "/mean_" + std::to_string(i) + ".pgm");
        write_pgm(var, a.images + "/var_" + std::to_string(i) + ".pgm");
      }
      std::cout << "wrote " << k << " mean/variance image pairs to " << a.images << "\n";
    }
  }
  return 0;
}

// ------------------------------------------------------------------ perturb

struct PerturbArgs {
  std::string ckpt;
  std::string data;
  std::string out;
  std::size_t index = 0;
  std::size_t dim = 0;
  std::size_t samples = 30;
  std::string mode = "relative";
  std::vector<double> scales;
  std::uint64_t seed = 0x5eed;
};

int run_perturb(const PerturbArgs& a) {
  LoadedModel lm = load_model(a.ckpt);
  PairedDataset data = load_dataset(a.data);
  if (a.index >= data.size())
    throw ValueError("perturb: image index " + std::to_string(a.index) + " out of range (" +
                     std::to_string(data.size()) + " items)");

  std::vector<double> scales = a.scales.empty() ? default_perturb_scales() : a.scales;
  Rng rng(a.seed);
  PerturbationSweep sw = perturbation_sweep(lm.model, data.y_row(a.index), a.dim,
                                            perturb_mode_from_name(a.mode), scales, a.samples,
                                            rng);

  std::printf("dim %zu: mu %.6g, sigma %.6g\n", a.dim, sw.mu_dim, sw.sigma_dim);
  fs::create_directories(a.out);

  std::vector<std::vector<double>> rows;
  for (std::size_t s = 0; s < scales.size(); ++s) {
    double sum_abs = 0.0, sum_sq = 0.0;
    for (std::size_t j = 0; j < sw.base.size(); ++j) {
      double d = sw.recon[s][j] - sw.base[j];
      sum_abs += std::abs(d);
      sum_sq += d * d;
    }
    double n = static_cast<double>(sw.base.size());
    rows.push_back({scales[s], sum_abs / n, sum_sq / n});
  }
  write_csv(a.out + "/sweep.csv", {"scale", "mean_abs_change", "mse_change"}, rows);

  if (data.img_h > 0 && data.img_w > 0) {
    Tensor base(Shape{data.img_h, data.img_w}, sw.base.values());
    write_pgm(base, a.out + "/base.pgm");
    for (std::size_t s = 0; s < scales.size(); ++s) {
      Tensor img(Shape{data.img_h, data.img_w}, sw.recon[s].values());
      write_pgm(img, a.out + "/scale_" + std::to_string(s) + ".pgm");
    }
  }
  std::cout << "wrote sweep over " << scales.size() << " scales to " << a.out << "\n";
  return 0;
}

// ------------------------------------------------------------- verify-theory

struct VerifyArgs {
  std::string config;
  std::string csv;
  std::size_t n = 200000;
  std::size_t problems = 5;
  std::size_t ys = 3;
  std::size_t max_dim_x = 4;
  std::size_t max_dim_z = 6;
  std::uint64_t seed = 42;
};

void report_rows(const std::string& batch, const TheoremReport& rep,
                 std::vector<std::vector<std::string>>& rows) {
  for (const TheoremCheck& c : rep.checks)
    rows.push_back({batch, "t1_mean_cov",
                    "p" + std::to_string(c.problem) + "/y" + std::to_string(c.y_index),
                    format_double(c.mean_err_se), format_double(c.cov_rel_frob),
                    c.mean_pass && c.cov_pass ? "1" : "0"});
  for (const GaussianityStat& s : rep.gaussianity.stats)
    rows.push_back({batch, "t2_moments", s.label, format_double(s.skewness),
                    format_double(s.excess_kurtosis), s.pass ? "1" : "0"});
}

void print_report(const char* name, const TheoremReport& rep) {
  double worst_mean = 0.0, worst_cov = 0.0;
  for (const TheoremCheck& c : rep.checks) {
    worst_mean = std::max(worst_mean, c.mean_err_se);
    worst_cov = std::max(worst_cov, c.cov_rel_frob);
  }
  double worst_skew = 0.0, worst_kurt = 0.0;
  for (const GaussianityStat& s : rep.gaussianity.stats) {
    worst_skew = std::max(worst_skew, std::abs(s.skewness));
    worst_kurt = std::max(worst_kurt, std::abs(s.excess_kurtosis));
  }
  std::printf(
      "%-9s  %2zu mean/cov checks (worst %.2f se, %.3f%% frob)  pooled N=%zu"
      "  |skew| %.4f < %.4f  |exkurt| %.4f < %.4f  %s\n",
      name, rep.checks.size(), worst_mean, 100.0 * worst_cov, rep.pooled_samples, worst_skew,
      rep.gaussianity.skew_threshold, worst_kurt, rep.gaussianity.kurt_threshold,
      rep.pass ? "PASS" : "FAIL");
}

int run_verify(const VerifyArgs& a) {
  std::uint64_t seed = a.config.empty() ? a.seed : load_config(a.config).seed;
  Rng rng(seed);

  auto draw_ys = [&](std::size_t count, std::size_t dim) {
    std::vector<Eigen::VectorXd> out;
    for (std::size_t i = 0; i < count; ++i) {
      Eigen::VectorXd y(static_cast<Eigen::Index>(dim));
      for (Eigen::Index j = 0; j < y.size(); ++j) y(j) = 2.0 * rng.gaussian();
      out.push_back(std::move(y));
    }
    return out;
  };

  std::vector<LinearGaussianProblem> canon{canonical_problem_1d()};
  std::vector<std::vector<Eigen::VectorXd>> canon_ys{draw_ys(a.ys, 1)};
  TheoremReport rc = verify_theorems(canon, canon_ys, a.n, rng);

  // Random batch; one shared read-out dim so the whitened draws pool.
  std::size_t dz = 1 + rng.next_below(a.max_dim_z);
  std::vector<LinearGaussianProblem> batch;
  std::vector<std::vector<Eigen::VectorXd>> batch_ys;
  for (std::size_t k = 0; k < a.problems; ++k) {
    std::size_t dx = 1 + rng.next_below(a.max_dim_x);
    std::size_t dy = 1 + rng.next_below(a.max_dim_x);
    batch.push_back(random_problem(dx, dy, dz, rng));
    batch_ys.push_back(draw_ys(a.ys, dy));
  }
  TheoremReport rr = verify_theorems(batch, batch_ys, a.n, rng);

  print_report("canonical", rc);
  print_report("random", rr);

  if (!a.csv.empty()) {
    std::vector<std::vector<std::string>> rows{
        {"batch", "check", "label", "stat_a", "stat_b", "pass"}};
    report_rows("canonical", rc, rows);
    report_rows("random", rr, rows);
    write_csv_text(a.csv, rows);
    std::cout << "wrote " << rows.size() - 1 << " check rows to " << a.csv << "\n";
  }

  bool pass = rc.pass && rr.pass;
  std::printf("%s\n", pass ? "PASS" : "FAIL");
  return pass ? 0 : 3;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"paired variational autoencoders with sparse latents"};
  app.require_subcommand(1);

  GenDataArgs gd;
  CLI::App* gen = app.add_subcommand("gen-data", "generate a synthetic paired dataset");
  gen->add_option("--kind", gd.kind, "toy_digits | linear_gaussian")
      ->check(CLI::IsMember({"toy_digits", "linear_gaussian"}));
  gen->add_option("--out", gd.out, "output dataset file")->required();
  gen->add_option("--n", gd.n, "number of pairs");
  gen->add_option("--seed", gd.seed, "generator seed");
  gen->add_option("--dim-x", gd.opt.dim_x, "linear_gaussian: QoI dim");
  gen->add_option("--dim-y", gd.opt.dim_y, "linear_gaussian: observation dim");
  gen->add_option("--noise-sd", gd.opt.noise_sd, "linear_gaussian: noise sd");
  gen->add_option("--img", gd.opt.img, "toy_digits: image side");
  gen->add_option("--patches", gd.opt.n_patches, "toy_digits: corruption patches");
  gen->add_option("--patch", gd.opt.patch, "toy_digits: patch side");

  TrainArgs tr;
  CLI::App* train_cmd = app.add_subcommand("train", "train a model on a dataset");
  train_cmd->add_option("--data", tr.data, "dataset file")->required();
  train_cmd->add_option("--out", tr.out, "output checkpoint")->required();
  train_cmd->add_option("--config", tr.config, "run configuration file");
  train_cmd->add_option("--variant", tr.variant, "pair | vpair | svae | vspair")
      ->check(CLI::IsMember({"pair", "vpair", "svae", "vspair"}));
  train_cmd->add_option("--map-mode", tr.map_mode, "linear_code | param_mlp | sample_match")
      ->check(CLI::IsMember({"linear_code", "param_mlp", "sample_match"}));
  train_cmd->add_option("--epochs", tr.epochs, "override epochs");
  train_cmd->add_option("--batch-size", tr.batch_size, "override batch size");
  train_cmd->add_option("--lx", tr.lx, "override QoI latent size");
  train_cmd->add_option("--ly", tr.ly, "override observation latent size");
  train_cmd->add_option("--lr", tr.lr, "override learning rate");
  train_cmd->add_option("--seed", tr.seed, "override seed");
  train_cmd->add_flag("--quiet", tr.quiet, "suppress per-epoch lines");

  EvalArgs ev;
  CLI::App* eval_cmd = app.add_subcommand("eval", "reconstruction metrics on a test set");
  eval_cmd->add_option("--ckpt", ev.ckpt, "model checkpoint")->required();
  eval_cmd->add_option("--data", ev.data, "dataset file")->required();
  eval_cmd->add_option("--samples", ev.samples, "posterior samples per item");
  eval_cmd->add_option("--csv", ev.csv, "write metrics row to this CSV");
  eval_cmd->add_option("--seed", ev.seed, "evaluation seed");

  UqArgs uq;
  CLI::App* uq_cmd = app.add_subcommand("uq", "uncertainty metrics on a corrupted test set");
  uq_cmd->add_option("--ckpt", uq.ckpt, "model checkpoint")->required();
  uq_cmd->add_option("--data", uq.data, "dataset file (with corruption masks)")->required();
  uq_cmd->add_option("--samples", uq.samples, "posterior samples per item");
  uq_cmd->add_option("--report", uq.report, "write the per-image CSV report here");
  uq_cmd->add_option("--images", uq.images, "directory for mean/variance PGM dumps");
  uq_cmd->add_option("--dump-images", uq.dump, "how many items to dump as PGMs");
  uq_cmd->add_option("--max-dims", uq.max_dims, "localization search cap per image");
  uq_cmd->add_option("--mode", uq.mode, "relative | std")
      ->check(CLI::IsMember({"relative", "std"}));
  uq_cmd->add_flag("--no-localization", uq.no_localization, "skip the perturbation search");
  uq_cmd->add_flag("--all-dims", uq.all_dims, "search all dims, not just always-active ones");
  uq_cmd->add_option("--seed", uq.seed, "suite seed");

  PerturbArgs pb;
  CLI::App* pb_cmd = app.add_subcommand("perturb", "latent perturbation sweep for one item");
  pb_cmd->add_option("--ckpt", pb.ckpt, "model checkpoint")->required();
  pb_cmd->add_option("--data", pb.data, "dataset file")->required();
  pb_cmd->add_option("--image-index", pb.index, "item to perturb")->required();
  pb_cmd->add_option("--dim", pb.dim, "latent coordinate to sweep")->required();
  pb_cmd->add_option("--mode", pb.mode, "relative | std")
      ->check(CLI::IsMember({"relative", "std"}));
  pb_cmd->add_option("--scales", pb.scales, "sweep scales (default -4..4)")->delimiter(',');
  pb_cmd->add_option("--samples", pb.samples, "posterior samples per scale");
  pb_cmd->add_option("--out", pb.out, "output directory")->required();
  pb_cmd->add_option("--seed", pb.seed, "sweep seed");

  VerifyArgs vf;
  CLI::App* vf_cmd = app.add_subcommand(
      "verify-theory", "closed form vs Monte Carlo on linear-Gaussian problems");
  vf_cmd->add_option("--config", vf.config, "run configuration (its seed is used)");
  vf_cmd->add_option("--n", vf.n, "Monte Carlo draws per observation");
  vf_cmd->add_option("--problems", vf.problems, "random problems beside the canonical one");
  vf_cmd->add_option("--ys", vf.ys, "observations per problem");
  vf_cmd->add_option("--max-dim-x", vf.max_dim_x, "max QoI dim of random problems");
  vf_cmd->add_option("--max-dim-z", vf.max_dim_z, "max read-out dim of random problems");
  vf_cmd->add_option("--csv", vf.csv, "write per-check rows here");
  vf_cmd->add_option("--seed", vf.seed, "problem/draw seed");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    int code = app.exit(e);
    return code == 0 ? 0 : 1;  // 0 covers --help
  }

  try {
    if (gen->parsed()) return run_gen_data(gd);
    if (train_cmd->parsed()) return run_train(tr);
    if (eval_cmd->parsed()) return run_eval(ev);
    if (uq_cmd->parsed()) return run_uq(uq);
    if (pb_cmd->parsed()) return run_perturb(pb);
    if (vf_cmd->parsed()) return run_verify(vf);
  } catch (const VerificationError& e) {
    std::cerr << "verification failed: " << e.what() << "\n";
    return 3;
  } catch (const std::invalid_argument& e) {  // ShapeError, ValueError
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  } catch (const std::runtime_error& e) {  // IoError and friends
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  }
  return 1;
}
