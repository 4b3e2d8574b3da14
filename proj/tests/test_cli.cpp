#include <sys/wait.h>
#include <unistd.h>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iterator>
#include <string>
#include <vector>

#include "doctest.h"
#include "vspair/io.hpp"

using namespace vspair;

namespace {

std::string tmp(const std::string& name) {
  static const std::filesystem::path dir = [] {
    auto d = std::filesystem::temp_directory_path() /
             ("vspair_cli_" + std::to_string(::getpid()));
    std::filesystem::create_directories(d);
    return d;
  }();
  return (dir / name).string();
}

std::string slurp(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  REQUIRE(in.good());
  return std::string(std::istreambuf_iterator<char>(in), {});
}

struct CliResult {
  int code = -1;
  std::string out;
};

CliResult run_cli(const std::string& args) {
  static int counter = 0;
  std::string out_file = tmp("out_" + std::to_string(counter++) + ".txt");
  std::string cmd = std::string(CLI_PATH) + " " + args + " >" + out_file + " 2>&1";
  int rc = std::system(cmd.c_str());
  REQUIRE(rc != -1);
  CliResult r;
  r.code = WIFEXITED(rc) ? WEXITSTATUS(rc) : -1;
  r.out = slurp(out_file);
  return r;
}

bool contains(const std::string& hay, const std::string& needle) {
  return hay.find(needle) != std::string::npos;
}

std::vector<std::string> lines_of(const std::string& text) {
  std::vector<std::string> out;
  std::string cur;
  for (char ch : text) {
    if (ch == '\n') {
      out.push_back(cur);
      cur.clear();
    } else {
      cur.push_back(ch);
    }
  }
  if (!cur.empty()) out.push_back(cur);
  return out;
}

}  // namespace

TEST_CASE("cli: usage problems exit 1, --help exits 0") {
  CHECK(run_cli("").code == 1);
  CHECK(run_cli("eval --bogus x").code == 1);
  CHECK(run_cli("frobnicate").code == 1);
  CHECK(run_cli("gen-data").code == 1);  // missing required --out
  CHECK(run_cli("gen-data --kind mystery --out " + tmp("never.ckpt")).code == 1);

  CliResult help = run_cli("--help");
  CHECK(help.code == 0);
  CHECK(contains(help.out, "gen-data"));
  CHECK(contains(help.out, "verify-theory"));
}

TEST_CASE("cli: full pipeline over a synthetic image task") {
  std::string train_data = tmp("train.ckpt");
  std::string test_data = tmp("test.ckpt");
  std::string model = tmp("model.ckpt");

  CliResult gen = run_cli("gen-data --kind toy_digits --n 48 --seed 1 --out " + train_data);
  CHECK(gen.code == 0);
  CHECK(contains(gen.out, "wrote 48 toy_digits pairs"));
  CHECK(run_cli("gen-data --kind toy_digits --n 16 --seed 2 --out " + test_data).code == 0);

  std::string cfg = tmp("small.cfg");
  {
    std::ofstream out(cfg);
    out << "hidden_x = 32\nhidden_y = 32\nhidden_map = 32\n";
  }
  CliResult tr = run_cli("train --data " + train_data + " --out " + model + " --config " + cfg +
                         " --epochs 2 --batch-size 16 --lx 12 --ly 6 --quiet");
  CHECK(tr.code == 0);
  CHECK(contains(tr.out, "saved vspair model"));

  std::string eval_csv = tmp("eval.csv");
  CliResult ev = run_cli("eval --ckpt " + model + " --data " + test_data +
                         " --samples 5 --csv " + eval_csv);
  CHECK(ev.code == 0);
  CHECK(contains(ev.out, "psnr"));
  std::vector<std::string> rows = lines_of(slurp(eval_csv));
  REQUIRE(rows.size() == 2);
  CHECK(rows[0] == "mse,mse_n,psnr,avg_nnz,sparsity");
  std::vector<double> cells;
  std::string cell;
  for (char ch : rows[1] + ",")
    if (ch == ',') {
      cells.push_back(std::stod(cell));
      cell.clear();
    } else {
      cell.push_back(ch);
    }
  REQUIRE(cells.size() == 5);
  CHECK(cells[0] >= 0.0);            // mse
  CHECK(cells[4] >= 0.0);            // sparsity is a fraction
  CHECK(cells[4] <= 1.0);

  std::string uq_csv = tmp("uq.csv");
  std::string img_dir = tmp("uq_images");
  CliResult uq = run_cli("uq --ckpt " + model + " --data " + test_data +
                         " --samples 4 --max-dims 2 --report " + uq_csv + " --images " +
                         img_dir + " --dump-images 2");
  CHECK(uq.code == 0);
  CHECK(contains(uq.out, "pearson"));
  std::vector<std::string> uq_rows = lines_of(slurp(uq_csv));
  REQUIRE(uq_rows.size() == 17);  // header + one row per image
  CHECK(uq_rows[0] ==
        "index,mse,mean_variance,region_ratio,max_localization_ratio,best_dim,"
        "corrupted_mse_change,n_always_active");
  for (int i = 0; i < 2; ++i) {
    Tensor mean = read_pgm(img_dir + "/mean_" + std::to_string(i) + ".pgm");
    Tensor var = read_pgm(img_dir + "/var_" + std::to_string(i) + ".pgm");
    CHECK(mean.shape() == Shape{16, 16});
    CHECK(var.shape() == Shape{16, 16});
  }

  std::string sweep_dir = tmp("sweep");
  CliResult pb = run_cli("perturb --ckpt " + model + " --data " + test_data +
                         " --image-index 1 --dim 3 --samples 4 --scales -2,0,2 --out " +
                         sweep_dir);
  CHECK(pb.code == 0);
  CHECK(contains(pb.out, "wrote sweep over 3 scales"));
  std::vector<std::string> sweep_rows = lines_of(slurp(sweep_dir + "/sweep.csv"));
  REQUIRE(sweep_rows.size() == 4);
  CHECK(sweep_rows[0] == "scale,mean_abs_change,mse_change");
  CHECK(std::filesystem::exists(sweep_dir + "/base.pgm"));
  CHECK(std::filesystem::exists(sweep_dir + "/scale_2.pgm"));

  // data/format problems exit 2
  CliResult wrong_ckpt = run_cli("eval --ckpt " + test_data + " --data " + test_data);
  CHECK(wrong_ckpt.code == 2);
  CHECK(contains(wrong_ckpt.out, "not a model checkpoint"));
  CliResult missing = run_cli("train --data " + tmp("nope.ckpt") + " --out " + tmp("m2.ckpt") +
                              " --epochs 1");
  CHECK(missing.code == 2);
  CHECK(contains(missing.out, "cannot open"));
  CliResult oob = run_cli("perturb --ckpt " + model + " --data " + test_data +
                          " --image-index 99 --dim 0 --out " + sweep_dir);
  CHECK(oob.code == 2);
  CHECK(contains(oob.out, "out of range"));
}

TEST_CASE("cli: deterministic pair variant trains and evaluates") {
  std::string data = tmp("lin.ckpt");
  CHECK(run_cli("gen-data --kind linear_gaussian --dim-x 5 --dim-y 3 --n 32 --seed 4 --out " +
                data)
            .code == 0);
  PairedDataset d = load_dataset(data);
  CHECK(d.dim_x == 5);
  CHECK(d.dim_y == 3);
  CHECK(d.forward_matrix.shape() == Shape{3, 5});
  CHECK(d.masks.empty());

  std::string cfg = tmp("pair.cfg");
  {
    std::ofstream out(cfg);
    out << "hidden_x = 16\nhidden_y = 16\nhidden_map = \nlx = 4\nly = 3\n"
        << "map_mode = linear_code\nepochs = 2\nbatch_size = 8\n";
  }
  std::string model = tmp("pair_model.ckpt");
  CliResult tr = run_cli("train --data " + data + " --out " + model + " --config " + cfg +
                         " --variant pair --quiet");
  CHECK(tr.code == 0);
  CHECK(contains(tr.out, "saved pair model"));
  CHECK(run_cli("eval --ckpt " + model + " --data " + data + " --samples 3").code == 0);
}

TEST_CASE("cli: theory verification passes when fed and fails when starved") {
  std::string csv = tmp("checks.csv");
  CliResult ok = run_cli("verify-theory --n 60000 --problems 2 --ys 2 --seed 3 --csv " + csv);
  CHECK(ok.code == 0);
  CHECK(contains(ok.out, "PASS"));
  std::vector<std::string> rows = lines_of(slurp(csv));
  REQUIRE(rows.size() >= 2);
  CHECK(rows[0] == "batch,check,label,stat_a,stat_b,pass");

  // a starved Monte Carlo budget cannot meet the 2% covariance tolerance
  CliResult starved = run_cli("verify-theory --n 400 --problems 2 --ys 2 --seed 5");
  CHECK(starved.code == 3);
  CHECK(contains(starved.out, "FAIL"));
}
