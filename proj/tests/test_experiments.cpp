#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <filesystem>
#include <sstream>

#include "scdiff/experiments.hpp"

using namespace scdiff;
namespace fs = std::filesystem;

namespace {

fs::path fresh_dir(const std::string& name) {
  fs::path dir = fs::temp_directory_path() / ("scdiff_test_exp_" + name);
  fs::remove_all(dir);
  fs::create_directories(dir);
  return dir;
}

std::vector<std::vector<std::string>> csv_rows(const std::string& path) {
  std::istringstream in(read_text_file(path));
  std::vector<std::vector<std::string>> rows;
  std::string line;
  while (std::getline(in, line)) {
    if (line.empty() || line[0] == '#') continue;
    std::vector<std::string> cells;
    std::istringstream ls(line);
    std::string cell;
    while (std::getline(ls, cell, ',')) cells.push_back(cell);
    rows.push_back(cells);
  }
  return rows;  // header first
}

}  // namespace

TEST_CASE("cell seeds are stable and distinct") {
  CHECK(cell_seed(1, "a") == cell_seed(1, "a"));
  CHECK(cell_seed(1, "a") != cell_seed(1, "b"));
  CHECK(cell_seed(1, "a") != cell_seed(2, "a"));
  Rng r1 = cell_rng(9, "x"), r2 = cell_rng(9, "x"), r3 = cell_rng(9, "y");
  CHECK(r1.bits() == r2.bits());
  CHECK(r1.bits() != r3.bits());
}

TEST_CASE("chunked sampling is deterministic and hits the target law") {
  // data N(0, I) has marginal score -x / (1 + sigma^2)
  ScoreFn score = [](const Tensor& x, double sigma) {
    Tensor s = x;
    double f = -1.0 / (1.0 + sigma * sigma);
    for (double& v : s.data) v *= f;
    return s;
  };
  NoiseSchedule sched;
  Tensor a = sample_in_chunks(score, sched, 20, 300, 2, 64, 5, "t");
  Tensor b = sample_in_chunks(score, sched, 20, 300, 2, 64, 5, "t");
  CHECK(a.data == b.data);
  CHECK(a.shape == std::vector<std::size_t>{300, 2});
  CHECK(a.all_finite());
  double m = 0, s2 = 0;
  for (double v : a.data) m += v;
  m /= double(a.numel());
  for (double v : a.data) s2 += (v - m) * (v - m);
  s2 /= double(a.numel());
  CHECK(std::abs(std::sqrt(s2) - 1.0) < 0.2);
  Tensor c = sample_in_chunks(score, sched, 20, 10, 2, 0, 5, "t");
  CHECK(c.rows() == 10);
  CHECK_THROWS(sample_in_chunks(score, sched, 20, 0, 2, 4, 5, "t"));
}

TEST_CASE("experiment config validates its kind") {
  Config c = Config::parse("x = 1\n");
  CHECK_THROWS(ExperimentConfig::make(c, 1, "somewhere"));
  c.values["experiment.kind"] = "circles";
  CHECK_THROWS(ExperimentConfig::make(c, 1, ""));
  ExperimentConfig e = ExperimentConfig::make(c, 1, "somewhere");
  CHECK(e.kind == "circles");
  CHECK(e.manifest().seed == 1);
}

static Config mini_circles_config() {
  return Config::parse(
      "[experiment]\n"
      "kind = circles\n"
      "datasets = unit,chop\n"
      "chop_alphas = 0\n"
      "variants = vanilla,pidm,scd\n"
      "[data]\n"
      "n_train = 256\n"
      "[model]\n"
      "hidden = 32\n"
      "depth = 2\n"
      "[train]\n"
      "epochs = 10\n"
      "batch = 64\n"
      "lr = 1e-3\n"
      "log_every = 20\n"
      "[sample]\n"
      "n_steps = 10\n"
      "n_samples = 400\n"
      "chunk = 200\n"
      "[eval]\n"
      "n_estimates = 3\n"
      "n_per = 60\n"
      "n_reference = 1500\n");
}

TEST_CASE("circles pipeline emits one scored row per cell, deterministically") {
  fs::path out1 = fresh_dir("circ1");
  ExperimentConfig cfg = ExperimentConfig::make(mini_circles_config(), 77, out1.string());
  RunResult res = run_circles(cfg);
  CHECK(res.acceptance_ok);

  std::string csv = (out1 / "results" / "circles.csv").string();
  REQUIRE(fs::exists(csv));
  auto rows = csv_rows(csv);
  REQUIRE(rows.size() == 1 + 2 * 3);  // header + datasets x variants
  CHECK(rows[0] == std::vector<std::string>{"dataset", "variant", "w1_mean",
                                            "w1_half_width", "w1_floor", "res_mean",
                                            "res_half_width", "n_estimates", "n_per"});
  for (std::size_t i = 1; i < rows.size(); i++) {
    REQUIRE(rows[i].size() == 9);
    CHECK(std::stod(rows[i][2]) > 0);   // w1 of a barely trained model
    CHECK(std::stod(rows[i][4]) > 0);   // matching noise floor
    CHECK(rows[i][7] == "3");
    CHECK(rows[i][8] == "60");
  }
  CHECK(rows[1][0] == "unit");
  CHECK(rows[4][0] == "chop:0");
  std::string text = read_text_file(csv);
  CHECK(text.find("config_hash=") != std::string::npos);
  CHECK(text.find("wall_ms") == std::string::npos);

  CHECK(fs::exists(out1 / "plots" / "data_unit.svg"));
  CHECK(fs::exists(out1 / "plots" / "samples_unit_vanilla.svg"));
  CHECK(fs::exists(out1 / "plots" / "samples_chop-0_scd.svg"));
  CHECK(fs::exists(out1 / "artifacts" / "data_unit.scdf"));
  CHECK(fs::exists(out1 / "artifacts" / "ckpt_unit_pidm.scdf"));
  std::string trace = (out1 / "traces" / "train_unit_vanilla.csv").string();
  REQUIRE(fs::exists(trace));
  CHECK(read_text_file(trace).find("wall_ms") != std::string::npos);

  // same seed, fresh directory: byte-identical results
  fs::path out2 = fresh_dir("circ2");
  run_circles(ExperimentConfig::make(mini_circles_config(), 77, out2.string()));
  CHECK(read_text_file((out2 / "results" / "circles.csv").string()) == text);

  // different seed: different measurements
  fs::path out3 = fresh_dir("circ3");
  run_circles(ExperimentConfig::make(mini_circles_config(), 78, out3.string()));
  CHECK(read_text_file((out3 / "results" / "circles.csv").string()) != text);

  // results are append-only; rerunning over a finished directory refuses
  CHECK_THROWS(run_circles(cfg));

  fs::remove_all(out1);
  fs::remove_all(out2);
  fs::remove_all(out3);
}

TEST_CASE("props sweep emits the report and enforces its bounds") {
  Config c = Config::parse(
      "[experiment]\n"
      "kind = props\n"
      "[props]\n"
      "lambdas = 0,1\n"
      "sigmas = 1\n"
      "train_iters = 500\n"
      "n_pairs = 20000\n"
      "max_deviation = 1.0\n"
      "max_ratio_err = 0.5\n");
  fs::path out1 = fresh_dir("props1");
  RunResult res = run_props(ExperimentConfig::make(c, 11, out1.string()));
  CHECK(res.acceptance_ok);  // bounds deliberately loose for the tiny budget

  std::string csv = (out1 / "results" / "props.csv").string();
  auto rows = csv_rows(csv);
  REQUIRE(rows.size() == 3);
  CHECK(rows[0] == std::vector<std::string>{"lambda", "sigma", "deviation", "gap_ratio"});
  CHECK(rows[1][0] == "0");
  CHECK(rows[1][3] == "1");  // lambda = 0: optimum is the posterior mean exactly
  CHECK(std::stod(rows[2][3]) == doctest::Approx(1.0).epsilon(0.5));

  fs::path out2 = fresh_dir("props2");
  run_props(ExperimentConfig::make(c, 11, out2.string()));
  CHECK(read_text_file((out2 / "results" / "props.csv").string()) ==
        read_text_file(csv));
  fs::remove_all(out1);
  fs::remove_all(out2);
}

static Config mini_pde_config(const std::string& kind, const std::string& levels,
                              const std::string& variants) {
  return Config::parse(
      "[experiment]\n"
      "kind = " + kind + "\n"
      "levels = " + levels + "\n"
      "variants = " + variants + "\n"
      "guidance_scale = 0.05\n"
      "lgd_m = 3\n"
      "[data]\n"
      "n_train = 48\n"
      "n_val = 8\n"
      "grid_n = 9\n"
      "[model]\n"
      "hidden = 32\n"
      "depth = 2\n"
      "[train]\n"
      "max_iters = 25\n"
      "batch = 16\n"
      "lr = 1e-3\n"
      "[sample]\n"
      "n_steps = 6\n"
      "n_samples = 10\n"
      "chunk = 5\n"
      "[eval]\n"
      "nll_rows = 3\n"
      "nll_steps = 6\n"
      "nll_probes = 2\n");
}

TEST_CASE("darcy pipeline shares the vanilla row across misspecification levels") {
  fs::path out1 = fresh_dir("darcy1");
  ExperimentConfig cfg = ExperimentConfig::make(
      mini_pde_config("darcy", "10,30", "vanilla,guided,pidm,scd"), 21, out1.string());
  run_pde(cfg);

  std::string csv = (out1 / "results" / "darcy.csv").string();
  auto rows = csv_rows(csv);
  REQUIRE(rows.size() == 1 + 2 * 4);
  CHECK(rows[0][0] == "level");
  CHECK(rows[0][2] == "variant");
  // vanilla ignores the constraint: both levels carry identical measurements
  REQUIRE(rows[1][2] == "vanilla");
  REQUIRE(rows[5][2] == "vanilla");
  CHECK(rows[1][0] == "10");
  CHECK(rows[5][0] == "30");
  for (std::size_t col = 3; col < 9; col++) CHECK(rows[1][col] == rows[5][col]);
  // darcy constraints carry the level amplitude verbatim
  CHECK(rows[1][1] == "10");
  CHECK(rows[5][1] == "30");
  for (std::size_t i = 1; i < rows.size(); i++) {
    CHECK(std::stod(rows[i][3]) > 0);                    // residual mean
    CHECK(std::isfinite(std::stod(rows[i][5])));         // nll bits per dim
  }
  CHECK(fs::exists(out1 / "plots" / "data_K.svg"));
  CHECK(fs::exists(out1 / "plots" / "sample_darcy-vanilla_p.svg"));
  CHECK(fs::exists(out1 / "plots" / "sample_darcy-30-scd_K.svg"));

  fs::path out2 = fresh_dir("darcy2");
  run_pde(ExperimentConfig::make(
      mini_pde_config("darcy", "10,30", "vanilla,guided,pidm,scd"), 21, out2.string()));
  CHECK(read_text_file((out2 / "results" / "darcy.csv").string()) ==
        read_text_file(csv));
  fs::remove_all(out1);
  fs::remove_all(out2);
}

TEST_CASE("helmholtz misspecification perturbs the recorded wavenumber") {
  fs::path out = fresh_dir("helm1");
  run_pde(ExperimentConfig::make(mini_pde_config("helmholtz", "0,0.5", "vanilla,guided"),
                                 33, out.string()));
  auto rows = csv_rows((out / "results" / "helmholtz.csv").string());
  REQUIRE(rows.size() == 1 + 2 * 2);
  CHECK(rows[1][0] == "0");
  CHECK(rows[1][1] == "1");  // sigma_obs = 0 keeps the true wavenumber
  CHECK(rows[3][0] == "0.5");
  CHECK(rows[3][1] != "1");
  fs::remove_all(out);
}
