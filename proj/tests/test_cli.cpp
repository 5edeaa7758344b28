#include "plmc/checkpoint.hpp"
#include "plmc/experiment.hpp"
#include "plmc/matrix_io.hpp"

#include <doctest.h>
#include <json.hpp>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>

namespace fs = std::filesystem;
using namespace plmc;

namespace {

const fs::path& work_dir() {
  static const fs::path dir = [] {
    fs::path d = fs::temp_directory_path() / "plmc_test_cli";
    fs::remove_all(d);
    fs::create_directories(d);
    return d;
  }();
  return dir;
}

int bench(const std::string& args) {
  const std::string cmd = std::string(PLMC_BENCH_PATH) + " " + args + " > " +
                          (work_dir() / "last_stdout.txt").string() + " 2> " +
                          (work_dir() / "last_stderr.txt").string();
  const int status = std::system(cmd.c_str());
  return WIFEXITED(status) ? WEXITSTATUS(status) : -1;
}

std::string slurp(const fs::path& path) {
  std::ifstream in(path);
  std::stringstream buf;
  buf << in.rdbuf();
  return buf.str();
}

fs::path write_config() {
  const fs::path path = work_dir() / "small.ini";
  std::ofstream out(path);
  out << "[experiment]\nname = small\nvariants = diagproj, oilmm\nn_rep = 2\nrecord_time = false\n"
         "[data]\nn_tasks = 5\nn_points = 40\nn_test = 60\nmu_noise = 0.2\nseed = 11\n"
         "[train]\nmax_iters = 300\n";
  return path;
}

Dataset load_split(const fs::path& dir, const std::string& split) {
  return {load_matrix((dir / ("X_" + split + ".txt")).string()),
          load_matrix((dir / ("Y_" + split + ".txt")).string())};
}

}  // namespace

TEST_CASE("verify subcommand passes on a fresh build") {
  CHECK(bench("verify --seed 1 --instances 20") == 0);
  const std::string out = slurp(work_dir() / "last_stdout.txt");
  CHECK(out.find("PASS") != std::string::npos);
  CHECK(out.find("FAIL") == std::string::npos);
}

TEST_CASE("generate, fit, predict and evaluate round-trip through files") {
  const fs::path cfg = write_config();
  const fs::path data = work_dir() / "data";
  REQUIRE(bench("generate --config " + cfg.string() + " --out " + data.string()) == 0);

  const ExperimentConfig config = load_experiment_config(cfg.string());
  const SyntheticData expected = generate(config.datagen);
  const Dataset train = load_split(data, "train");
  const Dataset test = load_split(data, "test");
  CHECK(train.X == expected.train.X);
  CHECK(train.Y == expected.train.Y);
  CHECK(test.X == expected.test.X);
  CHECK(test.Y == expected.test.Y);
  CHECK(load_matrix((data / "signal_test.txt").string()) == expected.test_signal);
  CHECK(load_matrix((data / "H_true.txt").string()) == expected.truth.H);
  CHECK(fs::exists(data / "data.ini"));

  const fs::path fit_dir = work_dir() / "fit_diagproj";
  REQUIRE(bench("fit --config " + cfg.string() + " --data " + data.string() +
                " --variant diagproj --out " + fit_dir.string()) == 0);
  const Checkpoint cp = load_checkpoint((fit_dir / "checkpoint.json").string());
  CHECK(cp.model.variant() == Variant::diagproj);
  CHECK(cp.model.q() == 2);
  CHECK(cp.report.final_loss <= cp.report.initial_loss);

  TrainConfig tc = config.train;
  tc.seed = config.datagen.seed;
  LmcModel local = LmcModel::from_svd(Variant::diagproj, expected.train, 2, tc.seed);
  const FitReport report = fit(local, expected.train, tc);
  CHECK(cp.model.parameters() == local.parameters());
  CHECK(cp.report.loss_trace == report.loss_trace);

  const fs::path pred_dir = work_dir() / "pred";
  REQUIRE(bench("predict --checkpoint " + (fit_dir / "checkpoint.json").string() + " --data " +
                data.string() + " --out " + pred_dir.string()) == 0);
  const PredictionResult pred = local.predict(expected.train, expected.test.X);
  CHECK(load_matrix((pred_dir / "pred_mean.txt").string()) == pred.mean);
  CHECK(load_matrix((pred_dir / "pred_var.txt").string()) == pred.variance);
  CHECK(load_matrix((pred_dir / "H_est.txt").string()) == local.H());
  CHECK(load_matrix((pred_dir / "noise_cov.txt").string()) == local.sigma());

  const fs::path eval_dir = work_dir() / "eval";
  REQUIRE(bench("evaluate --checkpoint " + (fit_dir / "checkpoint.json").string() + " --data " +
                data.string() + " --pred " + pred_dir.string() + " --out " + eval_dir.string()) == 0);
  const nlohmann::json metrics = nlohmann::json::parse(slurp(eval_dir / "metrics.json"));
  const MetricsRecord direct = evaluate_fit(local, expected, TargetMode::noisy, report);
  CHECK(metrics.at("err_l1").get<double>() == direct.err_l1);
  CHECK(metrics.at("q95_l1").get<double>() == direct.q95_l1);
  CHECK(metrics.at("pva").get<double>() == direct.pva);
  CHECK(metrics.at("h_corr").get<double>() == direct.h_corr);
  CHECK(metrics.at("model").get<std::string>() == "diagproj");

  REQUIRE(bench("evaluate --checkpoint " + (fit_dir / "checkpoint.json").string() + " --data " +
                data.string() + " --pred " + pred_dir.string() + " --targets noiseless --out " +
                eval_dir.string()) == 0);
  const nlohmann::json clean = nlohmann::json::parse(slurp(eval_dir / "metrics.json"));
  CHECK(clean.at("err_l1").get<double>() ==
        evaluate_fit(local, expected, TargetMode::noiseless, report).err_l1);
}

TEST_CASE("exact fits take longer than diagproj fits on the same data") {
  const fs::path data = work_dir() / "timing_data";
  REQUIRE(bench("generate --out " + data.string()) == 0);
  const fs::path cfg = work_dir() / "timing.ini";
  {
    std::ofstream out(cfg);
    out << "[train]\nmax_iters = 200\nplateau_delta = 1e-300\n";
  }
  double times[2] = {0.0, 0.0};
  const char* variants[2] = {"exact", "diagproj"};
  for (int k = 0; k < 2; ++k) {
    const fs::path dir = work_dir() / (std::string("timing_") + variants[k]);
    REQUIRE(bench("fit --config " + cfg.string() + " --data " + data.string() + " --variant " +
                  variants[k] + " --out " + dir.string()) == 0);
    const Checkpoint cp = load_checkpoint((dir / "checkpoint.json").string());
    CHECK(cp.report.n_iters == 200);
    times[k] = cp.report.wall_time;
  }
  CHECK(times[0] > times[1]);
}

TEST_CASE("sweep writes deterministic CSV tables") {
  const fs::path cfg = write_config();
  const fs::path a = work_dir() / "sweep_a";
  const fs::path b = work_dir() / "sweep_b";
  REQUIRE(bench("sweep --config " + cfg.string() + " --out " + a.string()) == 0);
  REQUIRE(bench("sweep --config " + cfg.string() + " --out " + b.string() + " --workers 2") == 0);
  const std::string detail = slurp(a / "small_detail.csv");
  CHECK(detail == slurp(b / "small_detail.csv"));
  CHECK(slurp(a / "small_aggregate.csv") == slurp(b / "small_aggregate.csv"));
  int lines = 0;
  for (char c : detail) lines += c == '\n';
  CHECK(lines == 5);
}

TEST_CASE("bad invocations fail with a nonzero status") {
  CHECK(bench("") != 0);
  CHECK(bench("fit --data /nonexistent/dir") == 2);
  CHECK(bench("sweep --config /nonexistent.ini") == 2);
  CHECK(bench("verify --instances 0") != 0);

  const fs::path cfg = work_dir() / "failing.ini";
  {
    std::ofstream out(cfg);
    out << "[experiment]\nname = failing\nvariants = oilmm\n[data]\nn_points = 1\n";
  }
  CHECK(bench("sweep --config " + cfg.string() + " --out " + (work_dir() / "failing").string()) == 1);
  CHECK(slurp(work_dir() / "failing" / "failing_detail.csv").find(",failed") != std::string::npos);
}
