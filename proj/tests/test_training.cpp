#include "plmc/errors.hpp"
#include "plmc/synthdata.hpp"
#include "plmc/training.hpp"

#include <doctest.h>

#include <cmath>
#include <limits>

using namespace plmc;

namespace {

SyntheticData small_data(std::uint64_t seed, double mu_noise = 0.2) {
  DataGenConfig cfg;
  cfg.n_tasks = 4;
  cfg.n_lat = 2;
  cfg.n_points = 30;
  cfg.n_test = 20;
  cfg.mu_noise = mu_noise;
  cfg.seed = seed;
  return generate(cfg);
}

TrainConfig short_config(int iters) {
  TrainConfig cfg;
  cfg.max_iters = iters;
  return cfg;
}

bool is_diagonal(const Matrix& m) {
  Matrix off = m;
  off.diagonal().setZero();
  return off.size() == 0 || off.cwiseAbs().maxCoeff() == 0.0;
}

}  // namespace

TEST_CASE("default configuration") {
  const TrainConfig cfg;
  CHECK(cfg.lr_max == 1e-2);
  CHECK(cfg.lr_min == 1e-3);
  CHECK(cfg.plateau_delta == 1e-4);
  CHECK(cfg.max_iters == 5000);
  CHECK(cfg.patience == 300);
  CHECK(cfg.weight_decay == 1e-4);
  CHECK_NOTHROW(cfg.validate());
}

TEST_CASE("learning rate decays geometrically from lr_max to lr_min") {
  const TrainConfig cfg;
  CHECK(cfg.learning_rate(0) == doctest::Approx(1e-2).epsilon(1e-15));
  CHECK(cfg.learning_rate(cfg.max_iters) == doctest::Approx(1e-3).epsilon(1e-12));
  CHECK(cfg.learning_rate(cfg.max_iters / 2) == doctest::Approx(std::sqrt(1e-5)).epsilon(1e-12));
  const double ratio = cfg.learning_rate(11) / cfg.learning_rate(10);
  CHECK(ratio == doctest::Approx(cfg.learning_rate(1) / cfg.learning_rate(0)).epsilon(1e-12));
  CHECK(ratio < 1.0);
}

TEST_CASE("invalid configurations are rejected") {
  TrainConfig cfg;
  cfg.lr_min = 0.0;
  CHECK_THROWS_AS(cfg.validate(), InvalidInput);
  cfg = {};
  cfg.lr_max = 1e-4;
  CHECK_THROWS_AS(cfg.validate(), InvalidInput);
  cfg = {};
  cfg.max_iters = 0;
  CHECK_THROWS_AS(cfg.validate(), InvalidInput);
  cfg = {};
  cfg.plateau_delta = 0.0;
  CHECK_THROWS_AS(cfg.validate(), InvalidInput);
  cfg = {};
  cfg.patience = 0;
  CHECK_THROWS_AS(cfg.validate(), InvalidInput);
  cfg = {};
  cfg.weight_decay = -1.0;
  CHECK_THROWS_AS(cfg.validate(), InvalidInput);

  const SyntheticData data = small_data(1);
  LmcModel model = LmcModel::from_svd(Variant::diagproj, data.train, 2);
  cfg = {};
  cfg.patience = 0;
  CHECK_THROWS_AS(fit(model, data.train, cfg), InvalidInput);
}

TEST_CASE("infinite plateau threshold stops after exactly patience steps") {
  const SyntheticData data = small_data(2);
  LmcModel model = LmcModel::from_svd(Variant::proj, data.train, 2);
  TrainConfig cfg;
  cfg.plateau_delta = std::numeric_limits<double>::infinity();
  cfg.patience = 17;
  const FitReport report = fit(model, data.train, cfg);
  CHECK(report.n_iters == 17);
  CHECK(report.stopped_early);
  CHECK(report.loss_trace.size() == 17u);
}

TEST_CASE("max_iters bounds the run") {
  const SyntheticData data = small_data(3);
  LmcModel model = LmcModel::from_svd(Variant::bdn, data.train, 2);
  const FitReport report = fit(model, data.train, short_config(25));
  CHECK(report.n_iters == 25);
  CHECK_FALSE(report.stopped_early);
  CHECK(report.wall_time >= 0.0);
}

TEST_CASE("fitting never returns a worse loss than the initial one") {
  const SyntheticData data = small_data(4);
  for (Variant v : all_variants()) {
    CAPTURE(to_string(v));
    LmcModel model = LmcModel::from_svd(v, data.train, 2, 4);
    const FitReport report = fit(model, data.train, short_config(60));
    CHECK(report.final_loss <= report.initial_loss);
    CHECK(model.loss(data.train) == doctest::Approx(report.final_loss).epsilon(1e-12));
    for (double l : report.loss_trace) CHECK(report.final_loss <= l);
    CHECK(report.final_loss < report.initial_loss);
  }
}

TEST_CASE("fits are deterministic") {
  const SyntheticData data = small_data(5);
  for (Variant v : {Variant::exact, Variant::diagproj, Variant::oilmm}) {
    LmcModel a = LmcModel::from_svd(v, data.train, 2, 9);
    LmcModel b = LmcModel::from_svd(v, data.train, 2, 9);
    const FitReport ra = fit(a, data.train, short_config(30));
    const FitReport rb = fit(b, data.train, short_config(30));
    CHECK(ra.loss_trace == rb.loss_trace);
    CHECK(a.parameters() == b.parameters());
  }
}

TEST_CASE("structural restrictions survive training") {
  const SyntheticData data = small_data(6);
  const TrainConfig cfg = short_config(40);

  LmcModel bdn = LmcModel::from_svd(Variant::bdn, data.train, 2);
  fit(bdn, data.train, cfg);
  CHECK(bdn.noise().M.cwiseAbs().maxCoeff() == 0.0);
  CHECK_FALSE(is_diagonal(bdn.noise().L));

  LmcModel bdn_diag = LmcModel::from_svd(Variant::bdn_diag, data.train, 2);
  fit(bdn_diag, data.train, cfg);
  CHECK(bdn_diag.noise().M.cwiseAbs().maxCoeff() == 0.0);
  CHECK(is_diagonal(bdn_diag.noise().L));

  LmcModel diagproj = LmcModel::from_svd(Variant::diagproj, data.train, 2);
  fit(diagproj, data.train, cfg);
  CHECK(is_diagonal(diagproj.noise().L));

  LmcModel oilmm = LmcModel::from_svd(Variant::oilmm, data.train, 2);
  fit(oilmm, data.train, cfg);
  const NoiseParametrization np = oilmm.noise();
  CHECK(is_diagonal(np.mixing.R));
  CHECK(np.mixing.R.diagonal().minCoeff() > 0.0);
  CHECK(np.M.cwiseAbs().maxCoeff() == 0.0);
  CHECK(is_diagonal(np.L));
  CHECK(np.L.diagonal().maxCoeff() == np.L.diagonal().minCoeff());

  const NoiseParametrization proj = [&] {
    LmcModel m = LmcModel::from_svd(Variant::proj, data.train, 2);
    fit(m, data.train, cfg);
    return m.noise();
  }();
  CHECK(check_dpn(proj.H(), build_sigma(proj)).is_dpn);
}

TEST_CASE("recovers the lengthscale of a noiseless single-latent model") {
  DataGenConfig gen;
  gen.n_tasks = 4;
  gen.n_lat = 1;
  gen.n_points = 50;
  gen.n_test = 10;
  gen.mu_noise = 0.0;
  gen.l_min = 0.3;
  gen.l_max = 0.3;
  gen.seed = 21;
  const SyntheticData data = generate(gen);
  LmcModel model = LmcModel::from_svd(Variant::diagproj, data.train, 1);
  fit(model, data.train, TrainConfig{});
  const double recovered = model.kernels()[0].lengthscale;
  CHECK(std::abs(recovered - 0.3) < 0.2 * 0.3);
}
