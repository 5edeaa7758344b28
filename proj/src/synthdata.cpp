#include "plmc/synthdata.hpp"

#include "plmc/errors.hpp"

#include <cmath>

namespace plmc {

namespace {

constexpr double kLatentJitter = 1e-8;
constexpr int kMaxSourceDraws = 100;
constexpr double kMinSensorDistance = 1e-12;

Matrix standard_normal(Eigen::Index rows, Eigen::Index cols, std::mt19937_64& rng) {
  std::normal_distribution<double> normal(0.0, 1.0);
  Matrix out(rows, cols);
  for (Eigen::Index j = 0; j < cols; ++j)
    for (Eigen::Index i = 0; i < rows; ++i) out(i, j) = normal(rng);
  return out;
}

Vector equidistant(double lo, double hi, Eigen::Index count) {
  if (count == 1) return Vector::Constant(1, lo);
  return Vector::LinSpaced(count, lo, hi);
}

double sensor_x(Eigen::Index i, Eigen::Index p) {
  return -1.0 + 2.0 * static_cast<double>(i) / static_cast<double>(p - 1);
}

bool source_on_sensor(double sx, double sy, Eigen::Index p) {
  for (Eigen::Index i = 0; i < p; ++i) {
    if (std::hypot(sx - sensor_x(i, p), sy) < kMinSensorDistance) return true;
  }
  return false;
}

}  // namespace

std::string to_string(MixingMode mode) {
  return mode == MixingMode::gaussian ? "gaussian" : "physical";
}

MixingMode parse_mixing_mode(const std::string& name) {
  if (name == "gaussian") return MixingMode::gaussian;
  if (name == "physical") return MixingMode::physical;
  throw InvalidInput("unknown h_mode '" + name + "' (expected gaussian or physical)");
}

void DataGenConfig::validate() const {
  if (n_tasks < 1 || n_lat < 1 || n_lat_noise < 0 || n_points < 1 || n_test < 0) {
    throw InvalidInput("DataGenConfig: counts must be positive");
  }
  if (!(mu_noise >= 0.0 && mu_noise <= 1.0) || !(mu_str >= 0.0 && mu_str <= 1.0)) {
    throw InvalidInput("DataGenConfig: mu_noise and mu_str must lie in [0, 1]");
  }
  if (!(l_min > 0.0) || !(l_max >= l_min) || !std::isfinite(l_max)) {
    throw InvalidInput("DataGenConfig: need 0 < l_min <= l_max");
  }
  if (h_mode == MixingMode::physical && n_tasks < 2) {
    throw InvalidInput("DataGenConfig: physical mixing needs at least 2 tasks");
  }
}

Matrix physical_H_from_sources(Eigen::Index p, const Matrix& sources) {
  if (p < 2) throw InvalidInput("physical_H: need p >= 2 sensors");
  if (sources.rows() != 2 || sources.cols() < 1) throw InvalidInput("physical_H: sources must be 2 x q");
  Matrix h(p, sources.cols());
  for (Eigen::Index j = 0; j < sources.cols(); ++j) {
    const double amplitude = static_cast<double>(j + 1);
    for (Eigen::Index i = 0; i < p; ++i) {
      const double dx = sources(0, j) - sensor_x(i, p);
      const double dy = sources(1, j);
      const double d2 = dx * dx + dy * dy;
      if (std::sqrt(d2) < kMinSensorDistance) {
        throw InvalidInput("physical_H: source " + std::to_string(j) + " coincides with sensor " +
                           std::to_string(i));
      }
      h(i, j) = amplitude / d2;
    }
  }
  return h;
}

Matrix physical_H(Eigen::Index p, Eigen::Index q, std::mt19937_64& rng) {
  if (p < 2 || q < 1) throw InvalidInput("physical_H: need p >= 2 and q >= 1");
  std::normal_distribution<double> normal(0.0, 1.0);
  Matrix sources(2, q);
  for (Eigen::Index j = 0; j < q; ++j) {
    int draws = 0;
    do {
      if (++draws > kMaxSourceDraws) throw NumericalDegeneracy("physical_H: could not place source");
      sources(0, j) = normal(rng);
      sources(1, j) = normal(rng);
    } while (source_on_sensor(sources(0, j), sources(1, j), p));
  }
  return physical_H_from_sources(p, sources);
}

Matrix structured_noise(const Matrix& h_noise, Eigen::Index count, std::mt19937_64& rng) {
  return h_noise * standard_normal(h_noise.cols(), count, rng);
}

Matrix physical_H(Eigen::Index p, Eigen::Index q, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  return physical_H(p, q, rng);
}

SyntheticData generate(const DataGenConfig& config) {
  config.validate();
  const Eigen::Index p = config.n_tasks;
  const Eigen::Index q = config.n_lat;
  const Eigen::Index n = config.n_points;
  const Eigen::Index m = config.n_test;
  const Eigen::Index total = n + m;
  std::mt19937_64 rng(config.seed);

  Matrix x(1, total);
  x.leftCols(n) = equidistant(-1.0, 1.0, n).transpose();
  std::uniform_real_distribution<double> uniform(-1.0, 1.0);
  for (Eigen::Index t = 0; t < m; ++t) x(0, n + t) = uniform(rng);

  GroundTruth truth;
  truth.lengthscales = equidistant(config.l_min, config.l_max, q);
  truth.H = config.h_mode == MixingMode::gaussian ? standard_normal(p, q, rng) : physical_H(p, q, rng);

  truth.latents.resize(q, total);
  for (Eigen::Index i = 0; i < q; ++i) {
    Matern52Kernel kernel{truth.lengthscales(i), 1.0};
    const Factorization f = cholesky_with_jitter(kernel_matrix(x, kernel, 0.0), kLatentJitter, 1.0,
                                                 "latent prior " + std::to_string(i));
    const Matrix draws = standard_normal(total, 1, rng);
    truth.latents.row(i) = (f.llt.matrixL() * draws).transpose();
  }
  truth.signal = truth.H * truth.latents;

  truth.H_noise = standard_normal(p, config.n_lat_noise, rng);
  truth.noise_str = structured_noise(truth.H_noise, total, rng);
  truth.noise_ind = standard_normal(p, total, rng);
  truth.noise = config.mu_str * truth.noise_str + (1.0 - config.mu_str) * truth.noise_ind;

  const Matrix full = config.mu_noise * truth.noise + (1.0 - config.mu_noise) * truth.signal;

  SyntheticData out;
  out.train.X = x.leftCols(n);
  out.train.Y = full.leftCols(n);
  out.test.X = x.rightCols(m);
  out.test.Y = full.rightCols(m);
  out.test_signal = (1.0 - config.mu_noise) * truth.signal.rightCols(m);
  out.truth = std::move(truth);
  return out;
}

}  // namespace plmc
