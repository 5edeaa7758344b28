#include "plmc/inference.hpp"

#include "plmc/errors.hpp"

#include <cmath>
#include <numbers>
#include <string>

namespace plmc {

namespace {

const double kLog2Pi = std::log(2.0 * std::numbers::pi);

void check_inputs(const Dataset& data, Eigen::Index q, const LatentKernelSet& kernels) {
  data.validate();
  if (static_cast<Eigen::Index>(kernels.size()) != q) {
    throw InvalidInput("number of latent kernels must equal q");
  }
  for (const auto& k : kernels) k.validate();
}

void check_mixing(const Dataset& data, const Matrix& h, const Matrix& sigma) {
  if (h.rows() != data.p()) throw InvalidInput("mixing matrix must have p rows");
  if (sigma.rows() != data.p() || sigma.cols() != data.p()) {
    throw InvalidInput("noise covariance must be p x p");
  }
  require_finite(h, "mixing matrix");
  require_symmetric(sigma, 1e-8, "noise covariance");
}

void check_dense_size(Eigen::Index size, const InferenceOptions& opts, const char* what) {
  if (size > opts.dense_limit) {
    throw InvalidInput(std::string(what) + ": dense route limited to " +
                       std::to_string(opts.dense_limit) + " rows");
  }
}

void check_xstar(const Dataset& data, const Matrix& xstar) {
  if (xstar.rows() != data.d()) throw InvalidInput("test inputs have wrong dimension");
  require_finite(xstar, "test inputs");
}

Factorization factorize_noisy_gram(const Matrix& k, double noise_var, double scale,
                                   Eigen::Index latent) {
  Matrix c = k;
  c.diagonal().array() += noise_var;
  return cholesky_with_jitter(c, 0.0, scale + noise_var,
                              "K_" + std::to_string(latent) + " + sigma^2 I for latent " +
                                  std::to_string(latent));
}

/// Row-major flattening Y_v = vec(Y^T): entry a*n + j is Y(a, j).
Vector flatten_tasks(const Matrix& y) {
  Vector v(y.size());
  const auto n = y.cols();
  for (Eigen::Index a = 0; a < y.rows(); ++a) v.segment(a * n, n) = y.row(a).transpose();
  return v;
}

void fill_task_outputs(const Matrix& h, const std::vector<Matrix>& latent_cov,
                       const InferenceOptions& opts, PredictionResult& out) {
  const auto m = out.latent_mean.cols();
  out.mean = h * out.latent_mean;
  out.variance.resize(h.rows(), m);
  if (opts.covariance == CovarianceMode::full) out.task_cov.resize(m);
  for (Eigen::Index t = 0; t < m; ++t) {
    const Matrix cov = h * latent_cov[t] * h.transpose();
    out.variance.col(t) = cov.diagonal();
    if (opts.covariance == CovarianceMode::full) out.task_cov[t] = 0.5 * (cov + cov.transpose());
  }
}

}  // namespace

void Dataset::validate() const {
  if (X.cols() != Y.cols()) throw InvalidInput("Dataset: X and Y must have the same number of columns");
  if (X.cols() < 1) throw InvalidInput("Dataset: empty");
  if (Y.rows() < 1 || X.rows() < 1) throw InvalidInput("Dataset: empty dimension");
  require_finite(X, "Dataset X");
  require_finite(Y, "Dataset Y");
}

std::vector<Matrix> latent_grams(const Matrix& x, const LatentKernelSet& kernels,
                                 const InferenceOptions& opts) {
  std::vector<Matrix> out;
  out.reserve(kernels.size());
  for (const auto& k : kernels) out.push_back(kernel_matrix(x, k, opts.jitter * k.output_scale));
  return out;
}

double gaussian_log_density(const Vector& v, const Factorization& c) {
  const Vector w = c.llt.matrixL().solve(v);
  return -0.5 * (w.squaredNorm() + c.log_det() + static_cast<double>(v.size()) * kLog2Pi);
}

// Dense route ---------------------------------------------------------------

Matrix naive_covariance(const Dataset& data, const Matrix& h, const Matrix& sigma,
                        const LatentKernelSet& kernels, const InferenceOptions& opts) {
  check_inputs(data, h.cols(), kernels);
  check_mixing(data, h, sigma);
  const auto n = data.n();
  const auto p = data.p();
  check_dense_size(n * p, opts, "naive LMC");
  const std::vector<Matrix> grams = latent_grams(data.X, kernels, opts);
  Matrix big = Matrix::Zero(n * p, n * p);
  for (Eigen::Index a = 0; a < p; ++a) {
    for (Eigen::Index b = 0; b <= a; ++b) {
      auto block = big.block(a * n, b * n, n, n);
      for (std::size_t i = 0; i < grams.size(); ++i) {
        block += h(a, i) * h(b, i) * grams[i];
      }
      block.diagonal().array() += sigma(a, b);
      if (a != b) big.block(b * n, a * n, n, n) = block.transpose();
    }
  }
  return big;
}

namespace {

Factorization factorize_naive(const Matrix& big) {
  const double scale = big.diagonal().cwiseAbs().maxCoeff();
  return cholesky_with_jitter(big, 0.0, scale, "naive LMC covariance");
}

}  // namespace

PredictionResult naive_posterior(const Dataset& data, const Matrix& h, const Matrix& sigma,
                                 const LatentKernelSet& kernels, const Matrix& xstar,
                                 const InferenceOptions& opts) {
  check_xstar(data, xstar);
  const Matrix big = naive_covariance(data, h, sigma, kernels, opts);
  const Factorization f = factorize_naive(big);
  const auto n = data.n();
  const auto p = data.p();
  const auto q = h.cols();
  const auto m = xstar.cols();

  const Vector alpha = f.solve(flatten_tasks(data.Y));
  const Matrix alpha_tasks = Eigen::Map<const Matrix>(alpha.data(), n, p);  // (j, b)
  const Matrix weights = alpha_tasks * h;                                    // n x q

  std::vector<Matrix> cross(q);
  PredictionResult out;
  out.latent_mean.resize(q, m);
  for (Eigen::Index i = 0; i < q; ++i) {
    cross[i] = cross_kernel(data.X, xstar, kernels[i]);
    out.latent_mean.row(i) = (cross[i].transpose() * weights.col(i)).transpose();
  }

  // Column (t * q + i) holds H_{:,i} (x) k_i(X, x*_t).
  Matrix c(n * p, m * q);
  for (Eigen::Index t = 0; t < m; ++t)
    for (Eigen::Index i = 0; i < q; ++i)
      for (Eigen::Index b = 0; b < p; ++b)
        c.col(t * q + i).segment(b * n, n) = h(b, i) * cross[i].col(t);
  const Matrix w = f.llt.matrixL().solve(c);

  std::vector<Matrix> latent_cov(m);
  out.latent_var.resize(q, m);
  for (Eigen::Index t = 0; t < m; ++t) {
    const auto wt = w.middleCols(t * q, q);
    Matrix v = -(wt.transpose() * wt);
    for (Eigen::Index i = 0; i < q; ++i) v(i, i) += kernels[i].output_scale;
    latent_cov[t] = 0.5 * (v + v.transpose());
    out.latent_var.col(t) = latent_cov[t].diagonal();
  }
  fill_task_outputs(h, latent_cov, opts, out);
  return out;
}

double naive_mll(const Dataset& data, const Matrix& h, const Matrix& sigma,
                 const LatentKernelSet& kernels, const InferenceOptions& opts) {
  const Matrix big = naive_covariance(data, h, sigma, kernels, opts);
  return gaussian_log_density(flatten_tasks(data.Y), factorize_naive(big));
}

DenseLatentPosterior dense_posterior_U(const Dataset& data, const Matrix& h,
                                       const Matrix& sigma, const LatentKernelSet& kernels,
                                       const InferenceOptions& opts) {
  check_inputs(data, h.cols(), kernels);
  check_mixing(data, h, sigma);
  const auto n = data.n();
  const auto q = h.cols();
  check_dense_size(n * q, opts, "dense latent posterior");

  // Sigma_P = (H^T Sigma^{-1} H)^{-1}, T = Sigma_P H^T Sigma^{-1}; then
  //   E[U_v | Y] = KK (KK + Sigma_P (x) I)^{-1} vec((T Y)^T)
  //   V[U_v | Y] = KK - KK (KK + Sigma_P (x) I)^{-1} KK,   KK = Diag(K_i).
  const Factorization fs = cholesky_strict(sigma, "noise covariance");
  const Matrix sinv_h = fs.solve(h);
  const Matrix prec = h.transpose() * sinv_h;
  const Matrix sigma_p = cholesky_strict(0.5 * (prec + prec.transpose()),
                                         "projected precision H^T Sigma^{-1} H")
                             .inverse();
  const Matrix t = sigma_p * sinv_h.transpose();
  const Matrix z = t * data.Y;

  const std::vector<Matrix> grams = latent_grams(data.X, kernels, opts);
  Matrix kk = Matrix::Zero(n * q, n * q);
  for (Eigen::Index i = 0; i < q; ++i) kk.block(i * n, i * n, n, n) = grams[i];
  Matrix c = kk;
  for (Eigen::Index i = 0; i < q; ++i)
    for (Eigen::Index k = 0; k < q; ++k)
      c.block(i * n, k * n, n, n).diagonal().array() += sigma_p(i, k);
  const Factorization fc =
      cholesky_with_jitter(c, 0.0, c.diagonal().maxCoeff(), "latent covariance KK + Sigma_P (x) I");

  Vector zv(n * q);
  for (Eigen::Index i = 0; i < q; ++i) zv.segment(i * n, n) = z.row(i).transpose();

  DenseLatentPosterior out;
  const Vector mean = kk * fc.solve(zv);
  out.mean.resize(q, n);
  for (Eigen::Index i = 0; i < q; ++i) out.mean.row(i) = mean.segment(i * n, n).transpose();
  const Matrix w = fc.llt.matrixL().solve(kk);
  out.covariance = kk - w.transpose() * w;
  out.covariance = 0.5 * (out.covariance + out.covariance.transpose());
  return out;
}

// Decoupled route -----------------------------------------------------------

SingleOutputPosterior single_output_posterior(const Matrix& x, const Vector& y,
                                              const Matern52Kernel& kernel, double noise_var,
                                              const InferenceOptions& opts) {
  if (y.size() != x.cols()) throw InvalidInput("single_output_posterior: size mismatch");
  if (!(noise_var > 0.0)) throw InvalidInput("single_output_posterior: noise variance must be positive");
  const Matrix k = kernel_matrix(x, kernel, opts.jitter * kernel.output_scale);
  const Factorization f = factorize_noisy_gram(k, noise_var, kernel.output_scale, 0);
  SingleOutputPosterior out;
  out.mean = k * f.solve(y);
  const Matrix w = f.llt.matrixL().solve(k);
  out.cov = k - w.transpose() * w;
  out.cov = 0.5 * (out.cov + out.cov.transpose());
  return out;
}

LatentPosterior posterior_U(const Dataset& data, const NoiseParametrization& params,
                            const LatentKernelSet& kernels, const InferenceOptions& opts) {
  check_inputs(data, params.q(), kernels);
  if (params.p() != data.p()) throw InvalidInput("posterior_U: p mismatch");
  const Matrix z = compute_T(params) * data.Y;
  const auto q = params.q();
  const std::vector<Matrix> grams = latent_grams(data.X, kernels, opts);
  LatentPosterior out;
  out.mean.resize(q, data.n());
  out.cov_blocks.resize(q);
  for (Eigen::Index i = 0; i < q; ++i) {
    const Factorization f =
        factorize_noisy_gram(grams[i], params.sigma_p(i), kernels[i].output_scale, i);
    out.mean.row(i) = (grams[i] * f.solve(z.row(i).transpose())).transpose();
    const Matrix w = f.llt.matrixL().solve(grams[i]);
    Matrix cov = grams[i] - w.transpose() * w;
    out.cov_blocks[i] = 0.5 * (cov + cov.transpose());
  }
  return out;
}

PredictionResult decoupled_posterior(const Dataset& data, const NoiseParametrization& params,
                                     const LatentKernelSet& kernels, const Matrix& xstar,
                                     const InferenceOptions& opts) {
  check_inputs(data, params.q(), kernels);
  check_xstar(data, xstar);
  if (params.p() != data.p()) throw InvalidInput("decoupled_posterior: p mismatch");
  const Matrix z = compute_T(params) * data.Y;
  const auto q = params.q();
  const auto m = xstar.cols();
  const std::vector<Matrix> grams = latent_grams(data.X, kernels, opts);

  PredictionResult out;
  out.latent_mean.resize(q, m);
  out.latent_var.resize(q, m);
  for (Eigen::Index i = 0; i < q; ++i) {
    const Factorization f =
        factorize_noisy_gram(grams[i], params.sigma_p(i), kernels[i].output_scale, i);
    const Matrix kx = cross_kernel(data.X, xstar, kernels[i]);
    const Vector alpha = f.solve(z.row(i).transpose());
    out.latent_mean.row(i) = (kx.transpose() * alpha).transpose();
    const Matrix w = f.llt.matrixL().solve(kx);
    out.latent_var.row(i) =
        (kernels[i].output_scale - w.colwise().squaredNorm().array()).matrix();
  }
  std::vector<Matrix> latent_cov(m);
  for (Eigen::Index t = 0; t < m; ++t) latent_cov[t] = out.latent_var.col(t).asDiagonal();
  fill_task_outputs(params.H(), latent_cov, opts, out);
  return out;
}

double projected_mll(const Dataset& data, const NoiseParametrization& params,
                     const LatentKernelSet& kernels, const InferenceOptions& opts) {
  check_inputs(data, params.q(), kernels);
  if (params.p() != data.p()) throw InvalidInput("projected_mll: p mismatch");
  const auto n = static_cast<double>(data.n());
  const auto p = params.p();
  const auto q = params.q();
  const Matrix z = compute_T(params) * data.Y;

  // -2 log p = (p-q) n log 2pi + 2n log|R| + n log|B~| + ||L^T Qperp^T Y||_F^2
  //            - 2 sum_i log N(T_i Y | 0, K_i + sigma_i^2 I)
  double minus2 = static_cast<double>(p - q) * n * kLog2Pi;
  minus2 += 2.0 * n * params.mixing.R.diagonal().cwiseAbs().array().log().sum();
  if (p > q) {
    minus2 -= 2.0 * n * params.L.diagonal().array().log().sum();
    minus2 += (params.L.transpose() * (params.mixing.Qperp.transpose() * data.Y)).squaredNorm();
  }
  double log_latent = 0.0;
  const std::vector<Matrix> grams = latent_grams(data.X, kernels, opts);
  for (Eigen::Index i = 0; i < q; ++i) {
    const Factorization f =
        factorize_noisy_gram(grams[i], params.sigma_p(i), kernels[i].output_scale, i);
    log_latent += gaussian_log_density(z.row(i).transpose(), f);
  }
  return -0.5 * minus2 + log_latent;
}

double raw_mll(const Dataset& data, const NoiseParametrization& params,
               const LatentKernelSet& kernels, const InferenceOptions& opts) {
  check_inputs(data, params.q(), kernels);
  if (params.p() != data.p()) throw InvalidInput("raw_mll: p mismatch");
  const auto n = static_cast<double>(data.n());
  const auto p = params.p();
  const auto q = params.q();
  const Matrix sigma_inv = build_sigma_inverse(params);
  const Matrix h = params.H();

  // -2 log p = sum_j Y_j^T Sigma^{-1} Y_j
  //            - sum_i w_i^T (K_i^{-1} + sigma_i^{-2} I)^{-1} w_i,  w_i = Y^T Sigma^{-1} H_i
  //            + sum_i log|K_i + sigma_i^2 I| + 2n log|R| + n log|B~| + np log 2pi
  double minus2 = (data.Y.transpose() * sigma_inv * data.Y).trace();
  const Matrix w = data.Y.transpose() * sigma_inv * h;  // n x q
  const std::vector<Matrix> grams = latent_grams(data.X, kernels, opts);
  for (Eigen::Index i = 0; i < q; ++i) {
    const double s = params.sigma_p(i);
    const Factorization f = factorize_noisy_gram(grams[i], s, kernels[i].output_scale, i);
    const Vector wi = w.col(i);
    // (K^{-1} + s^{-1} I)^{-1} = s I - s^2 (K + s I)^{-1}
    const double quad = s * wi.squaredNorm() - s * s * wi.dot(Vector(f.solve(wi)));
    minus2 -= quad;
    minus2 += f.log_det();
  }
  minus2 += 2.0 * n * params.mixing.R.diagonal().cwiseAbs().array().log().sum();
  if (p > q) minus2 -= 2.0 * n * params.L.diagonal().array().log().sum();
  minus2 += static_cast<double>(p) * n * kLog2Pi;
  return -0.5 * minus2;
}

LikelihoodDecomposition likelihood_decomposition_check(const Dataset& data,
                                                       const NoiseParametrization& params,
                                                       const LatentKernelSet& kernels,
                                                       const InferenceOptions& opts) {
  check_inputs(data, params.q(), kernels);
  const auto n = data.n();
  const auto q = params.q();
  check_dense_size(n * q, opts, "likelihood decomposition");
  const Matrix sigma = build_sigma(params);
  const Matrix h = params.H();
  const Factorization fs = cholesky_strict(sigma, "noise covariance");
  const Matrix sinv_h = fs.solve(h);
  const Matrix prec = h.transpose() * sinv_h;
  const Factorization fp = cholesky_strict(0.5 * (prec + prec.transpose()), "H^T Sigma^{-1} H");
  const Matrix sigma_p = fp.inverse();
  const Matrix t = sigma_p * sinv_h.transpose();
  const Matrix z = t * data.Y;
  const Factorization fsp = cholesky_strict(0.5 * (sigma_p + sigma_p.transpose()), "Sigma_P");

  LikelihoodDecomposition out;
  for (Eigen::Index j = 0; j < n; ++j) {
    out.log_corrective += gaussian_log_density(data.Y.col(j), fs) -
                          gaussian_log_density(z.col(j), fsp);
  }

  // Latent integral: vec((T Y)^T) ~ N(0, Diag(K_i) + Sigma_P (x) I_n).
  const std::vector<Matrix> grams = latent_grams(data.X, kernels, opts);
  Matrix c = Matrix::Zero(n * q, n * q);
  for (Eigen::Index i = 0; i < q; ++i) {
    c.block(i * n, i * n, n, n) = grams[i];
    for (Eigen::Index k = 0; k < q; ++k)
      c.block(i * n, k * n, n, n).diagonal().array() += sigma_p(i, k);
  }
  Vector zv(n * q);
  for (Eigen::Index i = 0; i < q; ++i) zv.segment(i * n, n) = z.row(i).transpose();
  out.log_latent = gaussian_log_density(
      zv, cholesky_with_jitter(c, 0.0, c.diagonal().maxCoeff(), "latent covariance"));
  return out;
}

}  // namespace plmc
