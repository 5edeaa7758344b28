#pragma once

// Exact LMC posteriors and marginal likelihoods.
//
// Three routes are provided:
//  * the dense "naive" route over the (np x np) covariance
//      Kcal = (H (x) I_n) Diag(K_i) (H^T (x) I_n) + Sigma (x) I_n,
//  * the dense latent route over (nq x nq) matrices, valid for any Sigma,
//  * the decoupled route, valid when H^T Sigma^{-1} H is diagonal, where each
//    latent process is a single-output GP fitted to the projected data T_i Y
//    with noise variance sigma_i^2.
// All likelihoods are returned as log p(Y).

#include "plmc/kernels.hpp"
#include "plmc/noise_param.hpp"

#include <vector>

namespace plmc {

struct Dataset {
  Matrix X;  // d x n
  Matrix Y;  // p x n; row i is task i

  Eigen::Index n() const { return X.cols(); }
  Eigen::Index d() const { return X.rows(); }
  Eigen::Index p() const { return Y.rows(); }

  void validate() const;
};

enum class CovarianceMode { marginal, full };

struct InferenceOptions {
  double jitter = kDefaultJitter;  // relative to each latent output_scale
  CovarianceMode covariance = CovarianceMode::marginal;
  Eigen::Index dense_limit = 4000;  // cap on n*p (and n*q) for dense routes
};

struct PredictionResult {
  Matrix mean;                  // p x m
  Matrix variance;              // p x m, diag(H V H^T) per test point
  std::vector<Matrix> task_cov; // m matrices p x p (full mode only)
  Matrix latent_mean;           // q x m
  Matrix latent_var;            // q x m
};

/// Posterior of the latent values at the training points. Under DPN the
/// covariance is block diagonal and only the q diagonal blocks are kept.
struct LatentPosterior {
  Matrix mean;                     // q x n
  std::vector<Matrix> cov_blocks;  // q blocks of n x n
};

/// Dense latent posterior: mean (q x n) and full covariance of U_v, indexed
/// i * n + j (latent-major).
struct DenseLatentPosterior {
  Matrix mean;
  Matrix covariance;
};

struct LikelihoodDecomposition {
  double log_corrective = 0.0;  // sum_j log N(Y_j | 0, Sigma) - log N(T Y_j | 0, Sigma_P)
  double log_latent = 0.0;      // log of the latent integral of the projected data
};

/// Latent Gram matrices with the configured relative jitter.
std::vector<Matrix> latent_grams(const Matrix& x, const LatentKernelSet& kernels,
                                 const InferenceOptions& opts);

/// log N(v | 0, C) from a factorization of C.
double gaussian_log_density(const Vector& v, const Factorization& c);

// Dense route --------------------------------------------------------------

Matrix naive_covariance(const Dataset& data, const Matrix& h, const Matrix& sigma,
                        const LatentKernelSet& kernels, const InferenceOptions& opts = {});

PredictionResult naive_posterior(const Dataset& data, const Matrix& h, const Matrix& sigma,
                                 const LatentKernelSet& kernels, const Matrix& xstar,
                                 const InferenceOptions& opts = {});

double naive_mll(const Dataset& data, const Matrix& h, const Matrix& sigma,
                 const LatentKernelSet& kernels, const InferenceOptions& opts = {});

DenseLatentPosterior dense_posterior_U(const Dataset& data, const Matrix& h,
                                       const Matrix& sigma, const LatentKernelSet& kernels,
                                       const InferenceOptions& opts = {});

// Decoupled route ----------------------------------------------------------

LatentPosterior posterior_U(const Dataset& data, const NoiseParametrization& params,
                            const LatentKernelSet& kernels, const InferenceOptions& opts = {});

PredictionResult decoupled_posterior(const Dataset& data, const NoiseParametrization& params,
                                     const LatentKernelSet& kernels, const Matrix& xstar,
                                     const InferenceOptions& opts = {});

double projected_mll(const Dataset& data, const NoiseParametrization& params,
                     const LatentKernelSet& kernels, const InferenceOptions& opts = {});

/// Alternate decoupled form built from Sigma^{-1} explicitly.
double raw_mll(const Dataset& data, const NoiseParametrization& params,
               const LatentKernelSet& kernels, const InferenceOptions& opts = {});

/// Projection-loss term and latent term of log p(Y), computed densely;
/// their sum equals projected_mll.
LikelihoodDecomposition likelihood_decomposition_check(const Dataset& data,
                                                       const NoiseParametrization& params,
                                                       const LatentKernelSet& kernels,
                                                       const InferenceOptions& opts = {});

/// Single-output GP posterior at the training inputs for targets `y` with
/// noise variance `noise_var`.
struct SingleOutputPosterior {
  Vector mean;
  Matrix cov;
};
SingleOutputPosterior single_output_posterior(const Matrix& x, const Vector& y,
                                              const Matern52Kernel& kernel, double noise_var,
                                              const InferenceOptions& opts = {});

}  // namespace plmc
