#pragma once

#include "plmc/linalg.hpp"

#include <vector>

namespace plmc {

/// Isotropic Matern-5/2 covariance
///   k(r) = s * (1 + sqrt(5) r / l + 5 r^2 / (3 l^2)) * exp(-sqrt(5) r / l).
struct Matern52Kernel {
  double lengthscale = 1.0;
  double output_scale = 1.0;

  void validate() const;
};

using LatentKernelSet = std::vector<Matern52Kernel>;

/// Relative diagonal jitter used for latent Gram matrices by default.
inline constexpr double kDefaultJitter = 1e-8;

double matern52_of_distance(double r, const Matern52Kernel& kernel);

/// d k / d log(lengthscale) at distance r.
double matern52_dlog_lengthscale(double r, const Matern52Kernel& kernel);

double matern52(const Eigen::Ref<const Vector>& x, const Eigen::Ref<const Vector>& y,
                const Matern52Kernel& kernel);

/// Pairwise Euclidean distances between the columns of `a` (d x n) and
/// `b` (d x m), computed as ||x - y|| directly.
Matrix distance_matrix(const Matrix& a, const Matrix& b);

/// n x n Gram matrix with `jitter` added to the diagonal.
Matrix kernel_matrix(const Matrix& x, const Matern52Kernel& kernel, double jitter);

/// n x m cross-covariance, entry (j, t) = k(x_j, xstar_t).
Matrix cross_kernel(const Matrix& x, const Matrix& xstar, const Matern52Kernel& kernel);

/// Gram matrix plus the default relative jitter, factorized with escalation.
Factorization factorize_kernel(const Matrix& x, const Matern52Kernel& kernel,
                               double relative_jitter = kDefaultJitter);

}  // namespace plmc
