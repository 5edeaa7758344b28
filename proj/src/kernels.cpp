#include "plmc/kernels.hpp"

#include "plmc/errors.hpp"

#include <cmath>
#include <sstream>

namespace plmc {

namespace {
const double kSqrt5 = std::sqrt(5.0);
}

void Matern52Kernel::validate() const {
  if (!(lengthscale > 0.0) || !std::isfinite(lengthscale)) {
    throw InvalidInput("Matern52Kernel: lengthscale must be positive and finite");
  }
  if (!(output_scale > 0.0) || !std::isfinite(output_scale)) {
    throw InvalidInput("Matern52Kernel: output_scale must be positive and finite");
  }
}

double matern52_of_distance(double r, const Matern52Kernel& kernel) {
  const double u = kSqrt5 * r / kernel.lengthscale;
  return kernel.output_scale * (1.0 + u + u * u / 3.0) * std::exp(-u);
}

double matern52_dlog_lengthscale(double r, const Matern52Kernel& kernel) {
  const double u = kSqrt5 * r / kernel.lengthscale;
  return kernel.output_scale * (u * u / 3.0) * (1.0 + u) * std::exp(-u);
}

double matern52(const Eigen::Ref<const Vector>& x, const Eigen::Ref<const Vector>& y,
                const Matern52Kernel& kernel) {
  kernel.validate();
  if (x.size() != y.size()) throw InvalidInput("matern52: dimension mismatch");
  if (!x.allFinite() || !y.allFinite()) {
    throw InvalidInput("matern52: non-finite input");
  }
  return matern52_of_distance((x - y).norm(), kernel);
}

Matrix distance_matrix(const Matrix& a, const Matrix& b) {
  if (a.rows() != b.rows()) throw InvalidInput("distance_matrix: dimension mismatch");
  Matrix r(a.cols(), b.cols());
  for (Eigen::Index t = 0; t < b.cols(); ++t) {
    for (Eigen::Index j = 0; j < a.cols(); ++j) {
      r(j, t) = (a.col(j) - b.col(t)).norm();
    }
  }
  return r;
}

Matrix kernel_matrix(const Matrix& x, const Matern52Kernel& kernel, double jitter) {
  kernel.validate();
  require_finite(x, "kernel_matrix input");
  if (x.cols() < 1) throw InvalidInput("kernel_matrix: need at least one point");
  if (jitter < 0.0) throw InvalidInput("kernel_matrix: negative jitter");
  const auto n = x.cols();
  Matrix k(n, n);
  for (Eigen::Index j = 0; j < n; ++j) {
    k(j, j) = kernel.output_scale + jitter;
    for (Eigen::Index i = j + 1; i < n; ++i) {
      const double v = matern52_of_distance((x.col(i) - x.col(j)).norm(), kernel);
      k(i, j) = v;
      k(j, i) = v;
    }
  }
  return k;
}

Matrix cross_kernel(const Matrix& x, const Matrix& xstar, const Matern52Kernel& kernel) {
  kernel.validate();
  if (x.rows() != xstar.rows()) throw InvalidInput("cross_kernel: dimension mismatch");
  require_finite(x, "cross_kernel input");
  require_finite(xstar, "cross_kernel test input");
  Matrix k(x.cols(), xstar.cols());
  for (Eigen::Index t = 0; t < xstar.cols(); ++t) {
    for (Eigen::Index j = 0; j < x.cols(); ++j) {
      k(j, t) = matern52_of_distance((x.col(j) - xstar.col(t)).norm(), kernel);
    }
  }
  return k;
}

Factorization factorize_kernel(const Matrix& x, const Matern52Kernel& kernel,
                               double relative_jitter) {
  const Matrix k = kernel_matrix(x, kernel, 0.0);
  std::ostringstream what;
  what << "Matern52 kernel matrix (lengthscale=" << kernel.lengthscale
       << ", output_scale=" << kernel.output_scale << ")";
  return cholesky_with_jitter(k, relative_jitter * kernel.output_scale,
                              kernel.output_scale, what.str());
}

}  // namespace plmc
