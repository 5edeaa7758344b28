#pragma once

#include <Eigen/Dense>

#include <string>

namespace plmc {

using Matrix = Eigen::MatrixXd;
using Vector = Eigen::VectorXd;

/// Cholesky factor together with the diagonal shift that made it succeed.
struct Factorization {
  Eigen::LLT<Matrix> llt;
  double jitter = 0.0;  // absolute amount added to the diagonal

  Matrix solve(const Matrix& rhs) const { return llt.solve(rhs); }
  double log_det() const;
  Matrix inverse() const;
};

/// True when `llt` succeeded and no pivot is negligible relative to the
/// largest diagonal entry of the factored matrix.
bool factorization_ok(const Eigen::LLT<Matrix>& llt, const Matrix& a);

/// Factorizes `a + jitter*I`. On failure the jitter is multiplied by 10
/// (starting from `scale*1e-10` when `jitter` is 0) until it exceeds
/// `scale*max_relative_jitter`. Throws NumericalDegeneracy naming `what`.
Factorization cholesky_with_jitter(const Matrix& a, double jitter, double scale,
                                   const std::string& what,
                                   double max_relative_jitter = 1e-4);

/// Plain factorization, throwing NumericalDegeneracy on failure.
Factorization cholesky_strict(const Matrix& a, const std::string& what);

double max_asymmetry(const Matrix& a);
void require_symmetric(const Matrix& a, double tol, const std::string& what);
void require_finite(const Matrix& a, const std::string& what);

/// Matrix exponential.
Matrix expm(const Matrix& a);

/// Adjoint of the Frechet derivative of exp at `a`: given G = df/d exp(a),
/// returns df/da.
Matrix expm_adjoint(const Matrix& a, const Matrix& g);

/// Orthonormal basis (p x (p-q)) of the orthogonal complement of the
/// column span of `q` (assumed orthonormal, p x q).
Matrix orthonormal_complement(const Matrix& q);

/// Thin QR with the sign convention diag(R) >= 0.
struct ThinQR {
  Matrix Q;
  Matrix R;
};
ThinQR thin_qr(const Matrix& h);

}  // namespace plmc
