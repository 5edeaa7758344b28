#include "plmc/linalg.hpp"

#include "plmc/errors.hpp"

#include <unsupported/Eigen/MatrixFunctions>

#include <cmath>
#include <limits>
#include <sstream>

namespace plmc {

double Factorization::log_det() const {
  return 2.0 * llt.matrixLLT().diagonal().array().log().sum();
}

Matrix Factorization::inverse() const {
  const auto n = llt.matrixLLT().rows();
  return llt.solve(Matrix::Identity(n, n));
}

bool factorization_ok(const Eigen::LLT<Matrix>& llt, const Matrix& a) {
  if (llt.info() != Eigen::Success) return false;
  if (a.rows() == 0) return true;
  const Vector piv = llt.matrixLLT().diagonal();
  if (!piv.allFinite()) return false;
  const double scale = a.diagonal().cwiseAbs().maxCoeff();
  const double floor = static_cast<double>(a.rows()) *
                       std::numeric_limits<double>::epsilon() * scale;
  return piv.minCoeff() > 0.0 && piv.array().square().minCoeff() > floor;
}

Factorization cholesky_with_jitter(const Matrix& a, double jitter, double scale,
                                   const std::string& what,
                                   double max_relative_jitter) {
  const double ceiling = scale * max_relative_jitter;
  double j = jitter;
  for (;;) {
    Matrix shifted = a;
    shifted.diagonal().array() += j;
    Factorization f;
    f.llt.compute(shifted);
    f.jitter = j;
    if (factorization_ok(f.llt, shifted)) return f;
    const double next = j > 0.0 ? 10.0 * j : scale * 1e-10;
    if (next > ceiling * (1.0 + 1e-12)) {
      std::ostringstream msg;
      msg << "Cholesky factorization of " << what
          << " failed (last jitter tried: " << j << ")";
      throw NumericalDegeneracy(msg.str());
    }
    j = next;
  }
}

Factorization cholesky_strict(const Matrix& a, const std::string& what) {
  Factorization f;
  f.llt.compute(a);
  if (!factorization_ok(f.llt, a)) {
    throw NumericalDegeneracy("Cholesky factorization of " + what + " failed");
  }
  return f;
}

double max_asymmetry(const Matrix& a) {
  if (a.size() == 0) return 0.0;
  return (a - a.transpose()).cwiseAbs().maxCoeff();
}

void require_symmetric(const Matrix& a, double tol, const std::string& what) {
  if (a.rows() != a.cols()) {
    throw InvalidInput(what + " must be square");
  }
  const double scale = a.size() == 0 ? 1.0 : std::max(1.0, a.cwiseAbs().maxCoeff());
  if (max_asymmetry(a) > tol * scale) {
    throw InvalidInput(what + " is not symmetric");
  }
}

void require_finite(const Matrix& a, const std::string& what) {
  if (!a.allFinite()) throw InvalidInput(what + " contains non-finite values");
}

Matrix expm(const Matrix& a) {
  if (a.size() == 0) return a;
  return a.exp();
}

Matrix expm_adjoint(const Matrix& a, const Matrix& g) {
  // The adjoint of L_exp(A, .) is L_exp(A^T, .); the Frechet derivative is
  // the upper-right block of exp([[X, E], [0, X]]).
  const auto p = a.rows();
  if (p == 0) return a;
  Matrix block = Matrix::Zero(2 * p, 2 * p);
  block.topLeftCorner(p, p) = a.transpose();
  block.bottomRightCorner(p, p) = a.transpose();
  block.topRightCorner(p, p) = g;
  const Matrix e = block.exp();
  return e.topRightCorner(p, p);
}

Matrix orthonormal_complement(const Matrix& q) {
  const auto p = q.rows();
  const auto k = q.cols();
  Eigen::HouseholderQR<Matrix> qr(q);
  const Matrix full = qr.householderQ() * Matrix::Identity(p, p);
  return full.rightCols(p - k);
}

ThinQR thin_qr(const Matrix& h) {
  const auto p = h.rows();
  const auto q = h.cols();
  Eigen::HouseholderQR<Matrix> qr(h);
  ThinQR out;
  out.Q = qr.householderQ() * Matrix::Identity(p, q);
  out.R = qr.matrixQR().topRows(q).triangularView<Eigen::Upper>();
  for (Eigen::Index i = 0; i < q; ++i) {
    if (out.R(i, i) < 0.0) {
      out.R.row(i) *= -1.0;
      out.Q.col(i) *= -1.0;
    }
  }
  return out;
}

}  // namespace plmc
