#include "plmc/noise_param.hpp"

#include "plmc/errors.hpp"

#include <algorithm>
#include <cmath>
#include <vector>

namespace plmc {

namespace {

Matrix symmetrized(const Matrix& a) { return 0.5 * (a + a.transpose()); }

// Minimizes 0.5 d^T G d - b^T d subject to d >= floor (G positive definite),
// by the Lawson-Hanson active-set method on y = d - floor.
Vector bounded_quadratic_minimizer(const Matrix& g, const Vector& b, double floor) {
  const Eigen::Index k = b.size();
  const Vector c = b - g * Vector::Constant(k, floor);
  const double tol = 1e-14 * std::max(1.0, c.cwiseAbs().maxCoeff());
  std::vector<bool> free(k, false);
  Vector y = Vector::Zero(k);

  auto solve_free = [&] {
    std::vector<Eigen::Index> idx;
    for (Eigen::Index i = 0; i < k; ++i)
      if (free[i]) idx.push_back(i);
    const auto m = static_cast<Eigen::Index>(idx.size());
    Matrix gf(m, m);
    Vector cf(m);
    for (Eigen::Index a = 0; a < m; ++a) {
      cf(a) = c(idx[a]);
      for (Eigen::Index e = 0; e < m; ++e) gf(a, e) = g(idx[a], idx[e]);
    }
    const Vector zf = gf.llt().solve(cf);
    Vector z = Vector::Zero(k);
    for (Eigen::Index a = 0; a < m; ++a) z(idx[a]) = zf(a);
    return z;
  };

  for (Eigen::Index outer = 0; outer < 4 * k + 4; ++outer) {
    const Vector w = c - g * y;
    Eigen::Index enter = -1;
    for (Eigen::Index i = 0; i < k; ++i)
      if (!free[i] && w(i) > tol && (enter < 0 || w(i) > w(enter))) enter = i;
    if (enter < 0) break;
    free[enter] = true;
    for (Eigen::Index inner = 0; inner <= k; ++inner) {
      const Vector z = solve_free();
      double alpha = 1.0;
      for (Eigen::Index i = 0; i < k; ++i)
        if (free[i] && z(i) <= 0.0) alpha = std::min(alpha, y(i) / (y(i) - z(i)));
      y += alpha * (z - y);
      if (alpha == 1.0) break;
      for (Eigen::Index i = 0; i < k; ++i)
        if (free[i] && y(i) <= tol) {
          free[i] = false;
          y(i) = 0.0;
        }
    }
  }
  return (y.array() + floor).matrix();
}

bool is_upper_triangular(const Matrix& r) {
  for (Eigen::Index j = 0; j < r.cols(); ++j)
    for (Eigen::Index i = j + 1; i < r.rows(); ++i)
      if (r(i, j) != 0.0) return false;
  return true;
}

bool is_lower_triangular(const Matrix& l) {
  for (Eigen::Index j = 0; j < l.cols(); ++j)
    for (Eigen::Index i = 0; i < j; ++i)
      if (l(i, j) != 0.0) return false;
  return true;
}

bool is_diagonal(const Matrix& a) {
  for (Eigen::Index j = 0; j < a.cols(); ++j)
    for (Eigen::Index i = 0; i < a.rows(); ++i)
      if (i != j && a(i, j) != 0.0) return false;
  return true;
}

}  // namespace

Matrix MixingQR::Qplus() const {
  Matrix out(p(), p());
  out << Q, Qperp;
  return out;
}

Matrix MixingQR::R_inverse() const {
  return R.triangularView<Eigen::Upper>().solve(Matrix::Identity(q(), q()));
}

void MixingQR::validate(double tol) const {
  const auto pp = Q.rows();
  const auto qq = Q.cols();
  if (qq < 1 || qq > pp) throw InvalidInput("MixingQR: need 1 <= q <= p");
  if (R.rows() != qq || R.cols() != qq) throw InvalidInput("MixingQR: R must be q x q");
  if (Qperp.rows() != pp || Qperp.cols() != pp - qq) {
    throw InvalidInput("MixingQR: Qperp must be p x (p - q)");
  }
  if (!is_upper_triangular(R)) throw InvalidInput("MixingQR: R must be upper triangular");
  if ((R.diagonal().array() == 0.0).any()) throw InvalidInput("MixingQR: R is singular");
  const Matrix iq = Matrix::Identity(qq, qq);
  const Matrix ip = Matrix::Identity(pp - qq, pp - qq);
  if ((Q.transpose() * Q - iq).norm() > tol ||
      (Qperp.transpose() * Qperp - ip).norm() > tol ||
      (Q.transpose() * Qperp).norm() > tol) {
    throw InvalidInput("MixingQR: [Q | Qperp] is not orthonormal");
  }
}

MixingQR MixingQR::from_H(const Matrix& h) {
  require_finite(h, "mixing matrix");
  if (h.cols() < 1 || h.cols() > h.rows()) throw InvalidInput("MixingQR: need 1 <= q <= p");
  const ThinQR qr = thin_qr(h);
  MixingQR out{qr.Q, qr.R, orthonormal_complement(qr.Q)};
  return out;
}

MixingQR MixingQR::from_Qplus(const Matrix& qplus, const Matrix& r) {
  const auto q = r.rows();
  return MixingQR{qplus.leftCols(q), r, qplus.rightCols(qplus.cols() - q)};
}

void NoiseParametrization::validate() const {
  mixing.validate(1e-8);
  const auto pp = p();
  const auto qq = q();
  const auto k = pp - qq;
  if (sigma_p.size() != qq) throw InvalidInput("NoiseParametrization: sigma_p must have length q");
  if (!(sigma_p.array() > 0.0).all() || !sigma_p.allFinite()) {
    throw InvalidInput("NoiseParametrization: sigma_p entries must be positive");
  }
  if (M.rows() != qq || M.cols() != k) throw InvalidInput("NoiseParametrization: M must be q x (p - q)");
  if (L.rows() != k || L.cols() != k) throw InvalidInput("NoiseParametrization: L must be (p - q) x (p - q)");
  if (!M.allFinite() || !L.allFinite()) throw InvalidInput("NoiseParametrization: non-finite entries");
  if (!is_lower_triangular(L)) throw InvalidInput("NoiseParametrization: L must be lower triangular");
  if (k > 0 && !(L.diagonal().array() > 0.0).all()) {
    throw InvalidInput("NoiseParametrization: L diagonal must be positive");
  }
  const bool zero_m = flags.bdn || flags.oilmm;
  if (zero_m && !(M.array() == 0.0).all()) {
    throw InvalidInput("NoiseParametrization: bdn/oilmm require M = 0");
  }
  if ((flags.diag_b || flags.oilmm) && !is_diagonal(L)) {
    throw InvalidInput("NoiseParametrization: diagonal Btilde requires diagonal L");
  }
  if (flags.oilmm) {
    if (!is_diagonal(mixing.R) || !(mixing.R.diagonal().array() > 0.0).all()) {
      throw InvalidInput("NoiseParametrization: oilmm requires positive diagonal R");
    }
    if (k > 0 && !(L.diagonal().array() == L(0, 0)).all()) {
      throw InvalidInput("NoiseParametrization: oilmm requires L = lambda * I");
    }
  }
}

SigmaBlocks decompose_symmetric(const Matrix& s, const MixingQR& mixing) {
  require_symmetric(s, 1e-8, "decompose_symmetric input");
  if (s.rows() != mixing.p()) throw InvalidInput("decompose_symmetric: size mismatch");
  const Matrix& q = mixing.Q;
  const Matrix& qp = mixing.Qperp;
  return SigmaBlocks{symmetrized(q.transpose() * s * q),
                     symmetrized(qp.transpose() * s * qp),
                     q.transpose() * s * qp};
}

Matrix reassemble(const SigmaBlocks& b, const MixingQR& mixing) {
  const Matrix& q = mixing.Q;
  const Matrix& qp = mixing.Qperp;
  const Matrix cross = q * b.C * qp.transpose();
  return q * b.A * q.transpose() + qp * b.B * qp.transpose() + cross + cross.transpose();
}

Matrix d_plus_inverse(const NoiseParametrization& params) {
  const auto qq = params.q();
  const auto k = params.p() - qq;
  const Matrix sp = params.sigma_p.asDiagonal();
  Matrix out(qq + k, qq + k);
  out.topLeftCorner(qq, qq) = params.sigma_p.cwiseInverse().asDiagonal();
  out.topRightCorner(qq, k) = params.M;
  out.bottomLeftCorner(k, qq) = params.M.transpose();
  out.bottomRightCorner(k, k) =
      symmetrized(params.B_tilde_inverse() + params.M.transpose() * sp * params.M);
  return out;
}

DPlusBlocks d_plus_blocks(const NoiseParametrization& params) {
  const auto k = params.p() - params.q();
  const Matrix sp = params.sigma_p.asDiagonal();
  // B~ = (L L^T)^{-1} = L^{-T} L^{-1}
  const Matrix l_inv =
      params.L.triangularView<Eigen::Lower>().solve(Matrix::Identity(k, k));
  const Matrix b_tilde = l_inv.transpose() * l_inv;
  DPlusBlocks out;
  out.B_tilde = b_tilde;
  out.M_tilde = -sp * params.M * b_tilde;
  out.D_tilde = symmetrized(sp + sp * params.M * b_tilde * params.M.transpose() * sp);
  return out;
}

namespace {

void require_positive_definite(const Matrix& a) {
  Eigen::LLT<Matrix> llt(a);
  if (!factorization_ok(llt, a)) {
    throw IndefiniteNoise("noise precision D+^{-1} is not positive definite");
  }
}

}  // namespace

Matrix build_sigma(const NoiseParametrization& params) {
  params.validate();
  require_positive_definite(d_plus_inverse(params));
  const auto qq = params.q();
  const auto k = params.p() - qq;
  const DPlusBlocks d = d_plus_blocks(params);
  const Matrix& r = params.mixing.R;
  Matrix middle(qq + k, qq + k);
  middle.topLeftCorner(qq, qq) = r * d.D_tilde * r.transpose();
  middle.topRightCorner(qq, k) = r * d.M_tilde;
  middle.bottomLeftCorner(k, qq) = middle.topRightCorner(qq, k).transpose();
  middle.bottomRightCorner(k, k) = d.B_tilde;
  const Matrix qplus = params.mixing.Qplus();
  return symmetrized(qplus * middle * qplus.transpose());
}

Matrix build_sigma_inverse(const NoiseParametrization& params) {
  params.validate();
  const Matrix dinv = d_plus_inverse(params);
  require_positive_definite(dinv);
  const auto qq = params.q();
  const auto k = params.p() - qq;
  const Matrix r_inv = params.mixing.R_inverse();
  Matrix middle(qq + k, qq + k);
  middle.topLeftCorner(qq, qq) = r_inv.transpose() * dinv.topLeftCorner(qq, qq) * r_inv;
  middle.topRightCorner(qq, k) = r_inv.transpose() * params.M;
  middle.bottomLeftCorner(k, qq) = middle.topRightCorner(qq, k).transpose();
  middle.bottomRightCorner(k, k) = dinv.bottomRightCorner(k, k);
  const Matrix qplus = params.mixing.Qplus();
  return symmetrized(qplus * middle * qplus.transpose());
}

Matrix compute_T(const NoiseParametrization& params) {
  params.validate();
  return params.mixing.R_inverse() * params.mixing.Q.transpose() +
         params.sigma_p.asDiagonal() * params.M * params.mixing.Qperp.transpose();
}

DpnCheck check_dpn(const Matrix& h, const Matrix& sigma, double tol) {
  require_symmetric(sigma, 1e-8, "check_dpn noise matrix");
  if (h.rows() != sigma.rows()) throw InvalidInput("check_dpn: size mismatch");
  const Factorization f = cholesky_strict(sigma, "noise covariance (check_dpn)");
  const Matrix prec = h.transpose() * f.solve(h);
  DpnCheck out;
  out.max_diagonal = prec.diagonal().cwiseAbs().maxCoeff();
  for (Eigen::Index j = 0; j < prec.cols(); ++j)
    for (Eigen::Index i = 0; i < prec.rows(); ++i)
      if (i != j) out.off_diagonal = std::max(out.off_diagonal, std::abs(prec(i, j)));
  out.is_dpn = out.off_diagonal <= tol * out.max_diagonal;
  return out;
}

NoiseProjection project_noise(const Matrix& sigma_opt, const MixingQR& mixing) {
  mixing.validate(1e-8);
  require_symmetric(sigma_opt, 1e-8, "project_noise input");
  if (sigma_opt.rows() != mixing.p()) throw InvalidInput("project_noise: size mismatch");
  const Matrix prec = symmetrized(
      cholesky_strict(sigma_opt, "Sigma_opt (project_noise)").inverse());
  SigmaBlocks blocks = decompose_symmetric(prec, mixing);

  const Matrix r_inv = mixing.R_inverse();
  const Matrix x = r_inv * r_inv.transpose();
  const Matrix hadamard = x.cwiseProduct(x);
  const Vector rhs = (r_inv * blocks.A * r_inv.transpose()).diagonal();

  NoiseProjection out;
  out.d_prime = hadamard.llt().solve(rhs);
  if (!(out.d_prime.array() > kMinProjectedPrecision).all()) {
    out.d_prime = bounded_quadratic_minimizer(hadamard, rhs, kMinProjectedPrecision);
    out.clamped = true;
  }

  blocks.A = symmetrized(r_inv.transpose() * out.d_prime.asDiagonal() * r_inv);
  out.sigma_app_inverse = symmetrized(reassemble(blocks, mixing));
  out.distance = (prec - out.sigma_app_inverse).norm();

  Eigen::LLT<Matrix> llt(out.sigma_app_inverse);
  out.positive_definite = factorization_ok(llt, out.sigma_app_inverse);
  if (out.positive_definite) {
    out.sigma_app = symmetrized(llt.solve(Matrix::Identity(prec.rows(), prec.cols())));
  } else {
    out.sigma_app = out.sigma_app_inverse.inverse();
  }
  return out;
}

Matrix orthonormal_from_skew(const Matrix& s) {
  if (s.rows() != s.cols()) throw InvalidInput("orthonormal_from_skew: matrix must be square");
  require_finite(s, "skew generator");
  const double scale = s.size() == 0 ? 1.0 : std::max(1.0, s.cwiseAbs().maxCoeff());
  if (s.size() > 0 && (s + s.transpose()).cwiseAbs().maxCoeff() > 1e-12 * scale) {
    throw InvalidInput("orthonormal_from_skew: generator is not skew-symmetric");
  }
  return expm(s);
}

}  // namespace plmc
