#pragma once

// Joint parametrization of the mixing matrix H and the inter-task noise
// covariance Sigma such that H^T Sigma^{-1} H is diagonal (diagonally
// projectable noise, "DPN").
//
// With H = Q R and Q+ = [Q | Qperp], any symmetric Sigma^{-1} factors as
//   Sigma^{-1} = Q+ R+^{-T} D+^{-1} R+^{-1} Q+^T,   R+ = blkdiag(R, I),
//   D+^{-1}    = [[D, M], [M^T, B]],
// and DPN holds iff D is diagonal, in which case D = Sigma_P^{-1}. The free
// noise parameters are Sigma_P (diagonal), M, and L with Btilde^{-1} = L L^T,
// where Btilde is the lower-right block of D+ (the middle factor of Sigma).

#include "plmc/linalg.hpp"

namespace plmc {

struct MixingQR {
  Matrix Q;      // p x q, orthonormal columns
  Matrix R;      // q x q, upper triangular, nonzero diagonal
  Matrix Qperp;  // p x (p - q), orthonormal complement of Q

  Eigen::Index p() const { return Q.rows(); }
  Eigen::Index q() const { return Q.cols(); }
  Matrix H() const { return Q * R; }
  Matrix Qplus() const;
  Matrix R_inverse() const;

  /// Throws InvalidInput when orthonormality (to `tol`, Frobenius) or the
  /// shape/triangularity invariants fail.
  void validate(double tol = 1e-10) const;

  /// QR of H with diag(R) > 0 and an arbitrary complement.
  static MixingQR from_H(const Matrix& h);
  /// Splits a p x p orthonormal Q+ into its first q and last p - q columns.
  static MixingQR from_Qplus(const Matrix& qplus, const Matrix& r);
};

struct NoiseFlags {
  bool bdn = false;     // M = 0
  bool diag_b = false;  // L diagonal
  bool oilmm = false;   // R positive diagonal, M = 0, L = lambda * I
};

struct NoiseParametrization {
  MixingQR mixing;
  Vector sigma_p;  // diagonal of Sigma_P (variances)
  Matrix M;        // q x (p - q)
  Matrix L;        // (p - q) x (p - q), lower triangular, Btilde^{-1} = L L^T
  NoiseFlags flags;

  Eigen::Index p() const { return mixing.p(); }
  Eigen::Index q() const { return mixing.q(); }
  Matrix H() const { return mixing.H(); }
  Matrix B_tilde_inverse() const { return L * L.transpose(); }

  void validate() const;
};

/// Blocks of a symmetric matrix in the (Q, Qperp) basis:
///   S = Q A Q^T + Qperp B Qperp^T + Q C Qperp^T + Qperp C^T Q^T.
struct SigmaBlocks {
  Matrix A;  // q x q
  Matrix B;  // (p - q) x (p - q)
  Matrix C;  // q x (p - q)
};

/// Blocks of D+ = (D+^{-1})^{-1}, the middle factor of
/// Sigma = Q+ R+ D+ R+^T Q+^T.
struct DPlusBlocks {
  Matrix D_tilde;  // q x q
  Matrix M_tilde;  // q x (p - q)
  Matrix B_tilde;  // (p - q) x (p - q)
};

SigmaBlocks decompose_symmetric(const Matrix& s, const MixingQR& mixing);
Matrix reassemble(const SigmaBlocks& blocks, const MixingQR& mixing);

/// [[Sigma_P^{-1}, M], [M^T, B]] with B = L L^T + M^T Sigma_P M.
Matrix d_plus_inverse(const NoiseParametrization& params);
/// Schur-complement inversion of D+^{-1}:
///   D~ = Sigma_P + Sigma_P M B~ M^T Sigma_P, M~ = -Sigma_P M B~, B~ = (L L^T)^{-1}.
DPlusBlocks d_plus_blocks(const NoiseParametrization& params);

Matrix build_sigma(const NoiseParametrization& params);
Matrix build_sigma_inverse(const NoiseParametrization& params);

/// Projection matrix T = R^{-1} Q^T + Sigma_P M Qperp^T (q x p).
Matrix compute_T(const NoiseParametrization& params);

struct DpnCheck {
  bool is_dpn = false;
  double off_diagonal = 0.0;   // max |(H^T Sigma^{-1} H)_ij|, i != j
  double max_diagonal = 0.0;
};

inline constexpr double kDefaultDpnTolerance = 1e-8;

DpnCheck check_dpn(const Matrix& h, const Matrix& sigma,
                   double tol = kDefaultDpnTolerance);

struct NoiseProjection {
  Vector d_prime;            // optimal diagonal D (length q)
  Matrix sigma_app;          // DPN-compatible covariance
  Matrix sigma_app_inverse;
  double distance = 0.0;     // ||Sigma_opt^{-1} - Sigma_app^{-1}||_F
  bool clamped = false;      // the bound d_prime >= kMinProjectedPrecision is active
  bool positive_definite = true;
};

inline constexpr double kMinProjectedPrecision = 1e-10;

/// Closest DPN-compatible precision to Sigma_opt^{-1} in Frobenius norm,
/// keeping the B and C blocks and replacing A by R^{-T} Diag(D') R^{-1} with
///   D' = (R^{-1} R^{-T} o R^{-1} R^{-T})^{-1} diag(R^{-1} A R^{-T}).
/// When that D' has entries below kMinProjectedPrecision, D' is instead the
/// minimizer under the bound D' >= kMinProjectedPrecision.
NoiseProjection project_noise(const Matrix& sigma_opt, const MixingQR& mixing);

/// exp(S) for skew-symmetric S.
Matrix orthonormal_from_skew(const Matrix& s);

}  // namespace plmc
