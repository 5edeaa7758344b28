#include <doctest.h>

#include "plmc/errors.hpp"
#include "plmc/noise_param.hpp"
#include "plmc/verify.hpp"

#include <cmath>
#include <random>

using namespace plmc;

namespace {

Matrix gaussian(Eigen::Index r, Eigen::Index c, std::mt19937_64& rng) {
  std::normal_distribution<double> normal(0.0, 1.0);
  Matrix m(r, c);
  for (Eigen::Index j = 0; j < c; ++j)
    for (Eigen::Index i = 0; i < r; ++i) m(i, j) = normal(rng);
  return m;
}

Matrix random_spd(Eigen::Index p, std::mt19937_64& rng) {
  const Matrix g = gaussian(p, p, rng);
  return g * g.transpose() + 0.5 * Matrix::Identity(p, p);
}

NoiseParametrization identity_params(Eigen::Index p, Eigen::Index q) {
  NoiseParametrization np;
  np.mixing = MixingQR::from_Qplus(Matrix::Identity(p, p), Matrix::Identity(q, q));
  np.sigma_p = Vector::Ones(q);
  np.M = Matrix::Zero(q, p - q);
  np.L = Matrix::Identity(p - q, p - q);
  return np;
}

// Minimizes ||A - R^{-T} Diag(d) R^{-1}||_F over d by exact coordinate updates.
Vector coordinate_descent(const Matrix& a, const Matrix& r) {
  const Matrix v = r.inverse().transpose();  // column k is R^{-T} e_k
  const auto q = r.rows();
  Vector d = Vector::Zero(q);
  for (int sweep = 0; sweep < 20000; ++sweep) {
    double change = 0.0;
    for (Eigen::Index i = 0; i < q; ++i) {
      const Vector vi = v.col(i);
      double num = vi.dot(a * vi);
      for (Eigen::Index k = 0; k < q; ++k)
        if (k != i) num -= d(k) * std::pow(vi.dot(v.col(k)), 2);
      const double next = num / std::pow(vi.squaredNorm(), 2);
      change = std::max(change, std::abs(next - d(i)));
      d(i) = next;
    }
    if (change < 1e-15 * (1.0 + d.cwiseAbs().maxCoeff())) break;
  }
  return d;
}

}  // namespace

TEST_CASE("symmetric block decomposition") {
  std::mt19937_64 rng(1);
  const MixingQR mix = MixingQR::from_H(gaussian(5, 2, rng));
  SUBCASE("identity") {
    const SigmaBlocks b = decompose_symmetric(Matrix::Identity(5, 5), mix);
    CHECK((b.A - Matrix::Identity(2, 2)).norm() < 1e-14);
    CHECK((b.B - Matrix::Identity(3, 3)).norm() < 1e-14);
    CHECK(b.C.norm() < 1e-14);
  }
  SUBCASE("matrix living on span(Q)") {
    Matrix x = gaussian(2, 2, rng);
    x = (x + x.transpose()).eval();
    const SigmaBlocks b = decompose_symmetric(mix.Q * x * mix.Q.transpose(), mix);
    CHECK((b.A - x).norm() < 1e-13);
    CHECK(b.B.norm() < 1e-13);
    CHECK(b.C.norm() < 1e-13);
  }
  SUBCASE("random reassembly") {
    const Matrix s = random_spd(5, rng);
    CHECK((reassemble(decompose_symmetric(s, mix), mix) - s).norm() < 1e-9 * s.norm());
  }
  Matrix bad = Matrix::Identity(5, 5);
  bad(0, 3) = 0.1;
  CHECK_THROWS_AS(decompose_symmetric(bad, mix), InvalidInput);
}

TEST_CASE("building Sigma and its inverse") {
  SUBCASE("identity parameters give the identity") {
    const NoiseParametrization np = identity_params(4, 2);
    CHECK((build_sigma(np) - Matrix::Identity(4, 4)).norm() < 1e-15);
    CHECK((build_sigma_inverse(np) - Matrix::Identity(4, 4)).norm() < 1e-15);
  }
  SUBCASE("no complement") {
    std::mt19937_64 rng(2);
    NoiseParametrization np = random_parametrization(3, 3, rng);
    const Matrix& r = np.mixing.R;
    const Matrix& q = np.mixing.Q;
    const Matrix expect = q * r * np.sigma_p.asDiagonal() * r.transpose() * q.transpose();
    CHECK((build_sigma(np) - expect).norm() < 1e-12 * expect.norm());
    CHECK((build_sigma_inverse(np) - expect.inverse()).norm() < 1e-10 * expect.inverse().norm());
  }
  SUBCASE("random parameters") {
    std::mt19937_64 rng(3);
    for (int rep = 0; rep < 20; ++rep) {
      const NoiseParametrization np = random_parametrization(6, 2, rng);
      const Matrix s = build_sigma(np);
      const Matrix si = build_sigma_inverse(np);
      CHECK((s * si - Matrix::Identity(6, 6)).norm() < 1e-8);
      CHECK((si - s.inverse()).norm() < 1e-9 * si.norm());
      CHECK(Eigen::LLT<Matrix>(s).info() == Eigen::Success);
    }
  }
}

TEST_CASE("block identities of the noise factorization") {
  std::mt19937_64 rng(4);
  for (int rep = 0; rep < 20; ++rep) {
    const NoiseParametrization np = random_parametrization(6, 2, rng);
    const Matrix d = np.sigma_p.cwiseInverse().asDiagonal();
    const Matrix b = np.L * np.L.transpose() + np.M.transpose() * np.sigma_p.asDiagonal() * np.M;
    const DPlusBlocks blocks = d_plus_blocks(np);
    CHECK((blocks.D_tilde - (d - np.M * b.inverse() * np.M.transpose()).inverse()).norm() <
          1e-8 * blocks.D_tilde.norm());
    CHECK((blocks.B_tilde - (b - np.M.transpose() * d.inverse() * np.M).inverse()).norm() <
          1e-8 * blocks.B_tilde.norm());
    // D+ times D+^{-1} is the identity
    Matrix d_plus(6, 6);
    d_plus << blocks.D_tilde, blocks.M_tilde, blocks.M_tilde.transpose(), blocks.B_tilde;
    CHECK((d_plus * d_plus_inverse(np) - Matrix::Identity(6, 6)).norm() < 1e-9);
  }
}

TEST_CASE("decomposing the assembled precision recovers the parameters") {
  std::mt19937_64 rng(5);
  const NoiseParametrization np = random_parametrization(5, 2, rng);
  const SigmaBlocks blocks = decompose_symmetric(build_sigma_inverse(np), np.mixing);
  const Matrix r_inv = np.mixing.R_inverse();
  const Matrix a = r_inv.transpose() * np.sigma_p.cwiseInverse().asDiagonal() * r_inv;
  CHECK((blocks.A - a).norm() < 1e-10 * a.norm());
  const Matrix b = np.L * np.L.transpose() + np.M.transpose() * np.sigma_p.asDiagonal() * np.M;
  CHECK((blocks.B - b).norm() < 1e-10 * b.norm());
  CHECK((np.mixing.R.transpose() * blocks.C - np.M).norm() < 1e-10 * np.M.norm());
}

TEST_CASE("indefinite noise is reported") {
  NoiseParametrization np = identity_params(3, 1);
  np.L = Matrix::Constant(2, 2, 0.0);
  np.L(0, 0) = 1e-300;
  np.L(1, 1) = 1e-300;
  CHECK_THROWS_AS(build_sigma(np), IndefiniteNoise);
}

TEST_CASE("parametrization validation enforces the flags") {
  std::mt19937_64 rng(6);
  NoiseParametrization np = random_parametrization(5, 2, rng);
  CHECK_NOTHROW(np.validate());
  np.flags.bdn = true;
  CHECK_THROWS_AS(np.validate(), InvalidInput);
  np = random_parametrization(5, 2, rng);
  np.flags.diag_b = true;
  CHECK_THROWS_AS(np.validate(), InvalidInput);
  np = random_parametrization(5, 2, rng, NoiseFlags{true, true, true});
  CHECK_NOTHROW(np.validate());
  np.L(1, 1) *= 1.5;
  CHECK_THROWS_AS(np.validate(), InvalidInput);
  np = random_parametrization(5, 2, rng);
  np.sigma_p(0) = -1.0;
  CHECK_THROWS_AS(np.validate(), InvalidInput);
  np = random_parametrization(5, 2, rng);
  np.mixing.Q(0, 0) += 1e-3;
  CHECK_THROWS_AS(np.validate(), InvalidInput);
}

TEST_CASE("projection matrix T") {
  std::mt19937_64 rng(7);
  SUBCASE("M = 0 gives the pseudo-inverse") {
    const NoiseParametrization np = random_parametrization(6, 2, rng, NoiseFlags{true, false, false});
    const Matrix h = np.H();
    const Matrix pinv = h.completeOrthogonalDecomposition().pseudoInverse();
    CHECK((compute_T(np) - pinv).norm() < 1e-12 * pinv.norm());
  }
  SUBCASE("square H gives its inverse") {
    const NoiseParametrization np = random_parametrization(3, 3, rng);
    CHECK((compute_T(np) - np.H().inverse()).norm() < 1e-12 * np.H().inverse().norm());
  }
  SUBCASE("equals Sigma_P H^T Sigma^{-1} computed densely") {
    for (int rep = 0; rep < 10; ++rep) {
      const NoiseParametrization np = random_parametrization(7, 3, rng);
      const Matrix h = np.H();
      const Matrix si = build_sigma(np).inverse();
      const Matrix sp = (h.transpose() * si * h).inverse();
      const Matrix dense = sp * h.transpose() * si;
      CHECK((compute_T(np) - dense).norm() < 1e-9 * dense.norm());
      CHECK((sp - Matrix(np.sigma_p.asDiagonal())).norm() < 1e-9 * np.sigma_p.norm());
      const StructuralError se = structural_error(np);
      CHECK(se.th_identity < 1e-10);
      CHECK(se.projected_noise < 1e-9);
    }
  }
  SUBCASE("rotating the complement together with M leaves T unchanged") {
    const NoiseParametrization np = random_parametrization(6, 2, rng);
    const Matrix w = random_orthonormal(4, rng);
    NoiseParametrization moved = np;
    moved.mixing.Qperp = np.mixing.Qperp * w;
    moved.M = np.M * w;
    CHECK((compute_T(moved) - compute_T(np)).cwiseAbs().maxCoeff() < 1e-10);
  }
}

TEST_CASE("DPN check") {
  std::mt19937_64 rng(8);
  const Matrix orthogonal_cols = thin_qr(gaussian(4, 2, rng)).Q * Vector(Eigen::Vector2d(2.0, 3.0)).asDiagonal();
  CHECK(check_dpn(orthogonal_cols, Matrix::Identity(4, 4)).is_dpn);
  Matrix h(3, 2);
  h << 1, 1, 0, 1, 0, 0;
  const DpnCheck c = check_dpn(h, Matrix::Identity(3, 3));
  CHECK_FALSE(c.is_dpn);
  CHECK(c.off_diagonal == doctest::Approx(1.0));
  CHECK(c.max_diagonal == doctest::Approx(2.0));
  for (int rep = 0; rep < 10; ++rep) {
    const NoiseParametrization np = random_parametrization(6, 3, rng);
    CHECK(check_dpn(np.H(), build_sigma(np)).is_dpn);
  }
  CHECK_THROWS_AS(check_dpn(h, Matrix::Zero(3, 3)), NumericalDegeneracy);
}

TEST_CASE("noise projection") {
  std::mt19937_64 rng(9);
  SUBCASE("DPN noise is a fixed point") {
    const NoiseParametrization np = random_parametrization(5, 2, rng);
    const NoiseProjection proj = project_noise(build_sigma(np), np.mixing);
    CHECK(proj.distance < 1e-10 * build_sigma_inverse(np).norm());
    CHECK((proj.d_prime - np.sigma_p.cwiseInverse()).norm() < 1e-9 * np.sigma_p.cwiseInverse().norm());
    CHECK_FALSE(proj.clamped);
  }
  SUBCASE("R = I keeps the diagonal of A") {
    const Matrix s = random_spd(4, rng);
    const MixingQR mix = MixingQR::from_Qplus(random_orthonormal(4, rng), Matrix::Identity(2, 2));
    const NoiseProjection proj = project_noise(s, mix);
    const Matrix a = mix.Q.transpose() * s.inverse() * mix.Q;
    CHECK((proj.d_prime - a.diagonal()).norm() < 1e-12 * a.norm());
  }
  SUBCASE("closed form matches coordinate descent and yields DPN noise") {
    for (int rep = 0; rep < 20; ++rep) {
      const Matrix s = random_spd(4, rng);
      const MixingQR mix = MixingQR::from_H(gaussian(4, 2, rng));
      const NoiseProjection proj = project_noise(s, mix);
      const Matrix a = mix.Q.transpose() * s.inverse() * mix.Q;
      const Vector d = coordinate_descent(a, mix.R);
      const Matrix r_inv = mix.R.inverse();
      const double oracle = (a - r_inv.transpose() * d.asDiagonal() * r_inv).norm();
      if (proj.clamped) continue;
      CHECK((proj.d_prime - d).norm() < 1e-6 * (1.0 + d.norm()));
      CHECK(proj.distance == doctest::Approx(oracle).epsilon(1e-6));
      CHECK(proj.distance == doctest::Approx((s.inverse() - proj.sigma_app_inverse).norm()).epsilon(1e-10));
      if (proj.positive_definite) CHECK(check_dpn(mix.H(), proj.sigma_app).is_dpn);
    }
  }
  SUBCASE("non-positive optimum is clamped and flagged") {
    // strongly non-orthogonal mixing columns make negative optima common
    int found = 0;
    for (int rep = 0; rep < 2000 && found < 3; ++rep) {
      Matrix h = gaussian(4, 2, rng);
      h.col(1) = h.col(0) + 0.05 * h.col(1);
      const MixingQR mix = MixingQR::from_H(h);
      const Matrix spd = random_spd(4, rng);
      const Matrix sigma_inv = spd.inverse();
      const NoiseProjection proj = project_noise(spd, mix);
      if (!proj.clamped) continue;
      ++found;
      CHECK((proj.d_prime.array() >= kMinProjectedPrecision).all());
      CHECK((proj.d_prime.array() == kMinProjectedPrecision).any());
      // the free entries must solve the reduced normal equations
      const Matrix r_inv = mix.R.inverse();
      const Matrix x = r_inv * r_inv.transpose();
      const Matrix hadamard = x.cwiseProduct(x);
      const Matrix a_opt = mix.Q.transpose() * sigma_inv * mix.Q;
      const Vector grad = hadamard * proj.d_prime - (r_inv * a_opt * r_inv.transpose()).diagonal();
      for (Eigen::Index i = 0; i < 2; ++i) {
        if (proj.d_prime(i) > kMinProjectedPrecision) {
          CHECK(std::abs(grad(i)) < 1e-10 * (1.0 + a_opt.norm()));
        } else {
          CHECK(grad(i) >= -1e-10 * (1.0 + a_opt.norm()));
        }
      }
    }
    CHECK(found == 3);
    Matrix sigma = Matrix::Identity(3, 3);
    sigma(0, 0) = -5.0;
    CHECK_THROWS_AS(project_noise(sigma, MixingQR::from_H(Matrix::Ones(3, 1))), NumericalDegeneracy);
  }
}

TEST_CASE("orthonormal matrices from skew generators") {
  CHECK((orthonormal_from_skew(Matrix::Zero(4, 4)) - Matrix::Identity(4, 4)).norm() == 0.0);
  const double theta = 0.7;
  Matrix s(2, 2);
  s << 0.0, -theta, theta, 0.0;
  Matrix rot(2, 2);
  rot << std::cos(theta), -std::sin(theta), std::sin(theta), std::cos(theta);
  CHECK((orthonormal_from_skew(s) - rot).norm() < 1e-15);
  std::mt19937_64 rng(10);
  for (int rep = 0; rep < 10; ++rep) {
    Matrix g = gaussian(6, 6, rng);
    g = (g - g.transpose()).eval();
    const Matrix w = orthonormal_from_skew(g);
    CHECK((w.transpose() * w - Matrix::Identity(6, 6)).norm() < 1e-10);
    CHECK(w.determinant() == doctest::Approx(1.0).epsilon(1e-10));
  }
  CHECK_THROWS_AS(orthonormal_from_skew(Matrix::Identity(3, 3)), InvalidInput);
}
