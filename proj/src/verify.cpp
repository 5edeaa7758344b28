#include "plmc/verify.hpp"

#include "plmc/errors.hpp"

#include <algorithm>
#include <cmath>

namespace plmc {

namespace {

Matrix gaussian(Eigen::Index rows, Eigen::Index cols, std::mt19937_64& rng, double scale = 1.0) {
  std::normal_distribution<double> normal(0.0, scale);
  Matrix out(rows, cols);
  for (Eigen::Index j = 0; j < cols; ++j)
    for (Eigen::Index i = 0; i < rows; ++i) out(i, j) = normal(rng);
  return out;
}

double uniform(std::mt19937_64& rng, double lo, double hi) {
  return std::uniform_real_distribution<double>(lo, hi)(rng);
}

Eigen::Index uniform_index(std::mt19937_64& rng, Eigen::Index lo, Eigen::Index hi) {
  return std::uniform_int_distribution<Eigen::Index>(lo, hi)(rng);
}

Matrix random_triangular(Eigen::Index k, std::mt19937_64& rng, bool upper) {
  Matrix t = Matrix::Zero(k, k);
  for (Eigen::Index j = 0; j < k; ++j)
    for (Eigen::Index i = 0; i < k; ++i) {
      if (i == j) {
        t(i, i) = std::exp(uniform(rng, -0.5, 0.5));
      } else if ((i < j) == upper) {
        t(i, j) = 0.3 * std::normal_distribution<double>(0.0, 1.0)(rng);
      }
    }
  return t;
}

double max_abs(const Matrix& a) { return a.size() ? a.cwiseAbs().maxCoeff() : 0.0; }

double off_block_ratio(const Matrix& cov, Eigen::Index q, Eigen::Index n) {
  double off = 0.0;
  for (Eigen::Index i = 0; i < q; ++i)
    for (Eigen::Index j = 0; j < q; ++j)
      if (i != j) off = std::max(off, max_abs(cov.block(i * n, j * n, n, n)));
  return off / max_abs(cov);
}

CheckResult check(const std::string& name, double error, double tolerance) {
  return {name, error, tolerance, error <= tolerance};
}

}  // namespace

Matrix random_orthonormal(Eigen::Index p, std::mt19937_64& rng) {
  return thin_qr(gaussian(p, p, rng)).Q;
}

NoiseParametrization random_parametrization(Eigen::Index p, Eigen::Index q, std::mt19937_64& rng,
                                            NoiseFlags flags) {
  const Eigen::Index k = p - q;
  NoiseParametrization out;
  out.flags = flags;
  Matrix r = random_triangular(q, rng, true);
  if (flags.oilmm) r = Matrix(r.diagonal().asDiagonal());
  out.mixing = MixingQR::from_Qplus(random_orthonormal(p, rng), r);
  out.sigma_p.resize(q);
  for (Eigen::Index i = 0; i < q; ++i) out.sigma_p(i) = std::exp(uniform(rng, std::log(0.05), 0.0));
  out.M = flags.bdn || flags.oilmm ? Matrix::Zero(q, k) : gaussian(q, k, rng, 0.5);
  if (flags.oilmm) {
    out.L = std::exp(uniform(rng, -0.5, 0.5)) * Matrix::Identity(k, k);
  } else if (flags.diag_b) {
    out.L = Matrix(random_triangular(k, rng, false).diagonal().asDiagonal());
  } else {
    out.L = random_triangular(k, rng, false);
  }
  return out;
}

RandomInstance random_instance(std::mt19937_64& rng, const InstanceLimits& limits) {
  RandomInstance inst;
  const Eigen::Index q = uniform_index(rng, limits.q_min, limits.q_max);
  const Eigen::Index p = uniform_index(rng, q, std::max(q, limits.p_max));
  const Eigen::Index n = uniform_index(rng, 2, limits.n_max);
  inst.params = random_parametrization(p, q, rng);
  inst.kernels.resize(q);
  for (auto& k : inst.kernels) {
    k.lengthscale = uniform(rng, 0.2, 1.0);
    k.output_scale = uniform(rng, 0.5, 2.0);
  }
  inst.data.X.resize(1, n);
  for (Eigen::Index j = 0; j < n; ++j) inst.data.X(0, j) = uniform(rng, -1.0, 1.0);
  inst.data.Y = gaussian(p, n, rng);
  inst.xstar.resize(1, 5);
  for (Eigen::Index j = 0; j < 5; ++j) inst.xstar(0, j) = uniform(rng, -1.2, 1.2);
  return inst;
}

double relative_error(const Matrix& a, const Matrix& b) {
  const double denom = b.norm();
  const double diff = (a - b).norm();
  return denom > 0.0 ? diff / denom : diff;
}

double relative_error(double a, double b) {
  const double denom = std::abs(b);
  return denom > 0.0 ? std::abs(a - b) / denom : std::abs(a - b);
}

PosteriorMismatch posterior_mismatch(const RandomInstance& inst) {
  const PredictionResult fast =
      decoupled_posterior(inst.data, inst.params, inst.kernels, inst.xstar);
  const PredictionResult dense = naive_posterior(inst.data, inst.params.H(), build_sigma(inst.params),
                                                 inst.kernels, inst.xstar);
  return {relative_error(fast.mean, dense.mean), relative_error(fast.variance, dense.variance)};
}

LikelihoodMismatch likelihood_mismatch(const RandomInstance& inst) {
  const double naive = naive_mll(inst.data, inst.params.H(), build_sigma(inst.params), inst.kernels);
  const double projected = projected_mll(inst.data, inst.params, inst.kernels);
  const double raw = raw_mll(inst.data, inst.params, inst.kernels);
  const LikelihoodDecomposition parts = likelihood_decomposition_check(inst.data, inst.params, inst.kernels);
  return {relative_error(projected, naive), relative_error(raw, naive),
          relative_error(parts.log_corrective + parts.log_latent, projected)};
}

StructuralError structural_error(const NoiseParametrization& params) {
  const Matrix t = compute_T(params);
  const Matrix sigma = build_sigma(params);
  StructuralError out;
  out.th_identity = max_abs(t * params.H() - Matrix::Identity(params.q(), params.q()));
  out.projected_noise = max_abs(t * sigma * t.transpose() - Matrix(params.sigma_p.asDiagonal()));
  return out;
}

BlockStructure latent_block_structure(const RandomInstance& inst, std::mt19937_64& rng) {
  const Eigen::Index q = inst.params.q();
  if (q < 2) throw InvalidInput("latent_block_structure: needs q >= 2");
  const Eigen::Index n = inst.data.n();
  const Matrix h = inst.params.H();
  const Matrix sigma = build_sigma(inst.params);
  BlockStructure out;
  out.dpn_off_blocks =
      off_block_ratio(dense_posterior_U(inst.data, h, sigma, inst.kernels).covariance, q, n);
  const Matrix v = gaussian(inst.params.p(), 1, rng);
  const Matrix perturbed = sigma + 0.5 * v * v.transpose();
  out.perturbed_off_blocks =
      off_block_ratio(dense_posterior_U(inst.data, h, perturbed, inst.kernels).covariance, q, n);
  return out;
}

OilmmMismatch oilmm_mismatch(std::mt19937_64& rng, const InstanceLimits& limits) {
  RandomInstance inst = random_instance(rng, limits);
  const Eigen::Index p = inst.params.p();
  const Eigen::Index q = inst.params.q();
  Vector s(q), d(q);
  for (Eigen::Index i = 0; i < q; ++i) {
    s(i) = std::exp(uniform(rng, -1.0, 1.0));
    d(i) = std::exp(uniform(rng, -2.0, 0.0));
  }
  const double sigma = std::exp(uniform(rng, -3.0, -0.5));

  NoiseParametrization oilmm;
  oilmm.mixing = MixingQR::from_Qplus(random_orthonormal(p, rng), Matrix(s.cwiseSqrt().asDiagonal()));
  oilmm.sigma_p = d + sigma * s.cwiseInverse();
  oilmm.M = Matrix::Zero(q, p - q);
  oilmm.L = Matrix::Identity(p - q, p - q) / std::sqrt(sigma);
  oilmm.flags = NoiseFlags{true, true, true};
  NoiseParametrization free = oilmm;
  free.flags = NoiseFlags{};

  const Matrix h = oilmm.H();
  const Matrix full_sigma = sigma * Matrix::Identity(p, p) + h * d.asDiagonal() * h.transpose();
  const double naive = naive_mll(inst.data, h, full_sigma, inst.kernels);
  const double flagged = projected_mll(inst.data, oilmm, inst.kernels);
  const double unrestricted = projected_mll(inst.data, free, inst.kernels);
  const PredictionResult a = decoupled_posterior(inst.data, oilmm, inst.kernels, inst.xstar);
  const PredictionResult b = decoupled_posterior(inst.data, free, inst.kernels, inst.xstar);
  const PredictionResult c = naive_posterior(inst.data, h, full_sigma, inst.kernels, inst.xstar);

  OilmmMismatch out;
  out.mll_oilmm_vs_free = relative_error(flagged, unrestricted);
  out.mll_vs_naive = relative_error(flagged, naive);
  out.mean = std::max(relative_error(a.mean, b.mean), relative_error(a.mean, c.mean));
  out.variance = std::max(relative_error(a.variance, b.variance), relative_error(a.variance, c.variance));
  return out;
}

BTildeInvariance b_tilde_invariance(const RandomInstance& inst, std::mt19937_64& rng) {
  const NoiseParametrization& base = inst.params;
  const Eigen::Index k = base.p() - base.q();
  if (k < 1) throw InvalidInput("b_tilde_invariance: needs p > q");

  NoiseParametrization moved = base;
  moved.L = random_triangular(k, rng, false);

  const Matrix t0 = compute_T(base);
  const PredictionResult p0 = decoupled_posterior(inst.data, base, inst.kernels, inst.xstar);
  const PredictionResult p1 = decoupled_posterior(inst.data, moved, inst.kernels, inst.xstar);
  const double mll0 = projected_mll(inst.data, base, inst.kernels);

  BTildeInvariance out;
  out.t_change = max_abs(compute_T(moved) - t0);
  out.mean_change = max_abs(p1.mean - p0.mean);
  out.variance_change = max_abs(p1.variance - p0.variance);
  out.mll_change = std::abs(projected_mll(inst.data, moved, inst.kernels) - mll0);

  // Btilde^{-1} -> W Btilde^{-1} W^T, Qperp -> Qperp W^T, M -> M W^T.
  const Matrix w = random_orthonormal(k, rng);
  NoiseParametrization rotated = base;
  rotated.mixing.Qperp = base.mixing.Qperp * w.transpose();
  rotated.M = base.M * w.transpose();
  const Matrix b_inv = w * base.B_tilde_inverse() * w.transpose();
  rotated.L = cholesky_strict(0.5 * (b_inv + b_inv.transpose()), "rotated Btilde^{-1}").llt.matrixL();
  out.rotated_mll_change = relative_error(projected_mll(inst.data, rotated, inst.kernels), mll0);
  out.rotated_t_change = max_abs(compute_T(rotated) - t0);
  return out;
}

std::vector<CheckResult> run_verification(std::uint64_t seed, int instances) {
  std::mt19937_64 rng(seed);
  double post_mean = 0.0, post_var = 0.0;
  double mll_proj = 0.0, mll_raw = 0.0, mll_parts = 0.0;
  double th = 0.0, tst = 0.0;
  double dpn_blocks = 0.0, perturbed_blocks = 1.0;
  double oil_mll = 0.0, oil_pred = 0.0;
  double b_post = 0.0, b_t = 0.0, b_rot = 0.0, b_moves = 1.0;
  double projection_distance = 0.0;

  for (int it = 0; it < instances; ++it) {
    const RandomInstance inst = random_instance(rng);
    const PosteriorMismatch pm = posterior_mismatch(inst);
    post_mean = std::max(post_mean, pm.mean);
    post_var = std::max(post_var, pm.variance);
    const LikelihoodMismatch lm = likelihood_mismatch(inst);
    mll_proj = std::max(mll_proj, lm.projected_vs_naive);
    mll_raw = std::max(mll_raw, lm.raw_vs_naive);
    mll_parts = std::max(mll_parts, lm.decomposition_vs_projected);
    const StructuralError se = structural_error(inst.params);
    th = std::max(th, se.th_identity);
    tst = std::max(tst, se.projected_noise);
    if (inst.params.q() >= 2) {
      const BlockStructure bs = latent_block_structure(inst, rng);
      dpn_blocks = std::max(dpn_blocks, bs.dpn_off_blocks);
      perturbed_blocks = std::min(perturbed_blocks, bs.perturbed_off_blocks);
    }
    const OilmmMismatch om = oilmm_mismatch(rng);
    oil_mll = std::max({oil_mll, om.mll_oilmm_vs_free, om.mll_vs_naive});
    oil_pred = std::max({oil_pred, om.mean, om.variance});
    if (inst.params.p() > inst.params.q()) {
      const BTildeInvariance bt = b_tilde_invariance(inst, rng);
      b_post = std::max({b_post, bt.mean_change, bt.variance_change});
      b_t = std::max({b_t, bt.t_change, bt.rotated_t_change});
      b_rot = std::max(b_rot, bt.rotated_mll_change);
      b_moves = std::min(b_moves, bt.mll_change);
    }
    const NoiseProjection np = project_noise(build_sigma(inst.params), inst.params.mixing);
    projection_distance = std::max(
        projection_distance, np.distance / build_sigma_inverse(inst.params).norm());
  }

  return {
      check("decoupled posterior mean = dense posterior mean", post_mean, 1e-8),
      check("decoupled posterior variance = dense posterior variance", post_var, 1e-8),
      check("projected likelihood = dense likelihood", mll_proj, 1e-8),
      check("raw decoupled likelihood = dense likelihood", mll_raw, 1e-8),
      check("corrective + latent terms = projected likelihood", mll_parts, 1e-8),
      check("T H = I", th, 1e-10),
      check("T Sigma T^T = Diag(sigma_p^2)", tst, 1e-10),
      check("latent posterior block-diagonal under DPN", dpn_blocks, 1e-10),
      check("latent posterior coupled after non-DPN perturbation", 1e-6 / std::max(perturbed_blocks, 1e-300), 1.0),
      check("oilmm likelihood = unrestricted likelihood = dense likelihood", oil_mll, 1e-9),
      check("oilmm predictions = unrestricted and dense predictions", oil_pred, 1e-9),
      check("Btilde does not affect T", b_t, 1e-12),
      check("Btilde does not affect decoupled predictions", b_post, 1e-12),
      check("Btilde changes the likelihood", 1e-12 / std::max(b_moves, 1e-300), 1.0),
      check("joint Qperp/M/Btilde rotation keeps the likelihood", b_rot, 1e-8),
      check("DPN noise projects onto itself", projection_distance, 1e-10),
  };
}

}  // namespace plmc
