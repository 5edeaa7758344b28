#pragma once

// Randomized identity checks between the dense and decoupled routes.

#include "plmc/inference.hpp"

#include <cstdint>
#include <random>
#include <string>
#include <vector>

namespace plmc {

struct InstanceLimits {
  Eigen::Index n_max = 20;
  Eigen::Index p_max = 6;
  Eigen::Index q_max = 3;
  Eigen::Index q_min = 1;
};

struct RandomInstance {
  Dataset data;
  NoiseParametrization params;
  LatentKernelSet kernels;
  Matrix xstar;  // a few test inputs
};

Matrix random_orthonormal(Eigen::Index p, std::mt19937_64& rng);
NoiseParametrization random_parametrization(Eigen::Index p, Eigen::Index q, std::mt19937_64& rng,
                                            NoiseFlags flags = {});
RandomInstance random_instance(std::mt19937_64& rng, const InstanceLimits& limits = {});

/// ||a - b||_F / ||b||_F (absolute when b = 0).
double relative_error(const Matrix& a, const Matrix& b);
double relative_error(double a, double b);

struct PosteriorMismatch {
  double mean = 0.0;
  double variance = 0.0;
};
/// Decoupled posterior against the dense posterior built from H and Sigma.
PosteriorMismatch posterior_mismatch(const RandomInstance& inst);

struct LikelihoodMismatch {
  double projected_vs_naive = 0.0;
  double raw_vs_naive = 0.0;
  double decomposition_vs_projected = 0.0;
};
LikelihoodMismatch likelihood_mismatch(const RandomInstance& inst);

struct StructuralError {
  double th_identity = 0.0;       // max |T H - I|
  double projected_noise = 0.0;   // max |T Sigma T^T - Diag(sigma_p)|
};
StructuralError structural_error(const NoiseParametrization& params);

struct BlockStructure {
  double dpn_off_blocks = 0.0;      // largest off-diagonal-block entry over largest entry
  double perturbed_off_blocks = 0.0;
};
/// Needs q >= 2. The perturbation adds a random rank-one term to Sigma.
BlockStructure latent_block_structure(const RandomInstance& inst, std::mt19937_64& rng);

struct OilmmMismatch {
  double mll_oilmm_vs_free = 0.0;
  double mll_vs_naive = 0.0;
  double mean = 0.0;
  double variance = 0.0;
};
/// Builds an OILMM (H = Q S^{1/2}, Sigma = sigma I + H D H^T) both as an
/// oilmm-flagged parametrization and as an unrestricted one.
OilmmMismatch oilmm_mismatch(std::mt19937_64& rng, const InstanceLimits& limits = {});

struct BTildeInvariance {
  double t_change = 0.0;          // perturbing L
  double mean_change = 0.0;
  double variance_change = 0.0;
  double mll_change = 0.0;        // expected to be nonzero
  double rotated_mll_change = 0.0;  // relative, joint rotation of Qperp, M and L
  double rotated_t_change = 0.0;
};
/// Needs p > q.
BTildeInvariance b_tilde_invariance(const RandomInstance& inst, std::mt19937_64& rng);

struct CheckResult {
  std::string name;
  double error = 0.0;
  double tolerance = 0.0;
  bool passed = false;
};

/// Runs every identity on `instances` random problems.
std::vector<CheckResult> run_verification(std::uint64_t seed, int instances = 100);

}  // namespace plmc
