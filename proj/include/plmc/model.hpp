#pragma once

#include "plmc/inference.hpp"

#include <cstdint>
#include <string>
#include <string_view>
#include <vector>

namespace plmc {

/// Model variants. `exact` is the dense LMC with a free SPD noise matrix;
/// the others are projected models differing by structural restrictions.
enum class Variant { exact, proj, diagproj, bdn, bdn_diag, oilmm };

std::string to_string(Variant v);
Variant parse_variant(std::string_view name);
std::vector<Variant> all_variants();
NoiseFlags flags_for(Variant v);

struct SvdInit {
  Matrix H0;     // p x q, U_q S_q
  Matrix Q;      // orthonormal factor of H0
  Matrix R;      // upper triangular, positive diagonal
  Matrix Qperp;  // complement of Q
  bool padded = false;  // rank(Y) < q; trailing directions are random
};

/// Rank-q truncated SVD initialization H0 = U S. When rank(Y) < q the
/// missing directions are random orthonormal columns with singular value 1e-6.
SvdInit init_from_svd(const Dataset& data, Eigen::Index q, std::uint64_t seed);

struct LossGradient {
  double loss = 0.0;  // -log p(Y)
  Vector gradient;
};

/// Trainable LMC model stored as a flat parameter vector.
///
/// Projected layout: skew generator S (strict lower triangle, Q+ = Q_base exp(S)),
/// R (upper triangle, log diagonal; oilmm: log diagonal only), log sigma_p,
/// M (absent for bdn, bdn_diag, oilmm), L (lower triangle with log diagonal;
/// log diagonal for diag variants; a single log lambda for oilmm), then
/// (log lengthscale, log output_scale) per latent.
///
/// Exact layout: H (column-major), Cholesky factor of Sigma (lower triangle,
/// log diagonal), then the kernel log-parameters.
class LmcModel {
 public:
  LmcModel(Variant variant, Eigen::Index p, Eigen::Index q, Matrix q_base, Vector parameters);

  static LmcModel from_svd(Variant variant, const Dataset& data, Eigen::Index q,
                           std::uint64_t seed = 0);

  Variant variant() const { return variant_; }
  bool is_projected() const { return variant_ != Variant::exact; }
  Eigen::Index p() const { return p_; }
  Eigen::Index q() const { return q_; }
  const Matrix& q_base() const { return q_base_; }
  const Vector& parameters() const { return params_; }
  void set_parameters(const Vector& params);
  Eigen::Index num_parameters() const { return params_.size(); }

  /// Entries subject to weight decay: kernel and noise parameters.
  std::vector<bool> decay_mask() const;
  std::vector<std::string> parameter_names() const;

  LatentKernelSet kernels() const;
  Matrix H() const;
  Matrix sigma() const;
  Matrix generator() const;            // projected only
  NoiseParametrization noise() const;  // projected only

  double loss(const Dataset& data, const InferenceOptions& opts = {}) const;
  LossGradient loss_gradient(const Dataset& data, const InferenceOptions& opts = {}) const;
  PredictionResult predict(const Dataset& train, const Matrix& xstar,
                           const InferenceOptions& opts = {}) const;

  static Eigen::Index parameter_count(Variant variant, Eigen::Index p, Eigen::Index q);

 private:
  LossGradient projected_loss_gradient(const Dataset& data, const InferenceOptions& opts) const;
  LossGradient exact_loss_gradient(const Dataset& data, const InferenceOptions& opts) const;

  Variant variant_;
  Eigen::Index p_;
  Eigen::Index q_;
  Matrix q_base_;
  Vector params_;
};

}  // namespace plmc
