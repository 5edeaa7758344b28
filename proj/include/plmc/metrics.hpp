#pragma once

#include "plmc/linalg.hpp"

namespace plmc {

struct MetricsRecord {
  double err_l1 = 0.0;
  double q95_l1 = 0.0;
  double pva = 0.0;
  double h_corr = 0.0;
  int n_iter = 0;
  double t_train = 0.0;  // seconds
};

struct L1Metrics {
  double mean = 0.0;
  double q95 = 0.0;  // nearest-rank 95th percentile
};

L1Metrics l1_metrics(const Matrix& pred, const Matrix& truth);

/// Nearest-rank percentile of `values` (0 < fraction <= 1).
double nearest_rank_percentile(std::vector<double> values, double fraction);

/// log of the mean of (truth - pred)^2 / variance.
double pva(const Matrix& pred_mean, const Matrix& pred_var, const Matrix& truth);

/// Pearson correlation of vec(H_est) and vec(H_true), maximized over
/// permutations and sign flips of the columns of H_est.
double h_corr(const Matrix& h_est, const Matrix& h_true);

/// Largest column count accepted by h_corr.
inline constexpr Eigen::Index kMaxAlignedLatents = 6;

}  // namespace plmc
