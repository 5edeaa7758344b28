#include "plmc/metrics.hpp"

#include "plmc/errors.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <vector>

namespace plmc {

namespace {

void require_same_shape(const Matrix& a, const Matrix& b, const char* what) {
  if (a.rows() != b.rows() || a.cols() != b.cols()) {
    throw InvalidInput(std::string(what) + ": shape mismatch");
  }
  if (a.size() == 0) throw InvalidInput(std::string(what) + ": empty input");
}

double pearson(const Matrix& a, const Matrix& b) {
  const auto n = static_cast<double>(a.size());
  const Eigen::ArrayXd x = a.reshaped().array() - a.sum() / n;
  const Eigen::ArrayXd y = b.reshaped().array() - b.sum() / n;
  return (x * y).sum() / std::sqrt((x * x).sum() * (y * y).sum());
}

bool zero_variance(const Matrix& a) {
  return a.size() < 2 || (a.array() == a(0, 0)).all();
}

}  // namespace

double nearest_rank_percentile(std::vector<double> values, double fraction) {
  if (values.empty()) throw InvalidInput("percentile of an empty set");
  if (!(fraction > 0.0 && fraction <= 1.0)) throw InvalidInput("percentile fraction must be in (0, 1]");
  std::sort(values.begin(), values.end());
  auto rank = static_cast<std::size_t>(std::ceil(fraction * static_cast<double>(values.size())));
  rank = std::clamp<std::size_t>(rank, 1, values.size());
  return values[rank - 1];
}

L1Metrics l1_metrics(const Matrix& pred, const Matrix& truth) {
  require_same_shape(pred, truth, "l1_metrics");
  const Matrix err = (pred - truth).cwiseAbs();
  std::vector<double> values(err.data(), err.data() + err.size());
  L1Metrics out;
  out.mean = err.mean();
  out.q95 = nearest_rank_percentile(std::move(values), 0.95);
  return out;
}

double pva(const Matrix& pred_mean, const Matrix& pred_var, const Matrix& truth) {
  require_same_shape(pred_mean, truth, "pva");
  require_same_shape(pred_var, truth, "pva");
  if (!(pred_var.array() > 0.0).all()) throw InvalidInput("pva: predicted variances must be positive");
  return std::log(((truth - pred_mean).array().square() / pred_var.array()).mean());
}

double h_corr(const Matrix& h_est, const Matrix& h_true) {
  require_same_shape(h_est, h_true, "h_corr");
  const Eigen::Index q = h_est.cols();
  if (q > kMaxAlignedLatents) throw InvalidInput("h_corr: too many latents for exhaustive alignment");
  if (zero_variance(h_est) || zero_variance(h_true)) throw InvalidInput("h_corr: zero-variance matrix");

  std::vector<Eigen::Index> perm(q);
  std::iota(perm.begin(), perm.end(), 0);
  double best = -1.0;
  Matrix aligned(h_est.rows(), q);
  do {
    for (unsigned signs = 0; signs < (1u << q); ++signs) {
      for (Eigen::Index j = 0; j < q; ++j) {
        const double s = (signs >> j) & 1u ? -1.0 : 1.0;
        aligned.col(j) = s * h_est.col(perm[j]);
      }
      best = std::max(best, pearson(aligned, h_true));
    }
  } while (std::next_permutation(perm.begin(), perm.end()));
  return best;
}

}  // namespace plmc
