#include "plmc/model.hpp"

#include "plmc/errors.hpp"

#include <cmath>
#include <numbers>
#include <random>

namespace plmc {

namespace {

const double kLog2Pi = std::log(2.0 * std::numbers::pi);
constexpr double kInitNoise = 1e-2;
constexpr double kPadSingularValue = 1e-6;

bool has_m(Variant v) { return v == Variant::proj || v == Variant::diagproj; }
bool diagonal_l(Variant v) {
  return v == Variant::diagproj || v == Variant::bdn_diag;
}

Eigen::Index tri(Eigen::Index k) { return k * (k + 1) / 2; }

struct ProjectedLayout {
  Eigen::Index gen = 0, gen_n = 0;
  Eigen::Index r = 0, r_n = 0;
  Eigen::Index sig = 0;
  Eigen::Index m = 0, m_n = 0;
  Eigen::Index l = 0, l_n = 0;
  Eigen::Index ker = 0;
  Eigen::Index total = 0;
};

ProjectedLayout projected_layout(Variant v, Eigen::Index p, Eigen::Index q) {
  const auto k = p - q;
  ProjectedLayout lay;
  lay.gen_n = p * (p - 1) / 2;
  lay.r = lay.gen + lay.gen_n;
  lay.r_n = v == Variant::oilmm ? q : tri(q);
  lay.sig = lay.r + lay.r_n;
  lay.m = lay.sig + q;
  lay.m_n = has_m(v) ? q * k : 0;
  lay.l = lay.m + lay.m_n;
  if (k == 0) {
    lay.l_n = 0;
  } else if (v == Variant::oilmm) {
    lay.l_n = 1;
  } else if (diagonal_l(v)) {
    lay.l_n = k;
  } else {
    lay.l_n = tri(k);
  }
  lay.ker = lay.l + lay.l_n;
  lay.total = lay.ker + 2 * q;
  return lay;
}

struct ExactLayout {
  Eigen::Index h = 0, h_n = 0;
  Eigen::Index ls = 0, ls_n = 0;
  Eigen::Index ker = 0;
  Eigen::Index total = 0;
};

ExactLayout exact_layout(Eigen::Index p, Eigen::Index q) {
  ExactLayout lay;
  lay.h_n = p * q;
  lay.ls = lay.h + lay.h_n;
  lay.ls_n = tri(p);
  lay.ker = lay.ls + lay.ls_n;
  lay.total = lay.ker + 2 * q;
  return lay;
}

// Packing helpers. Triangles are traversed column by column.

Matrix unpack_skew(const Vector& v, Eigen::Index offset, Eigen::Index p) {
  Matrix s = Matrix::Zero(p, p);
  Eigen::Index c = offset;
  for (Eigen::Index j = 0; j < p; ++j)
    for (Eigen::Index i = j + 1; i < p; ++i) {
      s(i, j) = v(c++);
      s(j, i) = -s(i, j);
    }
  return s;
}

Matrix unpack_upper_logdiag(const Vector& v, Eigen::Index offset, Eigen::Index q) {
  Matrix r = Matrix::Zero(q, q);
  Eigen::Index c = offset;
  for (Eigen::Index j = 0; j < q; ++j)
    for (Eigen::Index i = 0; i <= j; ++i) r(i, j) = i == j ? std::exp(v(c++)) : v(c++);
  return r;
}

void pack_upper_logdiag(const Matrix& r, Vector& v, Eigen::Index offset) {
  Eigen::Index c = offset;
  for (Eigen::Index j = 0; j < r.cols(); ++j)
    for (Eigen::Index i = 0; i <= j; ++i) v(c++) = i == j ? std::log(r(i, j)) : r(i, j);
}

Matrix unpack_lower_logdiag(const Vector& v, Eigen::Index offset, Eigen::Index k) {
  Matrix l = Matrix::Zero(k, k);
  Eigen::Index c = offset;
  for (Eigen::Index j = 0; j < k; ++j)
    for (Eigen::Index i = j; i < k; ++i) l(i, j) = i == j ? std::exp(v(c++)) : v(c++);
  return l;
}

void pack_lower_logdiag(const Matrix& l, Vector& v, Eigen::Index offset) {
  Eigen::Index c = offset;
  for (Eigen::Index j = 0; j < l.cols(); ++j)
    for (Eigen::Index i = j; i < l.rows(); ++i) v(c++) = i == j ? std::log(l(i, j)) : l(i, j);
}

LatentKernelSet unpack_kernels(const Vector& v, Eigen::Index offset, Eigen::Index q) {
  LatentKernelSet out(q);
  for (Eigen::Index i = 0; i < q; ++i) {
    out[i].lengthscale = std::exp(v(offset + 2 * i));
    out[i].output_scale = std::exp(v(offset + 2 * i + 1));
  }
  return out;
}

struct ProjectedView {
  Matrix S, Qplus, R, M, L;
  Vector sigma_p;
  LatentKernelSet kernels;
};

ProjectedView decode_projected(Variant variant, Eigen::Index p, Eigen::Index q,
                               const Matrix& q_base, const Vector& v) {
  const ProjectedLayout lay = projected_layout(variant, p, q);
  const auto k = p - q;
  ProjectedView out;
  out.S = unpack_skew(v, lay.gen, p);
  out.Qplus = q_base * expm(out.S);
  if (variant == Variant::oilmm) {
    out.R = v.segment(lay.r, q).array().exp().matrix().asDiagonal();
  } else {
    out.R = unpack_upper_logdiag(v, lay.r, q);
  }
  out.sigma_p = v.segment(lay.sig, q).array().exp();
  out.M = Matrix::Zero(q, k);
  if (lay.m_n > 0) out.M = Eigen::Map<const Matrix>(v.data() + lay.m, q, k);
  if (k == 0) {
    out.L = Matrix::Zero(0, 0);
  } else if (variant == Variant::oilmm) {
    out.L = std::exp(v(lay.l)) * Matrix::Identity(k, k);
  } else if (diagonal_l(variant)) {
    out.L = v.segment(lay.l, k).array().exp().matrix().asDiagonal();
  } else {
    out.L = unpack_lower_logdiag(v, lay.l, k);
  }
  out.kernels = unpack_kernels(v, lay.ker, q);
  return out;
}

/// Gradients of f with respect to the log-parameters of one Matern kernel,
/// given G = df/dK where K = Gram + jitter * output_scale * I.
void kernel_gradient(const Matrix& g, const Matrix& dist, const Matrix& gram,
                     const Matern52Kernel& kernel, double& d_log_l, double& d_log_s) {
  const auto n = dist.rows();
  double dl = 0.0;
  for (Eigen::Index j = 0; j < n; ++j)
    for (Eigen::Index i = 0; i < n; ++i)
      if (i != j) dl += g(i, j) * matern52_dlog_lengthscale(dist(i, j), kernel);
  d_log_l = dl;
  d_log_s = g.cwiseProduct(gram).sum();
}

}  // namespace

// Variants -------------------------------------------------------------------

std::string to_string(Variant v) {
  switch (v) {
    case Variant::exact: return "exact";
    case Variant::proj: return "proj";
    case Variant::diagproj: return "diagproj";
    case Variant::bdn: return "bdn";
    case Variant::bdn_diag: return "bdn_diag";
    case Variant::oilmm: return "oilmm";
  }
  return "unknown";
}

Variant parse_variant(std::string_view name) {
  for (Variant v : all_variants())
    if (to_string(v) == name) return v;
  throw InvalidInput("unknown model variant '" + std::string(name) + "'");
}

std::vector<Variant> all_variants() {
  return {Variant::exact, Variant::proj, Variant::diagproj,
          Variant::bdn, Variant::bdn_diag, Variant::oilmm};
}

NoiseFlags flags_for(Variant v) {
  NoiseFlags f;
  f.bdn = v == Variant::bdn || v == Variant::bdn_diag || v == Variant::oilmm;
  f.diag_b = diagonal_l(v) || v == Variant::oilmm;
  f.oilmm = v == Variant::oilmm;
  return f;
}

// Initialization --------------------------------------------------------------

SvdInit init_from_svd(const Dataset& data, Eigen::Index q, std::uint64_t seed) {
  data.validate();
  const auto p = data.p();
  if (q < 1 || q > std::min(p, data.n())) throw InvalidInput("init_from_svd: need 1 <= q <= min(p, n)");
  Eigen::BDCSVD<Matrix> svd(data.Y, Eigen::ComputeThinU);
  const Vector sv = svd.singularValues();
  const double tol = static_cast<double>(std::max(p, data.n())) *
                     std::numeric_limits<double>::epsilon() * (sv.size() ? sv(0) : 0.0);
  Eigen::Index rank = 0;
  while (rank < q && sv(rank) > tol && sv(rank) > 0.0) ++rank;

  Matrix u(p, q);
  Vector s(q);
  u.leftCols(rank) = svd.matrixU().leftCols(rank);
  s.head(rank) = sv.head(rank);
  SvdInit out;
  if (rank < q) {
    out.padded = true;
    std::mt19937_64 rng(seed);
    std::normal_distribution<double> normal(0.0, 1.0);
    Matrix g(p, q - rank);
    for (Eigen::Index j = 0; j < g.cols(); ++j)
      for (Eigen::Index i = 0; i < p; ++i) g(i, j) = normal(rng);
    const Matrix known = u.leftCols(rank);
    g -= known * (known.transpose() * g);
    u.rightCols(q - rank) = thin_qr(g).Q;
    s.tail(q - rank).setConstant(kPadSingularValue);
  }
  out.H0 = u * s.asDiagonal();
  const ThinQR qr = thin_qr(out.H0);
  out.Q = qr.Q;
  out.R = qr.R;
  out.Qperp = orthonormal_complement(qr.Q);
  return out;
}

// LmcModel --------------------------------------------------------------------

Eigen::Index LmcModel::parameter_count(Variant variant, Eigen::Index p, Eigen::Index q) {
  return variant == Variant::exact ? exact_layout(p, q).total
                                   : projected_layout(variant, p, q).total;
}

LmcModel::LmcModel(Variant variant, Eigen::Index p, Eigen::Index q, Matrix q_base,
                   Vector parameters)
    : variant_(variant), p_(p), q_(q), q_base_(std::move(q_base)), params_(std::move(parameters)) {
  if (q < 1 || q > p) throw InvalidInput("LmcModel: need 1 <= q <= p");
  if (params_.size() != parameter_count(variant, p, q)) {
    throw InvalidInput("LmcModel: parameter vector has wrong length");
  }
  if (is_projected()) {
    if (q_base_.rows() != p || q_base_.cols() != p) throw InvalidInput("LmcModel: Q_base must be p x p");
    if ((q_base_.transpose() * q_base_ - Matrix::Identity(p, p)).norm() > 1e-8) {
      throw InvalidInput("LmcModel: Q_base must be orthonormal");
    }
  }
}

LmcModel LmcModel::from_svd(Variant variant, const Dataset& data, Eigen::Index q,
                            std::uint64_t seed) {
  const SvdInit init = init_from_svd(data, q, seed);
  const auto p = data.p();
  const auto k = p - q;
  Vector v = Vector::Zero(parameter_count(variant, p, q));
  if (variant == Variant::exact) {
    const ExactLayout lay = exact_layout(p, q);
    Eigen::Map<Matrix>(v.data() + lay.h, p, q) = init.H0;
    pack_lower_logdiag(std::sqrt(kInitNoise) * Matrix::Identity(p, p), v, lay.ls);
    return LmcModel(variant, p, q, Matrix(), v);
  }
  const ProjectedLayout lay = projected_layout(variant, p, q);
  Matrix base(p, p);
  base << init.Q, init.Qperp;
  if (variant == Variant::oilmm) {
    v.segment(lay.r, q) = init.R.diagonal().array().log();
  } else {
    pack_upper_logdiag(init.R, v, lay.r);
  }
  // Sigma starts at kInitNoise * I: R is diagonal after the SVD, so Sigma_P = kInitNoise R^{-2}.
  for (Eigen::Index i = 0; i < q; ++i) {
    const double r = init.R(i, i);
    v(lay.sig + i) = std::log(r > kPadSingularValue ? kInitNoise / (r * r) : kInitNoise);
  }
  const double init_l = 1.0 / std::sqrt(kInitNoise);
  if (k > 0) {
    if (variant == Variant::oilmm) {
      v(lay.l) = std::log(init_l);
    } else if (diagonal_l(variant)) {
      v.segment(lay.l, k).setConstant(std::log(init_l));
    } else {
      pack_lower_logdiag(init_l * Matrix::Identity(k, k), v, lay.l);
    }
  }
  return LmcModel(variant, p, q, base, v);
}

void LmcModel::set_parameters(const Vector& params) {
  if (params.size() != params_.size()) throw InvalidInput("set_parameters: wrong length");
  params_ = params;
}

std::vector<bool> LmcModel::decay_mask() const {
  std::vector<bool> mask(params_.size(), false);
  Eigen::Index from = 0;
  if (variant_ == Variant::exact) {
    from = exact_layout(p_, q_).ls;
  } else {
    from = projected_layout(variant_, p_, q_).sig;
  }
  for (Eigen::Index i = from; i < params_.size(); ++i) mask[i] = true;
  return mask;
}

std::vector<std::string> LmcModel::parameter_names() const {
  std::vector<std::string> names;
  auto idx = [](Eigen::Index i, Eigen::Index j) {
    return "[" + std::to_string(i) + "," + std::to_string(j) + "]";
  };
  auto kernel_names = [&] {
    for (Eigen::Index i = 0; i < q_; ++i) {
      names.push_back("log_lengthscale[" + std::to_string(i) + "]");
      names.push_back("log_output_scale[" + std::to_string(i) + "]");
    }
  };
  if (variant_ == Variant::exact) {
    for (Eigen::Index j = 0; j < q_; ++j)
      for (Eigen::Index i = 0; i < p_; ++i) names.push_back("H" + idx(i, j));
    for (Eigen::Index j = 0; j < p_; ++j)
      for (Eigen::Index i = j; i < p_; ++i) names.push_back((i == j ? "log_Lsigma" : "Lsigma") + idx(i, j));
    kernel_names();
    return names;
  }
  const auto k = p_ - q_;
  for (Eigen::Index j = 0; j < p_; ++j)
    for (Eigen::Index i = j + 1; i < p_; ++i) names.push_back("S" + idx(i, j));
  if (variant_ == Variant::oilmm) {
    for (Eigen::Index i = 0; i < q_; ++i) names.push_back("log_R" + idx(i, i));
  } else {
    for (Eigen::Index j = 0; j < q_; ++j)
      for (Eigen::Index i = 0; i <= j; ++i) names.push_back((i == j ? "log_R" : "R") + idx(i, j));
  }
  for (Eigen::Index i = 0; i < q_; ++i) names.push_back("log_sigma_p[" + std::to_string(i) + "]");
  if (has_m(variant_))
    for (Eigen::Index j = 0; j < k; ++j)
      for (Eigen::Index i = 0; i < q_; ++i) names.push_back("M" + idx(i, j));
  if (k > 0) {
    if (variant_ == Variant::oilmm) {
      names.push_back("log_lambda");
    } else if (diagonal_l(variant_)) {
      for (Eigen::Index i = 0; i < k; ++i) names.push_back("log_L" + idx(i, i));
    } else {
      for (Eigen::Index j = 0; j < k; ++j)
        for (Eigen::Index i = j; i < k; ++i) names.push_back((i == j ? "log_L" : "L") + idx(i, j));
    }
  }
  kernel_names();
  return names;
}

LatentKernelSet LmcModel::kernels() const {
  const Eigen::Index off = variant_ == Variant::exact ? exact_layout(p_, q_).ker
                                                      : projected_layout(variant_, p_, q_).ker;
  return unpack_kernels(params_, off, q_);
}

Matrix LmcModel::H() const {
  if (variant_ == Variant::exact) {
    return Eigen::Map<const Matrix>(params_.data() + exact_layout(p_, q_).h, p_, q_);
  }
  return noise().H();
}

Matrix LmcModel::sigma() const {
  if (variant_ == Variant::exact) {
    const Matrix l = unpack_lower_logdiag(params_, exact_layout(p_, q_).ls, p_);
    return l * l.transpose();
  }
  return build_sigma(noise());
}

Matrix LmcModel::generator() const {
  if (!is_projected()) throw InvalidInput("generator: exact model has no Q+ generator");
  return unpack_skew(params_, 0, p_);
}

NoiseParametrization LmcModel::noise() const {
  if (!is_projected()) throw InvalidInput("noise: exact model has an unstructured Sigma");
  const ProjectedView view = decode_projected(variant_, p_, q_, q_base_, params_);
  NoiseParametrization out;
  out.mixing = MixingQR::from_Qplus(view.Qplus, view.R);
  out.sigma_p = view.sigma_p;
  out.M = view.M;
  out.L = view.L;
  out.flags = flags_for(variant_);
  return out;
}

double LmcModel::loss(const Dataset& data, const InferenceOptions& opts) const {
  if (variant_ == Variant::exact) return -naive_mll(data, H(), sigma(), kernels(), opts);
  return -projected_mll(data, noise(), kernels(), opts);
}

PredictionResult LmcModel::predict(const Dataset& train, const Matrix& xstar,
                                   const InferenceOptions& opts) const {
  if (variant_ == Variant::exact) return naive_posterior(train, H(), sigma(), kernels(), xstar, opts);
  return decoupled_posterior(train, noise(), kernels(), xstar, opts);
}

LossGradient LmcModel::loss_gradient(const Dataset& data, const InferenceOptions& opts) const {
  data.validate();
  if (data.p() != p_) throw InvalidInput("loss_gradient: dataset has wrong number of tasks");
  return variant_ == Variant::exact ? exact_loss_gradient(data, opts)
                                    : projected_loss_gradient(data, opts);
}

LossGradient LmcModel::projected_loss_gradient(const Dataset& data,
                                               const InferenceOptions& opts) const {
  const ProjectedLayout lay = projected_layout(variant_, p_, q_);
  const ProjectedView view = decode_projected(variant_, p_, q_, q_base_, params_);
  const auto n = data.n();
  const auto nd = static_cast<double>(n);
  const auto k = p_ - q_;
  const Matrix& Y = data.Y;

  const Matrix yq = view.Qplus.leftCols(q_).transpose() * Y;  // q x n
  const Matrix yp = view.Qplus.rightCols(k).transpose() * Y;  // k x n
  const auto r_upper = view.R.triangularView<Eigen::Upper>();
  const Matrix z1 = r_upper.solve(yq);
  const Matrix mp = view.M * yp;  // q x n
  const Matrix z = z1 + view.sigma_p.asDiagonal() * mp;

  double f = 0.5 * static_cast<double>(k) * nd * kLog2Pi;
  f += nd * view.R.diagonal().array().log().sum();
  if (k > 0) {
    f -= nd * view.L.diagonal().array().log().sum();
    f += 0.5 * (view.L.transpose() * yp).squaredNorm();
  }

  LossGradient out;
  out.gradient = Vector::Zero(params_.size());
  Matrix g_z(q_, n);
  const Matrix dist = distance_matrix(data.X, data.X);
  for (Eigen::Index i = 0; i < q_; ++i) {
    const Matern52Kernel& kern = view.kernels[i];
    const Matrix gram = kernel_matrix(data.X, kern, opts.jitter * kern.output_scale);
    Matrix c = gram;
    c.diagonal().array() += view.sigma_p(i);
    const Factorization fc = cholesky_with_jitter(
        c, 0.0, kern.output_scale + view.sigma_p(i),
        "K_" + std::to_string(i) + " + sigma^2 I for latent " + std::to_string(i));
    const Vector zi = z.row(i).transpose();
    const Vector alpha = fc.solve(zi);
    f += 0.5 * (zi.dot(alpha) + fc.log_det() + nd * kLog2Pi);
    g_z.row(i) = alpha.transpose();
    const Matrix g = 0.5 * (fc.inverse() - alpha * alpha.transpose());
    double dl = 0.0, ds = 0.0;
    kernel_gradient(g, dist, gram, kern, dl, ds);
    out.gradient(lay.ker + 2 * i) = dl;
    out.gradient(lay.ker + 2 * i + 1) = ds;
    // sigma_p enters both the Gram shift and the projection T.
    const double d_sigma = g.trace() + g_z.row(i).dot(mp.row(i));
    out.gradient(lay.sig + i) = d_sigma * view.sigma_p(i);
  }
  out.loss = f;

  // R: f depends on R through n log|R| and z1 = R^{-1} Y_Q.
  Matrix g_r = -r_upper.transpose().solve(g_z) * z1.transpose();
  g_r.diagonal() += nd * view.R.diagonal().cwiseInverse();
  if (variant_ == Variant::oilmm) {
    for (Eigen::Index i = 0; i < q_; ++i) out.gradient(lay.r + i) = g_r(i, i) * view.R(i, i);
  } else {
    Eigen::Index c = lay.r;
    for (Eigen::Index j = 0; j < q_; ++j)
      for (Eigen::Index i = 0; i <= j; ++i)
        out.gradient(c++) = i == j ? g_r(i, i) * view.R(i, i) : g_r(i, j);
  }

  if (lay.m_n > 0) {
    const Matrix g_m = view.sigma_p.asDiagonal() * g_z * yp.transpose();
    Eigen::Map<Matrix>(out.gradient.data() + lay.m, q_, k) = g_m;
  }

  Matrix g_yp = view.M.transpose() * view.sigma_p.asDiagonal() * g_z;
  if (k > 0) {
    g_yp += view.L * (view.L.transpose() * yp);
    Matrix g_l = (yp * yp.transpose()) * view.L;
    g_l.diagonal() -= nd * view.L.diagonal().cwiseInverse();
    if (variant_ == Variant::oilmm) {
      out.gradient(lay.l) = g_l.trace() * view.L(0, 0);
    } else if (diagonal_l(variant_)) {
      for (Eigen::Index i = 0; i < k; ++i) out.gradient(lay.l + i) = g_l(i, i) * view.L(i, i);
    } else {
      Eigen::Index c = lay.l;
      for (Eigen::Index j = 0; j < k; ++j)
        for (Eigen::Index i = j; i < k; ++i)
          out.gradient(c++) = i == j ? g_l(i, i) * view.L(i, i) : g_l(i, j);
    }
  }

  // Q+ = Q_base exp(S); df/dQ+ = Y [df/dY_Q ; df/dY_P]^T.
  Matrix g_proj(p_, n);
  g_proj.topRows(q_) = r_upper.transpose().solve(g_z);
  g_proj.bottomRows(k) = g_yp;
  const Matrix g_qplus = Y * g_proj.transpose();
  const Matrix g_s = expm_adjoint(view.S, q_base_.transpose() * g_qplus);
  Eigen::Index c = lay.gen;
  for (Eigen::Index j = 0; j < p_; ++j)
    for (Eigen::Index i = j + 1; i < p_; ++i) out.gradient(c++) = g_s(i, j) - g_s(j, i);
  return out;
}

LossGradient LmcModel::exact_loss_gradient(const Dataset& data,
                                           const InferenceOptions& opts) const {
  const ExactLayout lay = exact_layout(p_, q_);
  const Matrix h = H();
  const Matrix l_sigma = unpack_lower_logdiag(params_, lay.ls, p_);
  const Matrix sigma = l_sigma * l_sigma.transpose();
  const LatentKernelSet kerns = kernels();
  const auto n = data.n();
  const auto N = n * p_;

  const Matrix big = naive_covariance(data, h, sigma, kerns, opts);
  const Factorization f =
      cholesky_with_jitter(big, 0.0, big.diagonal().cwiseAbs().maxCoeff(), "naive LMC covariance");
  Vector yv(N);
  for (Eigen::Index a = 0; a < p_; ++a) yv.segment(a * n, n) = data.Y.row(a).transpose();
  const Vector alpha = f.solve(yv);

  LossGradient out;
  out.loss = 0.5 * (yv.dot(alpha) + f.log_det() + static_cast<double>(N) * kLog2Pi);
  out.gradient = Vector::Zero(params_.size());

  // G = (Kcal^{-1} - alpha alpha^T) / 2 from the triangular inverse of the
  // Cholesky factor; only the lower half is formed, then mirrored.
  const Matrix l_inv =
      f.llt.matrixL().solve(Matrix::Identity(N, N));
  Matrix g = Matrix::Zero(N, N);
  g.selfadjointView<Eigen::Lower>().rankUpdate(l_inv.transpose(), 0.5);
  g.selfadjointView<Eigen::Lower>().rankUpdate(alpha, -0.5);
  g.triangularView<Eigen::StrictlyUpper>() = g.transpose();

  const std::vector<Matrix> grams = latent_grams(data.X, kerns, opts);
  Matrix g_sigma(p_, p_);
  std::vector<Matrix> w(q_, Matrix::Zero(p_, p_));
  std::vector<Matrix> g_k(q_, Matrix::Zero(n, n));
  for (Eigen::Index a = 0; a < p_; ++a) {
    for (Eigen::Index b = 0; b < p_; ++b) {
      const auto block = g.block(a * n, b * n, n, n);
      g_sigma(a, b) = block.trace();
      for (Eigen::Index i = 0; i < q_; ++i) {
        w[i](a, b) = block.cwiseProduct(grams[i]).sum();
        g_k[i] += (h(a, i) * h(b, i)) * block;
      }
    }
  }

  Eigen::Map<Matrix> g_h(out.gradient.data() + lay.h, p_, q_);
  for (Eigen::Index i = 0; i < q_; ++i) g_h.col(i) = 2.0 * w[i] * h.col(i);

  const Matrix g_l = (g_sigma + g_sigma.transpose()) * l_sigma;
  Eigen::Index c = lay.ls;
  for (Eigen::Index j = 0; j < p_; ++j)
    for (Eigen::Index i = j; i < p_; ++i)
      out.gradient(c++) = i == j ? g_l(i, i) * l_sigma(i, i) : g_l(i, j);

  const Matrix dist = distance_matrix(data.X, data.X);
  for (Eigen::Index i = 0; i < q_; ++i) {
    double dl = 0.0, ds = 0.0;
    kernel_gradient(g_k[i], dist, grams[i], kerns[i], dl, ds);
    out.gradient(lay.ker + 2 * i) = dl;
    out.gradient(lay.ker + 2 * i + 1) = ds;
  }
  return out;
}

}  // namespace plmc
