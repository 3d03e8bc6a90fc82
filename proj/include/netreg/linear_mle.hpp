#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "netreg/error.hpp"
#include "netreg/linalg.hpp"
#include "netreg/model_core.hpp"
#include "netreg/optimize.hpp"
#include "netreg/rng.hpp"

namespace netreg {

namespace detail {

inline constexpr double kLn2Pi = 1.8378770664093454836;

inline void check_linear_dataset(const LinearParams& p, const Dataset& data) {
  if (data.kind() != ModelKind::kLinear) throw Error("linear likelihood needs a linear dataset");
  if (p.theta.size() != data.d() || p.kappa.size() != data.d()) {
    throw DimensionError("linear likelihood: theta/kappa must have d=" +
                         std::to_string(data.d()) + " entries");
  }
}

}  // namespace detail

/// Law of z ~ N(mu, Sigma) with Sigma = (beta A + D)^{-1} and
/// mu = Sigma (A X kappa + D X theta), held through the Cholesky factor of
/// beta A + D.
class GaussianMoments {
 public:
  GaussianMoments(const LinearParams& p, const Dataset& data) {
    detail::check_linear_dataset(p, data);
    const RegressionDesign& des = data.design();
    Matrix prec = p.beta * data.interaction().matrix();
    prec.diagonal() += des.d_diag();
    llt_.compute(prec);
    if (llt_.info() != Eigen::Success) {
      throw NotPositiveDefinite("beta*A + D is not positive definite at beta=" +
                                std::to_string(p.beta));
    }
    const Matrix& l = llt_.matrixLLT();
    logdet_ = 2.0 * l.diagonal().array().log().sum();
    rhs_ = data.interaction().apply(des.x() * p.kappa) +
           des.d_diag().cwiseProduct(des.x() * p.theta);
    mu_ = llt_.solve(rhs_);
  }

  const Vector& mu() const noexcept { return mu_; }
  /// A X kappa + D X theta.
  const Vector& rhs() const noexcept { return rhs_; }
  double logdet() const noexcept { return logdet_; }
  const Eigen::LLT<Matrix>& cholesky() const noexcept { return llt_; }
  Matrix sigma() const { return llt_.solve(Matrix::Identity(mu_.size(), mu_.size())); }
  Matrix solve(const Matrix& b) const { return llt_.solve(b); }

 private:
  Eigen::LLT<Matrix> llt_;
  Vector mu_;
  Vector rhs_;
  double logdet_ = 0.0;
};

/// Negative log-likelihood in the (theta, beta, kappa) parametrization:
///   1/2 y^T P y - y^T A X kappa - y^T D X theta + n/2 ln 2pi - 1/2 logdet P + 1/2 b^T P^{-1} b
/// with P = beta A + D and b = A X kappa + D X theta. Dense O(n^3) evaluation.
inline double nll_value(const LinearParams& p, const Dataset& data) {
  const GaussianMoments g(p, data);
  const RegressionDesign& des = data.design();
  const Vector& y = data.y();
  const Vector ay = data.interaction().apply(y);
  const double n = static_cast<double>(data.n());
  const double quad = 0.5 * (p.beta * y.dot(ay) + y.dot(des.d_diag().cwiseProduct(y)));
  return quad - ay.dot(des.x() * p.kappa) - y.dot(des.d_diag().cwiseProduct(des.x() * p.theta)) +
         0.5 * n * detail::kLn2Pi - 0.5 * g.logdet() + 0.5 * g.rhs().dot(g.mu());
}

/// Gradient of nll_value in the packed order (theta, beta, kappa).
inline Vector nll_gradient(const LinearParams& p, const Dataset& data) {
  const GaussianMoments g(p, data);
  const RegressionDesign& des = data.design();
  const Matrix& a = data.interaction().matrix();
  const Matrix& x = des.x();
  const Vector& y = data.y();
  const Index d = data.d();
  const Vector dy = des.d_diag().cwiseProduct(y);
  const Vector dmu = des.d_diag().cwiseProduct(g.mu());
  const Vector ay = data.interaction().apply(y);
  const Vector amu = data.interaction().apply(g.mu());
  const double tr_a_sigma = g.solve(a).trace();
  Vector out(2 * d + 1);
  out.head(d) = x.transpose() * (dmu - dy);
  out(d) = 0.5 * y.dot(ay) - 0.5 * tr_a_sigma - 0.5 * g.mu().dot(amu);
  out.tail(d) = x.transpose() * (amu - ay);
  return out;
}

/// Hessian of nll_value: the covariance of (-1/2 z^T A z, X^T D z, X^T A z)
/// under z ~ N(mu, Sigma), arranged as (theta, beta, kappa).
inline Matrix nll_hessian(const LinearParams& p, const Dataset& data) {
  const GaussianMoments g(p, data);
  const RegressionDesign& des = data.design();
  const Matrix& a = data.interaction().matrix();
  const Matrix& x = des.x();
  const Index d = data.d();
  const Matrix dx = des.d_diag().asDiagonal() * x;
  const Matrix ax = a * x;
  const Matrix sigma = g.sigma();
  const Matrix a_sigma = a * sigma;
  const Vector amu = a * g.mu();
  const Vector sigma_amu = sigma * amu;

  Matrix h(2 * d + 1, 2 * d + 1);
  h.block(0, 0, d, d) = dx.transpose() * sigma * dx;
  h.block(d + 1, d + 1, d, d) = ax.transpose() * sigma * ax;
  h.block(0, d + 1, d, d) = dx.transpose() * sigma * ax;
  h.block(d + 1, 0, d, d) = h.block(0, d + 1, d, d).transpose();
  h(d, d) = 0.5 * (a_sigma.cwiseProduct(a_sigma.transpose())).sum() + amu.dot(sigma_amu);
  const Vector bt = -(dx.transpose() * sigma_amu);
  const Vector bk = -(ax.transpose() * sigma_amu);
  h.block(0, d, d, 1) = bt;
  h.block(d, 0, 1, d) = bt.transpose();
  h.block(d + 1, d, d, 1) = bk;
  h.block(d, d + 1, 1, d) = bk.transpose();
  return h;
}

/// Fast evaluator of the same objective. Diagonalizes D^{-1/2} A D^{-1/2} once,
/// after which value, gradient and Hessian cost O(n d) at any (theta, beta, kappa).
class LinearObjective {
 public:
  explicit LinearObjective(const Dataset& data) : n_(data.n()), d_(data.d()) {
    if (data.kind() != ModelKind::kLinear) throw Error("LinearObjective: dataset is not linear");
    const RegressionDesign& des = data.design();
    const Vector sq = des.d_diag().cwiseSqrt();
    const Vector inv_sq = sq.cwiseInverse();
    Matrix s = inv_sq.asDiagonal() * data.interaction().matrix() * inv_sq.asDiagonal();
    SymmetricEigen es = symmetric_eigen(s);
    s.resize(0, 0);
    lambda_ = std::move(es.values);
    proj_ = es.vectors.transpose() * (sq.asDiagonal() * des.x());
    const Vector& y = data.y();
    const Vector ay = data.interaction().apply(y);
    y_a_y_ = y.dot(ay);
    y_d_y_ = y.dot(des.d_diag().cwiseProduct(y));
    x_a_y_ = des.x().transpose() * ay;
    x_d_y_ = des.x().transpose() * des.d_diag().cwiseProduct(y);
    sum_log_d_ = des.d_diag().array().log().sum();
    flat_beta_ = data.interaction().nonzeros() == 0;
    flat_kappa_.resize(static_cast<std::size_t>(d_));
    for (Index k = 0; k < d_; ++k) {
      flat_kappa_[static_cast<std::size_t>(k)] =
          flat_beta_ || data.interaction().apply(des.x().col(k)).cwiseAbs().maxCoeff() == 0.0;
    }
  }

  Index n() const noexcept { return n_; }
  Index d() const noexcept { return d_; }
  /// Eigenvalues of D^{-1/2} A D^{-1/2}, ascending.
  const Vector& spectrum() const noexcept { return lambda_; }

  /// beta*A + D is positive definite iff 1 + beta*lambda_k > 0 for every k.
  bool positive_definite(double beta) const noexcept {
    if (lambda_.size() == 0) return true;
    return 1.0 + beta * lambda_(0) > 0.0 && 1.0 + beta * lambda_(lambda_.size() - 1) > 0.0;
  }

  /// Structurally flat coordinates in the packed order: beta when A = 0, and
  /// kappa_k when A x_k = 0.
  std::vector<Index> flat_coordinates() const {
    std::vector<Index> out;
    if (flat_beta_) out.push_back(d_);
    for (Index k = 0; k < d_; ++k) {
      if (flat_kappa_[static_cast<std::size_t>(k)]) out.push_back(d_ + 1 + k);
    }
    return out;
  }

  double value(const Vector& v) const {
    return evaluate(v, nullptr, nullptr);
  }

  /// Value, with the gradient written to `grad` (packed order).
  double operator()(const Vector& v, Vector& grad) const { return evaluate(v, &grad, nullptr); }

  Vector gradient(const Vector& v) const {
    Vector g;
    evaluate(v, &g, nullptr);
    return g;
  }

  Matrix hessian(const Vector& v) const {
    Matrix h;
    evaluate(v, nullptr, &h);
    return h;
  }

 private:
  double evaluate(const Vector& v, Vector* grad, Matrix* hess) const {
    if (v.size() != 2 * d_ + 1) throw DimensionError("LinearObjective: expected 2d+1 parameters");
    const auto theta = v.head(d_);
    const double beta = v(d_);
    const auto kappa = v.tail(d_);
    if (!positive_definite(beta)) {
      throw NotPositiveDefinite("beta*A + D is not positive definite at beta=" +
                                std::to_string(beta));
    }
    const Vector shift = (1.0 + beta * lambda_.array()).matrix();
    const Vector s = shift.cwiseInverse();
    const Vector bt = lambda_.cwiseProduct(proj_ * kappa) + proj_ * theta;
    const Vector sb = s.cwiseProduct(bt);
    const double n = static_cast<double>(n_);
    const double logdet = sum_log_d_ + shift.array().log().sum();
    const double value = 0.5 * (beta * y_a_y_ + y_d_y_) - kappa.dot(x_a_y_) -
                         theta.dot(x_d_y_) + 0.5 * n * detail::kLn2Pi - 0.5 * logdet +
                         0.5 * bt.dot(sb);
    if (grad) {
      const Vector lsb = lambda_.cwiseProduct(sb);
      grad->resize(2 * d_ + 1);
      grad->head(d_) = proj_.transpose() * sb - x_d_y_;
      (*grad)(d_) = 0.5 * y_a_y_ - 0.5 * lambda_.dot(s) - 0.5 * lsb.dot(sb);
      grad->tail(d_) = proj_.transpose() * lsb - x_a_y_;
    }
    if (hess) {
      const Vector ls = lambda_.cwiseProduct(s);
      const Vector lsb = ls.cwiseProduct(sb);  // lambda s^2 b
      hess->resize(2 * d_ + 1, 2 * d_ + 1);
      const Matrix sp = s.asDiagonal() * proj_;
      const Matrix lp = lambda_.asDiagonal() * proj_;
      hess->block(0, 0, d_, d_) = proj_.transpose() * sp;
      hess->block(0, d_ + 1, d_, d_) = sp.transpose() * lp;
      hess->block(d_ + 1, 0, d_, d_) = hess->block(0, d_ + 1, d_, d_).transpose();
      hess->block(d_ + 1, d_ + 1, d_, d_) = lp.transpose() * (s.asDiagonal() * lp);
      (*hess)(d_, d_) = 0.5 * ls.squaredNorm() + lsb.dot(lambda_.cwiseProduct(sb));
      const Vector ht = -(proj_.transpose() * lsb);
      const Vector hk = -(lp.transpose() * lsb);
      hess->block(0, d_, d_, 1) = ht;
      hess->block(d_, 0, 1, d_) = ht.transpose();
      hess->block(d_ + 1, d_, d_, 1) = hk;
      hess->block(d_, d_ + 1, 1, d_) = hk.transpose();
    }
    return value;
  }

  Index n_ = 0;
  Index d_ = 0;
  Vector lambda_;
  Matrix proj_;  // U^T D^{1/2} X
  double y_a_y_ = 0.0;
  double y_d_y_ = 0.0;
  Vector x_a_y_;
  Vector x_d_y_;
  double sum_log_d_ = 0.0;
  bool flat_beta_ = false;
  std::vector<bool> flat_kappa_;
};

struct LinearFitOptions {
  std::optional<double> step_size;
  std::optional<double> tolerance;  // default 1/sqrt(n)
  long max_iters = 100000;
  bool record_trace = false;
  /// Number of beta values (evenly spaced over [-B, B]) used for the smoothness bound.
  int beta_grid = 21;
  /// Above this many (theta, kappa) corners a deterministic random subset is used.
  long max_corners = 4096;
};

struct LinearFitDiagnostics {
  long iterations = 0;
  double stationarity = 0.0;
  double gradient_norm = 0.0;
  double step_size = 0.0;
  double smoothness = 0.0;
  double tolerance = 0.0;
  double nll = 0.0;
  std::vector<Index> flat_coordinates;
  PgdTrace trace;
};

struct LinearFit {
  LinearParams params;
  LinearFitDiagnostics diagnostics;
};

/// Largest Hessian eigenvalue over a beta grid and the corners of the
/// (theta, kappa) box. For fixed beta the top eigenvalue is convex in
/// (theta, kappa), so its maximum over the box sits at a corner.
inline double linear_smoothness(const LinearObjective& obj, const ParameterBox& box,
                                int beta_grid = 21, long max_corners = 4096) {
  const Index d = obj.d();
  const int g = std::max(beta_grid, 3);
  const Index dims = 2 * d;
  std::vector<std::uint64_t> masks;
  if (dims < 63 && (std::uint64_t{1} << dims) <= static_cast<std::uint64_t>(max_corners)) {
    for (std::uint64_t m = 0; m < (std::uint64_t{1} << dims); ++m) masks.push_back(m);
  } else {
    CounterRng rng(0xc0de5ULL);
    for (long k = 0; k < max_corners; ++k) masks.push_back(rng());
  }
  const Vector hi = box.linear_upper(d);
  double best = 0.0;
  Vector v(2 * d + 1);
  for (int b = 0; b < g; ++b) {
    const double beta = -box.beta_bound + 2.0 * box.beta_bound * b / (g - 1);
    if (!obj.positive_definite(beta)) {
      throw NotPositiveDefinite("beta*A + D is not positive definite at beta=" +
                                std::to_string(beta) + "; shrink the beta bound");
    }
    for (std::uint64_t m : masks) {
      Index bit = 0;
      for (Index k = 0; k < 2 * d + 1; ++k) {
        if (k == d) {
          v(k) = beta;
          continue;
        }
        v(k) = ((m >> bit) & 1U) ? hi(k) : -hi(k);
        ++bit;
      }
      best = std::max(best, symmetric_eigenvalues(obj.hessian(v))(2 * d));
    }
  }
  return best;
}

/// Maximum-likelihood estimate in the (theta, beta, kappa) parametrization by
/// projected gradient descent from the origin.
inline LinearFit fit_linear_mle(const Dataset& data, const ParameterBox& box,
                                const LinearFitOptions& opt = {}) {
  box.validate();
  if (data.kind() != ModelKind::kLinear) throw Error("fit_linear_mle: dataset is not linear");
  const LinearObjective obj(data);
  for (double beta : {-box.beta_bound, box.beta_bound}) {
    if (!obj.positive_definite(beta)) {
      throw NotPositiveDefinite("fit_linear_mle: beta*A + D is not positive definite at beta=" +
                                std::to_string(beta) + "; shrink the beta bound");
    }
  }
  const Index d = data.d();
  LinearFitDiagnostics diag;
  if (opt.step_size) {
    diag.step_size = *opt.step_size;
  } else {
    diag.smoothness = 2.0 * linear_smoothness(obj, box, opt.beta_grid, opt.max_corners);
    diag.step_size = 1.0 / std::max(diag.smoothness, 1e-300);
  }
  PgdConfig cfg;
  cfg.step_size = diag.step_size;
  cfg.tolerance = opt.tolerance.value_or(1.0 / std::sqrt(static_cast<double>(data.n())));
  cfg.max_iters = opt.max_iters;
  cfg.record_trace = opt.record_trace;
  const PgdResult r = pgd_minimize(obj, Vector::Zero(2 * d + 1), box.linear_lower(d),
                                   box.linear_upper(d), cfg);
  LinearFit fit;
  fit.params = LinearParams::unpack(r.x);
  diag.iterations = r.iterations;
  diag.stationarity = r.stationarity;
  diag.gradient_norm = r.gradient.norm();
  diag.tolerance = cfg.tolerance;
  diag.nll = r.value;
  diag.flat_coordinates = obj.flat_coordinates();
  diag.trace = r.trace;
  fit.diagnostics = std::move(diag);
  return fit;
}

}  // namespace netreg
