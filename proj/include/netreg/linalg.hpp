#pragma once

#include <algorithm>
#include <atomic>
#include <cmath>
#include <limits>
#include <string>
#include <utility>
#include <vector>

#include <Eigen/Dense>

#ifdef NETREG_HAVE_LAPACKE
#include <lapacke.h>
#endif

#include "netreg/error.hpp"
#include "netreg/rng.hpp"

namespace netreg {

using Matrix = Eigen::MatrixXd;
using Vector = Eigen::VectorXd;
using Index = Eigen::Index;

/// ln cosh(t) evaluated without overflow: |t| + ln(1 + e^{-2|t|}) - ln 2.
inline double log_cosh(double t) noexcept {
  const double a = std::abs(t);
  return a + std::log1p(std::exp(-2.0 * a)) - M_LN2;
}

/// 1 / cosh^2(t), which is 0 in floating point once |t| exceeds ~355.
inline double sech_sq(double t) noexcept {
  const double a = std::abs(t);
  if (a > 350.0) return 0.0;
  const double e = std::exp(-2.0 * a);
  return 4.0 * e / ((1.0 + e) * (1.0 + e));
}

struct SymmetricEigen {
  Vector values;   // ascending
  Matrix vectors;  // columns are orthonormal eigenvectors
};

namespace detail {

inline SymmetricEigen eigen_symmetric_eigen(const Matrix& a) {
  Eigen::SelfAdjointEigenSolver<Matrix> es(a);
  if (es.info() != Eigen::Success) {
    throw Error("symmetric_eigen: eigensolver did not converge");
  }
  return {es.eigenvalues(), es.eigenvectors()};
}

#ifdef NETREG_HAVE_LAPACKE
/// Cheap a-posteriori check of a decomposition: A U w = U diag(values) w and
/// U^T U w = w for a fixed random w, both in O(n^2).
inline bool decomposition_plausible(const Matrix& a, const SymmetricEigen& e) {
  const Index n = a.rows();
  CounterRng rng(0xe16c4ecULL);
  Vector w(n);
  for (Index i = 0; i < n; ++i) w(i) = rng.normal();
  const Vector uw = e.vectors * w;
  const double scale = std::max(a.cwiseAbs().maxCoeff(), 1e-300) * static_cast<double>(n);
  const double tol = 1e-10 * std::sqrt(static_cast<double>(n)) * w.norm();
  const Vector resid = a.selfadjointView<Eigen::Lower>() * uw -
                       e.vectors * e.values.cwiseProduct(w);
  const Vector orth = e.vectors.transpose() * uw - w;
  return uw.allFinite() && resid.norm() <= tol * scale && orth.norm() <= tol;
}

/// Set once a LAPACK result fails the check; later calls go straight to Eigen.
inline std::atomic<bool>& lapack_distrusted() {
  static std::atomic<bool> flag{false};
  return flag;
}
#endif

}  // namespace detail

/// Full eigendecomposition of a symmetric matrix (lower triangle is read).
///
/// Uses LAPACK dsyevd when available. Some optimized BLAS builds return
/// corrupted eigenvectors on certain CPUs, so each LAPACK result is probed and
/// replaced by Eigen's solver if it does not check out.
inline SymmetricEigen symmetric_eigen(const Matrix& a) {
  if (a.rows() != a.cols()) {
    throw DimensionError("symmetric_eigen: matrix is not square");
  }
  const Index n = a.rows();
  if (n == 0) return {};
#ifdef NETREG_HAVE_LAPACKE
  if (!detail::lapack_distrusted()) {
    SymmetricEigen out;
    out.vectors = a;
    out.values.resize(n);
    const lapack_int info =
        LAPACKE_dsyevd(LAPACK_COL_MAJOR, 'V', 'L', static_cast<lapack_int>(n),
                       out.vectors.data(), static_cast<lapack_int>(n), out.values.data());
    if (info == 0 && detail::decomposition_plausible(a, out)) return out;
    detail::lapack_distrusted() = true;
  }
#endif
  return detail::eigen_symmetric_eigen(a);
}

/// Eigenvalues only, ascending.
inline Vector symmetric_eigenvalues(const Matrix& a) {
  if (a.rows() != a.cols()) {
    throw DimensionError("symmetric_eigenvalues: matrix is not square");
  }
  if (a.rows() == 0) return Vector();
  Eigen::SelfAdjointEigenSolver<Matrix> es(a, Eigen::EigenvaluesOnly);
  if (es.info() != Eigen::Success) {
    throw Error("symmetric_eigenvalues: eigensolver did not converge");
  }
  return es.eigenvalues();
}

struct SpectrumBounds {
  double min = 0.0;
  double max = 0.0;
};

/// Smallest and largest eigenvalue of a symmetric operator given only its
/// matrix-vector product, by Lanczos with full reorthogonalization.
///
/// Stops once both extreme Ritz pairs have residual below
/// rel_tol * max|Ritz value|; the Ritz values are then within that residual
/// of true eigenvalues. The start vector is fixed, so results are
/// deterministic.
template <class MatVec>
SpectrumBounds lanczos_extremes(Index n, MatVec&& apply, double rel_tol = 1e-13,
                                Index max_steps = 600) {
  SpectrumBounds out;
  if (n == 0) return out;
  const Index m = std::min(n, max_steps);
  Matrix basis(n, m);
  std::vector<double> alpha;
  std::vector<double> beta;
  alpha.reserve(m);
  beta.reserve(m);

  CounterRng rng(0x1a2c705ULL);
  Vector v(n);
  for (Index i = 0; i < n; ++i) v(i) = rng.normal();
  v.normalize();
  Vector w(n);
  double norm_est = 0.0;

  auto ritz = [&](Index k, bool& converged) {
    Eigen::SelfAdjointEigenSolver<Matrix> es;
    Vector diag = Eigen::Map<const Vector>(alpha.data(), k);
    Vector sub = Eigen::Map<const Vector>(beta.data(), std::max<Index>(k - 1, 0));
    es.computeFromTridiagonal(diag, sub, Eigen::ComputeEigenvectors);
    const double lo = es.eigenvalues()(0);
    const double hi = es.eigenvalues()(k - 1);
    const double scale = std::max({std::abs(lo), std::abs(hi),
                                   std::numeric_limits<double>::min()});
    const double next = static_cast<Index>(beta.size()) >= k ? beta[k - 1] : 0.0;
    const double r_lo = std::abs(next * es.eigenvectors()(k - 1, 0));
    const double r_hi = std::abs(next * es.eigenvectors()(k - 1, k - 1));
    converged = r_lo <= rel_tol * scale && r_hi <= rel_tol * scale;
    return SpectrumBounds{lo, hi};
  };

  for (Index j = 0; j < m; ++j) {
    basis.col(j) = v;
    apply(v, w);
    const double a = v.dot(w);
    alpha.push_back(a);
    // Two passes of classical Gram-Schmidt against the whole basis.
    for (int pass = 0; pass < 2; ++pass) {
      const Vector coef = basis.leftCols(j + 1).transpose() * w;
      w.noalias() -= basis.leftCols(j + 1) * coef;
    }
    const double b = w.norm();
    beta.push_back(b);
    const Index k = j + 1;
    norm_est = std::max(norm_est, std::abs(a) + b + (j > 0 ? beta[j - 1] : 0.0));
    const bool breakdown = b <= 1e-14 * norm_est;
    if (breakdown || k == m || k % 5 == 0) {
      bool converged = false;
      out = ritz(k, converged);
      if (breakdown || converged || k == n) {
        return out;
      }
    }
    v = w / b;
  }
  return out;
}

/// Extreme eigenvalues of a dense symmetric matrix: a direct solve for small
/// matrices, Lanczos above `dense_limit`.
inline SpectrumBounds extreme_eigenvalues(const Matrix& a, Index dense_limit = 300) {
  if (a.rows() != a.cols()) {
    throw DimensionError("extreme_eigenvalues: matrix is not square");
  }
  const Index n = a.rows();
  if (n == 0) return {};
  if (n <= dense_limit) {
    const Vector ev = symmetric_eigenvalues(a);
    return {ev(0), ev(n - 1)};
  }
  return lanczos_extremes(n, [&a](const Vector& x, Vector& y) { y.noalias() = a * x; });
}

}  // namespace netreg
