#pragma once

#include <cmath>
#include <cstdint>
#include <memory>
#include <span>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "netreg/error.hpp"
#include "netreg/linalg.hpp"

namespace netreg {

/// Symmetric n x n interaction weights with an exactly zero diagonal.
///
/// Immutable once built. The matrix and its cached norms live behind a shared
/// pointer, so copies are cheap and safe to hand to other threads. When the
/// matrix is sparse enough a CSR copy of its rows is kept for O(nnz) products.
class InteractionMatrix {
 public:
  struct Entry {
    Index col;
    double value;
  };
  struct Edge {
    Index i;
    Index j;
    double weight;
  };

  InteractionMatrix() : InteractionMatrix(finish(Matrix())) {}

  /// Builds from the strictly upper triangle of `m`; everything else is ignored.
  static InteractionMatrix from_upper(const Matrix& m) {
    if (m.rows() != m.cols()) {
      throw DimensionError("InteractionMatrix: matrix must be square, got " +
                           std::to_string(m.rows()) + "x" + std::to_string(m.cols()));
    }
    const Index n = m.rows();
    Matrix a = Matrix::Zero(n, n);
    for (Index j = 0; j < n; ++j) {
      for (Index i = 0; i < j; ++i) {
        const double v = m(i, j);
        if (!std::isfinite(v)) {
          throw Error("InteractionMatrix: non-finite entry at (" + std::to_string(i) +
                      "," + std::to_string(j) + ")");
        }
        a(i, j) = v;
        a(j, i) = v;
      }
    }
    return finish(std::move(a));
  }

  /// Accepts a full matrix only if it is exactly symmetric with a zero diagonal.
  static InteractionMatrix from_symmetric(const Matrix& m) {
    if (m.rows() != m.cols()) {
      throw DimensionError("InteractionMatrix: matrix must be square");
    }
    for (Index j = 0; j < m.cols(); ++j) {
      if (m(j, j) != 0.0) {
        throw Error("InteractionMatrix: nonzero diagonal entry at " + std::to_string(j));
      }
      for (Index i = 0; i < j; ++i) {
        if (m(i, j) != m(j, i)) {
          throw Error("InteractionMatrix: matrix is not symmetric at (" +
                      std::to_string(i) + "," + std::to_string(j) + ")");
        }
      }
    }
    return from_upper(m);
  }

  /// Builds from an undirected weighted edge list. Loops and repeated pairs
  /// are rejected.
  static InteractionMatrix from_edges(Index n, std::span<const Edge> edges) {
    Matrix a = Matrix::Zero(n, n);
    for (const Edge& e : edges) {
      if (e.i < 0 || e.j < 0 || e.i >= n || e.j >= n) {
        throw DimensionError("InteractionMatrix: edge endpoint out of range");
      }
      if (e.i == e.j) throw Error("InteractionMatrix: self-loop at " + std::to_string(e.i));
      if (a(e.i, e.j) != 0.0) {
        throw Error("InteractionMatrix: repeated edge (" + std::to_string(e.i) + "," +
                    std::to_string(e.j) + ")");
      }
      if (!std::isfinite(e.weight)) throw Error("InteractionMatrix: non-finite weight");
      a(e.i, e.j) = e.weight;
      a(e.j, e.i) = e.weight;
    }
    return finish(std::move(a));
  }

  static InteractionMatrix zero(Index n) { return finish(Matrix::Zero(n, n)); }

  Index size() const noexcept { return data_->a.rows(); }
  const Matrix& matrix() const noexcept { return data_->a; }
  double operator()(Index i, Index j) const { return data_->a(i, j); }

  /// Spectral norm ||A||_2 = max |eigenvalue|.
  double norm2() const noexcept { return data_->norm2; }
  /// Max absolute row sum (equal to the max column sum by symmetry).
  double norm_inf() const noexcept { return data_->norm_inf; }
  double frob_sq() const noexcept { return data_->frob_sq; }
  double min_eigenvalue() const noexcept { return data_->spectrum.min; }
  double max_eigenvalue() const noexcept { return data_->spectrum.max; }
  Index nonzeros() const noexcept { return data_->nnz; }
  bool is_sparse() const noexcept { return data_->sparse; }

  /// sum_j A_ij y_j.
  double row_dot(Index i, const Vector& y) const {
    const Data& d = *data_;
    if (d.sparse) {
      double s = 0.0;
      for (std::size_t k = d.row_ptr[i]; k < d.row_ptr[i + 1]; ++k) {
        s += d.entries[k].value * y(d.entries[k].col);
      }
      return s;
    }
    // Column i equals row i and is contiguous.
    return d.a.col(i).dot(y);
  }

  Vector apply(const Vector& y) const {
    Vector out(size());
    apply_into(*data_, y, out);
    return out;
  }

 private:
  struct Data {
    Matrix a;
    double norm2 = 0.0;
    double norm_inf = 0.0;
    double frob_sq = 0.0;
    SpectrumBounds spectrum;
    Index nnz = 0;
    bool sparse = false;
    std::vector<std::size_t> row_ptr;
    std::vector<Entry> entries;
  };

  explicit InteractionMatrix(std::shared_ptr<const Data> d) : data_(std::move(d)) {}

  static void apply_into(const Data& d, const Vector& y, Vector& out) {
    if (y.size() != d.a.rows()) throw DimensionError("InteractionMatrix: vector size mismatch");
    if (d.sparse) {
      const Index n = d.a.rows();
      for (Index i = 0; i < n; ++i) {
        double s = 0.0;
        for (std::size_t k = d.row_ptr[i]; k < d.row_ptr[i + 1]; ++k) {
          s += d.entries[k].value * y(d.entries[k].col);
        }
        out(i) = s;
      }
    } else {
      out.noalias() = d.a * y;
    }
  }

  static InteractionMatrix finish(Matrix&& a) {
    auto d = std::make_shared<Data>();
    d->a = std::move(a);
    const Index n = d->a.rows();
    Index nnz = 0;
    double frob = 0.0;
    double inf = 0.0;
    for (Index j = 0; j < n; ++j) {
      double col_abs = 0.0;
      for (Index i = 0; i < n; ++i) {
        const double v = d->a(i, j);
        if (v != 0.0) {
          ++nnz;
          col_abs += std::abs(v);
          frob += v * v;
        }
      }
      inf = std::max(inf, col_abs);
    }
    d->nnz = nnz;
    d->frob_sq = frob;
    d->norm_inf = inf;
    d->sparse = n > 0 && nnz <= (n * n) / 8;
    if (d->sparse) {
      d->row_ptr.assign(static_cast<std::size_t>(n) + 1, 0);
      d->entries.reserve(static_cast<std::size_t>(nnz));
      for (Index i = 0; i < n; ++i) {
        for (Index j = 0; j < n; ++j) {
          const double v = d->a(j, i);
          if (v != 0.0) d->entries.push_back({j, v});
        }
        d->row_ptr[i + 1] = d->entries.size();
      }
    }
    if (n <= 300) {
      d->spectrum = extreme_eigenvalues(d->a);
    } else {
      const Data& ref = *d;
      d->spectrum = lanczos_extremes(n, [&ref](const Vector& x, Vector& y) {
        apply_into(ref, x, y);
      });
    }
    d->norm2 = std::max(std::abs(d->spectrum.min), std::abs(d->spectrum.max));
    return InteractionMatrix(std::shared_ptr<const Data>(std::move(d)));
  }

  std::shared_ptr<const Data> data_;
};

/// Feature matrix X (n x d) plus the known diagonal D of the linear model.
class RegressionDesign {
 public:
  RegressionDesign() = default;
  explicit RegressionDesign(Matrix x) : RegressionDesign(x, Vector::Ones(x.rows())) {}

  RegressionDesign(Matrix x, Vector d_diag) : x_(std::move(x)), d_diag_(std::move(d_diag)) {
    if (x_.cols() < 1) throw DimensionError("RegressionDesign: need at least one feature");
    if (x_.rows() <= x_.cols()) {
      throw DimensionError("RegressionDesign: need n > d, got n=" + std::to_string(x_.rows()) +
                           " d=" + std::to_string(x_.cols()));
    }
    if (d_diag_.size() != x_.rows()) {
      throw DimensionError("RegressionDesign: D has " + std::to_string(d_diag_.size()) +
                           " entries, expected " + std::to_string(x_.rows()));
    }
    if (!x_.allFinite()) throw Error("RegressionDesign: non-finite feature");
    for (Index i = 0; i < d_diag_.size(); ++i) {
      if (!(d_diag_(i) > 0.0) || !std::isfinite(d_diag_(i))) {
        throw Error("RegressionDesign: D entries must be positive and finite (entry " +
                    std::to_string(i) + ")");
      }
    }
  }

  const Matrix& x() const noexcept { return x_; }
  const Vector& d_diag() const noexcept { return d_diag_; }
  Index n() const noexcept { return x_.rows(); }
  Index d() const noexcept { return x_.cols(); }

  /// Q = X^T X / n.
  Matrix covariance() const {
    return (x_.transpose() * x_) / static_cast<double>(x_.rows());
  }

  double max_abs_feature() const { return x_.size() ? x_.cwiseAbs().maxCoeff() : 0.0; }

 private:
  Matrix x_;
  Vector d_diag_;
};

/// Feasible set: [-theta_bound, theta_bound]^d x [-beta_bound, beta_bound],
/// extended by [-beta_bound*theta_bound, beta_bound*theta_bound]^d for kappa in
/// the linear model.
struct ParameterBox {
  double theta_bound = 1.0;
  double beta_bound = 1.0;

  void validate() const {
    if (!(theta_bound > 0.0) || !(beta_bound > 0.0) || !std::isfinite(theta_bound) ||
        !std::isfinite(beta_bound)) {
      throw Error("ParameterBox: bounds must be positive and finite");
    }
  }

  Vector logistic_upper(Index d) const {
    Vector u(d + 1);
    u.head(d).setConstant(theta_bound);
    u(d) = beta_bound;
    return u;
  }
  Vector logistic_lower(Index d) const { return -logistic_upper(d); }

  Vector linear_upper(Index d) const {
    Vector u(2 * d + 1);
    u.head(d).setConstant(theta_bound);
    u(d) = beta_bound;
    u.tail(d).setConstant(theta_bound * beta_bound);
    return u;
  }
  Vector linear_lower(Index d) const { return -linear_upper(d); }
};

struct LogisticParams {
  Vector theta;
  double beta = 0.0;

  /// Packed as (theta_1..theta_d, beta).
  Vector pack() const {
    Vector v(theta.size() + 1);
    v.head(theta.size()) = theta;
    v(theta.size()) = beta;
    return v;
  }
  static LogisticParams unpack(const Vector& v) {
    if (v.size() < 2) throw DimensionError("LogisticParams: packed vector too short");
    const Index d = v.size() - 1;
    return {v.head(d), v(d)};
  }
  bool inside(const ParameterBox& box) const {
    return theta.cwiseAbs().maxCoeff() <= box.theta_bound && std::abs(beta) <= box.beta_bound;
  }
};

/// (theta, beta, kappa); at the data-generating truth kappa = beta * theta, but
/// fitted values need not satisfy that.
struct LinearParams {
  Vector theta;
  double beta = 0.0;
  Vector kappa;

  static LinearParams from_truth(const Vector& theta, double beta) {
    return {theta, beta, beta * theta};
  }

  /// Packed as (theta_1..theta_d, beta, kappa_1..kappa_d).
  Vector pack() const {
    const Index d = theta.size();
    if (kappa.size() != d) throw DimensionError("LinearParams: theta/kappa size mismatch");
    Vector v(2 * d + 1);
    v.head(d) = theta;
    v(d) = beta;
    v.tail(d) = kappa;
    return v;
  }
  static LinearParams unpack(const Vector& v) {
    if (v.size() < 3 || v.size() % 2 == 0) {
      throw DimensionError("LinearParams: packed vector must have odd length >= 3");
    }
    const Index d = (v.size() - 1) / 2;
    return {v.head(d), v(d), v.tail(d)};
  }
};

enum class ModelKind { kLogistic, kLinear };

inline std::string_view to_string(ModelKind k) noexcept {
  return k == ModelKind::kLogistic ? "logistic" : "linear";
}

inline ModelKind parse_model_kind(std::string_view s) {
  if (s == "logistic") return ModelKind::kLogistic;
  if (s == "linear") return ModelKind::kLinear;
  throw Error("unknown model kind '" + std::string(s) + "' (expected logistic or linear)");
}

/// One observed response vector together with its design and interaction matrix.
class Dataset {
 public:
  static Dataset logistic(RegressionDesign design, InteractionMatrix a, Vector y) {
    for (Index i = 0; i < y.size(); ++i) {
      if (y(i) != 1.0 && y(i) != -1.0) {
        throw Error("Dataset: logistic response " + std::to_string(i) + " is not +-1");
      }
    }
    return Dataset(ModelKind::kLogistic, std::move(design), std::move(a), std::move(y));
  }

  static Dataset linear(RegressionDesign design, InteractionMatrix a, Vector y) {
    if (!y.allFinite()) throw Error("Dataset: non-finite response");
    return Dataset(ModelKind::kLinear, std::move(design), std::move(a), std::move(y));
  }

  ModelKind kind() const noexcept { return kind_; }
  const RegressionDesign& design() const noexcept { return design_; }
  const InteractionMatrix& interaction() const noexcept { return a_; }
  const Vector& y() const noexcept { return y_; }
  /// m_i(y) = sum_j A_ij y_j.
  const Vector& magnetizations() const noexcept { return m_; }
  Index n() const noexcept { return design_.n(); }
  Index d() const noexcept { return design_.d(); }

 private:
  Dataset(ModelKind kind, RegressionDesign design, InteractionMatrix a, Vector y)
      : kind_(kind), design_(std::move(design)), a_(std::move(a)), y_(std::move(y)) {
    if (a_.size() != design_.n() || y_.size() != design_.n()) {
      throw DimensionError("Dataset: n mismatch (design " + std::to_string(design_.n()) +
                           ", interaction " + std::to_string(a_.size()) + ", response " +
                           std::to_string(y_.size()) + ")");
    }
    m_ = a_.apply(y_);
  }

  ModelKind kind_;
  RegressionDesign design_;
  InteractionMatrix a_;
  Vector y_;
  Vector m_;
};

struct QuadraticMoments {
  double mean = 0.0;
  double variance = 0.0;
};

/// Mean and variance of f(z) = z^T A z + b^T z + c for z ~ N(mu, sigma):
///   E f = tr(A S) + f(mu)
///   V f = 2 tr(A S A S) + 4 mu^T A S A mu + 4 b^T S A mu + b^T S b
/// A is symmetrized first (z^T A z only sees its symmetric part).
inline QuadraticMoments quadratic_gaussian_moments(const Matrix& a, const Vector& b, double c,
                                                   const Vector& mu, const Matrix& sigma) {
  const Index n = mu.size();
  if (a.rows() != n || a.cols() != n || b.size() != n || sigma.rows() != n ||
      sigma.cols() != n) {
    throw DimensionError("quadratic_gaussian_moments: inconsistent dimensions");
  }
  const double scale = n > 0 ? std::max(1.0, sigma.cwiseAbs().maxCoeff()) : 1.0;
  if (n > 0 && (sigma - sigma.transpose()).cwiseAbs().maxCoeff() > 1e-12 * scale) {
    throw Error("quadratic_gaussian_moments: covariance is not symmetric");
  }
  Eigen::LDLT<Matrix> ldlt(sigma);
  if (ldlt.info() != Eigen::Success ||
      (n > 0 && ldlt.vectorD().minCoeff() < -1e-12 * scale)) {
    throw NotPositiveDefinite("quadratic_gaussian_moments: covariance is not PSD");
  }
  const Matrix as = 0.5 * (a + a.transpose());
  const Matrix a_s = as * sigma;
  const Vector a_mu = as * mu;
  QuadraticMoments out;
  out.mean = a_s.trace() + mu.dot(a_mu) + b.dot(mu) + c;
  out.variance = 2.0 * (a_s * a_s).trace() + 4.0 * a_mu.dot(sigma * a_mu) +
                 4.0 * b.dot(sigma * a_mu) + b.dot(sigma * b);
  return out;
}

}  // namespace netreg
