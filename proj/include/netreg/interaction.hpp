#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <optional>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "netreg/error.hpp"
#include "netreg/linalg.hpp"
#include "netreg/model_core.hpp"
#include "netreg/rng.hpp"

namespace netreg {

// ---------------------------------------------------------------------------
// Builders

/// Random `degree`-regular graph on n vertices, adjacency scaled by 1/degree.
///
/// Stubs are paired uniformly at random one pair at a time; a pair that would
/// create a loop or a repeated edge is redrawn. If the remaining stubs admit no
/// valid pair the attempt is restarted, up to `max_restarts` times.
inline InteractionMatrix build_bounded_degree(Index n, Index degree, std::uint64_t seed,
                                              int max_restarts = 100) {
  if (n < 2) throw Error("build_bounded_degree: need n >= 2");
  if (degree < 1 || degree >= n) {
    throw Error("build_bounded_degree: need 1 <= degree < n, got degree=" +
                std::to_string(degree) + " n=" + std::to_string(n));
  }
  if ((n * degree) % 2 != 0) {
    throw Error("build_bounded_degree: n*degree must be even, got " + std::to_string(n) +
                "*" + std::to_string(degree));
  }
  CounterRng rng(seed, 0xb0d3dULL);
  const std::size_t total = static_cast<std::size_t>(n * degree);
  std::vector<std::vector<Index>> adj(static_cast<std::size_t>(n));
  std::vector<Index> stubs;

  auto adjacent = [&adj](Index u, Index v) {
    const auto& nb = adj[static_cast<std::size_t>(u)];
    return std::find(nb.begin(), nb.end(), v) != nb.end();
  };
  auto any_valid_pair = [&](const std::vector<Index>& s) {
    for (std::size_t p = 0; p < s.size(); ++p) {
      for (std::size_t q = p + 1; q < s.size(); ++q) {
        if (s[p] != s[q] && !adjacent(s[p], s[q])) return true;
      }
    }
    return false;
  };

  for (int attempt = 0; attempt <= max_restarts; ++attempt) {
    for (auto& nb : adj) nb.clear();
    stubs.clear();
    stubs.reserve(total);
    for (Index v = 0; v < n; ++v) {
      for (Index k = 0; k < degree; ++k) stubs.push_back(v);
    }
    bool stuck = false;
    std::size_t failures = 0;
    while (!stubs.empty()) {
      const std::size_t m = stubs.size();
      const std::size_t p = rng.below(m);
      std::size_t q = rng.below(m - 1);
      if (q >= p) ++q;
      const Index u = stubs[p];
      const Index v = stubs[q];
      if (u == v || adjacent(u, v)) {
        if (++failures >= 64 + 4 * m) {
          if (!any_valid_pair(stubs)) {
            stuck = true;
            break;
          }
          failures = 0;
        }
        continue;
      }
      failures = 0;
      adj[static_cast<std::size_t>(u)].push_back(v);
      adj[static_cast<std::size_t>(v)].push_back(u);
      // Remove the higher slot first so the lower index stays valid.
      const std::size_t hi = std::max(p, q);
      const std::size_t lo = std::min(p, q);
      stubs[hi] = stubs.back();
      stubs.pop_back();
      stubs[lo] = stubs.back();
      stubs.pop_back();
    }
    if (stuck) continue;
    std::vector<InteractionMatrix::Edge> edges;
    edges.reserve(total / 2);
    const double w = 1.0 / static_cast<double>(degree);
    for (Index u = 0; u < n; ++u) {
      for (Index v : adj[static_cast<std::size_t>(u)]) {
        if (u < v) edges.push_back({u, v, w});
      }
    }
    return InteractionMatrix::from_edges(n, edges);
  }
  throw Error("build_bounded_degree: no simple " + std::to_string(degree) +
              "-regular graph found after " + std::to_string(max_restarts) + " restarts");
}

/// Sherrington-Kirkpatrick couplings: A_ij = g_ij / sqrt(n), g_ij ~ N(0,1) for i < j.
inline InteractionMatrix build_sk(Index n, std::uint64_t seed) {
  if (n < 2) throw Error("build_sk: need n >= 2");
  CounterRng rng(seed, 0x5cULL);
  const double s = 1.0 / std::sqrt(static_cast<double>(n));
  Matrix upper = Matrix::Zero(n, n);
  for (Index j = 1; j < n; ++j) {
    for (Index i = 0; i < j; ++i) upper(i, j) = rng.normal() * s;
  }
  return InteractionMatrix::from_upper(upper);
}

/// Complete graph with every off-diagonal weight 1/n.
inline InteractionMatrix build_curie_weiss(Index n) {
  if (n < 2) throw Error("build_curie_weiss: need n >= 2");
  Matrix a = Matrix::Constant(n, n, 1.0 / static_cast<double>(n));
  a.diagonal().setZero();
  return InteractionMatrix::from_upper(a);
}

// ---------------------------------------------------------------------------
// Assumption validator

struct AssumptionCheck {
  std::string name;
  double value = 0.0;
  double threshold = 0.0;
  std::string relation;  // how value is compared to threshold, e.g. "<=", ">"
  bool passed = false;
};

/// A measured quantity that does not take part in the verdict.
struct AssumptionNote {
  std::string name;
  double value = 0.0;
};

struct AssumptionReport {
  ModelKind model_kind = ModelKind::kLogistic;
  std::vector<AssumptionCheck> checks;
  std::vector<AssumptionNote> notes;
  bool overall = true;

  const AssumptionCheck* find(std::string_view name) const {
    for (const auto& c : checks) {
      if (c.name == name) return &c;
    }
    return nullptr;
  }
};

inline nlohmann::json to_json(const AssumptionReport& r) {
  auto num = [](double v) -> nlohmann::json {
    if (std::isfinite(v)) return v;
    if (std::isnan(v)) return nullptr;
    return v > 0 ? "inf" : "-inf";
  };
  nlohmann::json checks = nlohmann::json::array();
  for (const auto& c : r.checks) {
    checks.push_back({{"name", c.name},
                      {"value", num(c.value)},
                      {"relation", c.relation},
                      {"threshold", num(c.threshold)},
                      {"passed", c.passed}});
  }
  nlohmann::json notes = nlohmann::json::object();
  for (const auto& n : r.notes) notes[n.name] = num(n.value);
  return {{"model", std::string(to_string(r.model_kind))},
          {"overall", r.overall},
          {"checks", std::move(checks)},
          {"notes", std::move(notes)}};
}

struct ValidatorOptions {
  double frob_c = 0.1;
  /// Smallest eigenvalue accepted as "positive" for Q and the residual matrix.
  double min_eig = 1e-9;
  /// Feature support bound M; when unset the observed max |x| is only reported.
  std::optional<double> feature_bound;
  int beta_grid = 21;
};

namespace detail {

inline void add_check(AssumptionReport& r, std::string name, double value, std::string rel,
                      double threshold) {
  bool ok = false;
  if (rel == "<=") ok = value <= threshold;
  else if (rel == ">=") ok = value >= threshold;
  else if (rel == ">") ok = value > threshold;
  else if (rel == "<") ok = value < threshold;
  else if (rel == "==") ok = value == threshold;
  r.checks.push_back({std::move(name), value, threshold, std::move(rel), ok});
}

inline double max_asymmetry(const Matrix& a) {
  return a.size() ? (a - a.transpose()).cwiseAbs().maxCoeff() : 0.0;
}

/// Extreme eigenvalues of beta*A + D.
inline SpectrumBounds shifted_spectrum(const InteractionMatrix& a, const Vector& d_diag,
                                       double beta) {
  const Index n = a.size();
  const bool constant_d =
      n > 0 && d_diag.maxCoeff() == d_diag.minCoeff();
  if (constant_d) {
    const double c = d_diag(0);
    const double lo = beta >= 0 ? a.min_eigenvalue() : a.max_eigenvalue();
    const double hi = beta >= 0 ? a.max_eigenvalue() : a.min_eigenvalue();
    return {beta * lo + c, beta * hi + c};
  }
  if (n <= 300) {
    Matrix p = beta * a.matrix();
    p.diagonal() += d_diag;
    return extreme_eigenvalues(p);
  }
  return lanczos_extremes(n, [&](const Vector& x, Vector& y) {
    y = beta * a.apply(x);
    y.array() += d_diag.array() * x.array();
  });
}

}  // namespace detail

/// Minimum eigenvalue of n^{-1} (AX)^T (I - DX (X^T D^2 X)^{-1} X^T D) (AX).
inline double linear_residual_min_eigenvalue(const InteractionMatrix& a,
                                             const RegressionDesign& design) {
  const Index d = design.d();
  Matrix ax(design.n(), d);
  for (Index k = 0; k < d; ++k) ax.col(k) = a.apply(design.x().col(k));
  const Matrix dx = design.d_diag().asDiagonal() * design.x();
  Eigen::HouseholderQR<Matrix> qr(dx);
  const Matrix q = qr.householderQ() * Matrix::Identity(design.n(), d);
  const Matrix resid = ax - q * (q.transpose() * ax);
  const Matrix m = (resid.transpose() * resid) / static_cast<double>(design.n());
  return symmetric_eigenvalues(m)(0);
}

/// Numerical check of the sufficient conditions for consistency of the chosen
/// estimator. Each condition is a pass/fail row; a non positive definite
/// beta*A + D shows up as a failed row rather than an exception.
inline AssumptionReport validate_assumptions(const InteractionMatrix& a,
                                             const RegressionDesign& design,
                                             const ParameterBox& box, ModelKind kind,
                                             const ValidatorOptions& opt = {}) {
  box.validate();
  if (a.size() != design.n()) {
    throw DimensionError("validate_assumptions: interaction is " + std::to_string(a.size()) +
                         "x" + std::to_string(a.size()) + " but design has n=" +
                         std::to_string(design.n()));
  }
  const double n = static_cast<double>(design.n());
  AssumptionReport r;
  r.model_kind = kind;

  detail::add_check(r, "symmetric", detail::max_asymmetry(a.matrix()), "==", 0.0);
  detail::add_check(r, "zero_diagonal",
                    a.size() ? a.matrix().diagonal().cwiseAbs().maxCoeff() : 0.0, "==", 0.0);
  if (kind == ModelKind::kLogistic) {
    detail::add_check(r, "norm_inf", a.norm_inf(), "<=", 1.0);
    r.notes.push_back({"norm2", a.norm2()});
  } else {
    detail::add_check(r, "norm2", a.norm2(), "<=", 1.0);
    r.notes.push_back({"norm_inf", a.norm_inf()});
  }
  detail::add_check(r, "frobenius_sq", a.frob_sq(), ">=", opt.frob_c * n);

  if (kind == ModelKind::kLogistic) {
    const Vector qev = symmetric_eigenvalues(design.covariance());
    detail::add_check(r, "q_min_eigenvalue", qev(0), ">", opt.min_eig);
    detail::add_check(r, "q_max_eigenvalue", qev(qev.size() - 1), "<",
                      std::numeric_limits<double>::infinity());
    const double m = design.max_abs_feature();
    detail::add_check(r, "feature_support", m, "<=",
                      opt.feature_bound.value_or(std::numeric_limits<double>::infinity()));
  } else {
    const int g = std::max(opt.beta_grid, 2);
    double rho_min = std::numeric_limits<double>::infinity();
    double rho_max = 0.0;
    double worst_beta = 0.0;
    double worst_eig = std::numeric_limits<double>::infinity();
    for (int k = 0; k < g; ++k) {
      const double beta =
          -box.beta_bound + 2.0 * box.beta_bound * static_cast<double>(k) / (g - 1);
      const SpectrumBounds s = detail::shifted_spectrum(a, design.d_diag(), beta);
      if (s.min < worst_eig) {
        worst_eig = s.min;
        worst_beta = beta;
      }
      if (s.min > 0.0) {
        rho_min = std::min(rho_min, 1.0 / s.max);
        rho_max = std::max(rho_max, 1.0 / s.min);
      }
    }
    detail::add_check(r, "precision_min_eigenvalue", worst_eig, ">", 0.0);
    r.notes.push_back({"precision_worst_beta", worst_beta});
    if (worst_eig > 0.0) {
      detail::add_check(r, "inverse_precision_min_eigenvalue", rho_min, ">", 0.0);
      detail::add_check(r, "inverse_precision_max_eigenvalue", rho_max, "<",
                        std::numeric_limits<double>::infinity());
    } else {
      detail::add_check(r, "inverse_precision_max_eigenvalue",
                        std::numeric_limits<double>::infinity(), "<",
                        std::numeric_limits<double>::infinity());
    }
    detail::add_check(r, "residual_min_eigenvalue", linear_residual_min_eigenvalue(a, design),
                      ">", opt.min_eig);
  }
  for (const auto& c : r.checks) r.overall = r.overall && c.passed;
  return r;
}

// ---------------------------------------------------------------------------
// Hat matrix and the index-selection procedure

/// F = I - X (X^T X)^{-1} X^T, the projector onto the complement of span(X).
struct HatMatrix {
  Matrix f;
};

namespace detail {

/// Orthonormal basis of span(X); throws if X^T X is numerically singular.
inline Matrix column_basis(const Matrix& x) {
  const Vector ev = symmetric_eigenvalues(x.transpose() * x);
  const double lo = ev(0);
  const double hi = ev(ev.size() - 1);
  if (!(lo > 0.0) || hi / lo >= 1e12) {
    throw Error("hat_matrix: X^T X is rank deficient (condition number " +
                std::to_string(lo > 0.0 ? hi / lo : std::numeric_limits<double>::infinity()) +
                ")");
  }
  Eigen::HouseholderQR<Matrix> qr(x);
  return qr.householderQ() * Matrix::Identity(x.rows(), x.cols());
}

}  // namespace detail

inline HatMatrix hat_matrix(const RegressionDesign& design) {
  const Matrix q = detail::column_basis(design.x());
  HatMatrix h;
  h.f = -q * q.transpose();
  h.f.diagonal().array() += 1.0;
  return h;
}

/// Greedy bijection h: repeatedly take the remaining row of largest l2 norm,
/// map it to the remaining column holding its largest |entry|, then delete that
/// row and column. Ties go to the lowest index.
inline std::vector<Index> index_selection(const Matrix& w) {
  if (w.rows() != w.cols()) throw DimensionError("index_selection: matrix must be square");
  const Index n = w.rows();
  std::vector<Index> h(static_cast<std::size_t>(n), -1);
  std::vector<char> row_active(static_cast<std::size_t>(n), 1);
  std::vector<char> col_active(static_cast<std::size_t>(n), 1);
  // Row norms over active columns, kept current as columns are removed.
  Vector norm_sq = w.rowwise().squaredNorm();
  for (Index t = 0; t < n; ++t) {
    Index i = -1;
    double best = -1.0;
    for (Index r = 0; r < n; ++r) {
      if (row_active[r] && norm_sq(r) > best) {
        best = norm_sq(r);
        i = r;
      }
    }
    Index j = -1;
    double big = -1.0;
    for (Index c = 0; c < n; ++c) {
      if (col_active[c] && std::abs(w(i, c)) > big) {
        big = std::abs(w(i, c));
        j = c;
      }
    }
    h[static_cast<std::size_t>(i)] = j;
    row_active[i] = 0;
    col_active[j] = 0;
    for (Index r = 0; r < n; ++r) {
      if (row_active[r]) norm_sq(r) = std::max(0.0, norm_sq(r) - w(r, j) * w(r, j));
    }
  }
  return h;
}

struct StrongConcavityReport {
  double fa_frob_sq = 0.0;
  double fa_norm2 = 0.0;
  double selected_sum_sq = 0.0;
  double a_frob_sq = 0.0;
  /// ||FA||_F^2 >= ||A||_F^2 - d - 1e-6.
  bool frobenius_bound_holds = true;
  std::vector<Index> selection;
};

/// Quantities behind the strong-concavity argument for the logistic objective,
/// evaluated on a concrete (A, X).
inline StrongConcavityReport strong_concavity_diagnostic(const InteractionMatrix& a,
                                                         const RegressionDesign& design) {
  if (a.size() != design.n()) {
    throw DimensionError("strong_concavity_diagnostic: n mismatch");
  }
  const Matrix q = detail::column_basis(design.x());
  const Matrix& am = a.matrix();
  Matrix fa = am - q * (q.transpose() * am);

  StrongConcavityReport r;
  r.a_frob_sq = a.frob_sq();
  r.fa_frob_sq = fa.squaredNorm();
  const Index n = fa.rows();
  if (n <= 300) {
    r.fa_norm2 = n ? Eigen::BDCSVD<Matrix>(fa).singularValues()(0) : 0.0;
  } else {
    const SpectrumBounds s = lanczos_extremes(n, [&fa](const Vector& x, Vector& y) {
      const Vector t = fa * x;
      y.noalias() = fa.transpose() * t;
    });
    r.fa_norm2 = std::sqrt(std::max(0.0, s.max));
  }
  r.selection = index_selection(fa);
  for (Index i = 0; i < n; ++i) {
    const double v = fa(i, r.selection[static_cast<std::size_t>(i)]);
    r.selected_sum_sq += v * v;
  }
  r.frobenius_bound_holds =
      r.fa_frob_sq >= r.a_frob_sq - static_cast<double>(design.d()) - 1e-6;
  return r;
}

}  // namespace netreg
