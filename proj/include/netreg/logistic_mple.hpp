#pragma once

#include <cmath>
#include <optional>
#include <string>

#include "netreg/error.hpp"
#include "netreg/linalg.hpp"
#include "netreg/model_core.hpp"
#include "netreg/optimize.hpp"

namespace netreg {

namespace detail {

inline void check_logistic_dataset(const LogisticParams& p, const Dataset& data) {
  if (data.kind() != ModelKind::kLogistic) {
    throw Error("logistic pseudolikelihood needs a logistic dataset");
  }
  if (p.theta.size() != data.d()) {
    throw DimensionError("logistic pseudolikelihood: theta has " +
                         std::to_string(p.theta.size()) + " entries, data has d=" +
                         std::to_string(data.d()));
  }
}

}  // namespace detail

/// Normalized log-pseudolikelihood
///   -ln 2 + (1/n) sum_i [y_i beta m_i + y_i theta^T x_i - ln cosh(beta m_i + theta^T x_i)].
inline double lpl_value(const LogisticParams& p, const Dataset& data) {
  detail::check_logistic_dataset(p, data);
  const Vector& y = data.y();
  const Vector& m = data.magnetizations();
  const Vector t = data.design().x() * p.theta + p.beta * m;
  double s = 0.0;
  for (Index i = 0; i < data.n(); ++i) s += y(i) * t(i) - log_cosh(t(i));
  return -M_LN2 + s / static_cast<double>(data.n());
}

/// Gradient in the packed order (theta_1..theta_d, beta).
inline Vector lpl_gradient(const LogisticParams& p, const Dataset& data) {
  detail::check_logistic_dataset(p, data);
  const Matrix& x = data.design().x();
  const Vector& m = data.magnetizations();
  const Vector t = x * p.theta + p.beta * m;
  const Vector r = data.y() - t.unaryExpr([](double v) { return std::tanh(v); });
  const double inv_n = 1.0 / static_cast<double>(data.n());
  Vector g(data.d() + 1);
  g.head(data.d()) = (x.transpose() * r) * inv_n;
  g(data.d()) = m.dot(r) * inv_n;
  return g;
}

/// H = -(1/n) sum_i sech^2(beta m_i + theta^T x_i) X_i X_i^T with X_i = (x_i, m_i).
inline Matrix lpl_hessian(const LogisticParams& p, const Dataset& data) {
  detail::check_logistic_dataset(p, data);
  const Index n = data.n();
  const Index d = data.d();
  Matrix xa(n, d + 1);
  xa.leftCols(d) = data.design().x();
  xa.col(d) = data.magnetizations();
  const Vector t = data.design().x() * p.theta + p.beta * data.magnetizations();
  const Vector w = t.unaryExpr([](double v) { return sech_sq(v); });
  Matrix h = -(xa.transpose() * w.asDiagonal() * xa) / static_cast<double>(n);
  return 0.5 * (h + h.transpose());
}

enum class LogisticStepRule {
  /// 1/L with L = max(d*Theta^2 + 1, lambda_max(n^{-1} sum X_i X_i^T)); the
  /// second term bounds the curvature for any data, the first is the nominal
  /// smoothness constant when features are bounded by Theta.
  kSmoothness,
  /// 1/sqrt(d*Theta^2 + 1).
  kSqrtSmoothness,
};

struct LogisticFitOptions {
  LogisticStepRule step_rule = LogisticStepRule::kSmoothness;
  std::optional<double> step_size;  // overrides step_rule
  std::optional<double> tolerance;  // default 1/sqrt(n)
  long max_iters = 100000;
  bool record_trace = false;
};

struct LogisticFitDiagnostics {
  long iterations = 0;
  double stationarity = 0.0;
  double gradient_norm = 0.0;
  double step_size = 0.0;
  double tolerance = 0.0;
  double lpl = 0.0;
  PgdTrace trace;
};

struct LogisticFit {
  LogisticParams params;
  LogisticFitDiagnostics diagnostics;
};

/// Step size used by fit_logistic_mple for the given data, box and options.
inline double logistic_step_size(const Dataset& data, const ParameterBox& box,
                                 const LogisticFitOptions& opt) {
  if (opt.step_size) return *opt.step_size;
  const double d = static_cast<double>(data.d());
  const double nominal = d * box.theta_bound * box.theta_bound + 1.0;
  if (opt.step_rule == LogisticStepRule::kSqrtSmoothness) return 1.0 / std::sqrt(nominal);
  const Index n = data.n();
  Matrix xa(n, data.d() + 1);
  xa.leftCols(data.d()) = data.design().x();
  xa.col(data.d()) = data.magnetizations();
  const Matrix g = (xa.transpose() * xa) / static_cast<double>(n);
  const double data_bound = symmetric_eigenvalues(g)(data.d());
  return 1.0 / std::max(nominal, data_bound);
}

/// Maximum pseudo-likelihood estimate by projected gradient ascent on the box,
/// started from theta = 0, beta = 0.
inline LogisticFit fit_logistic_mple(const Dataset& data, const ParameterBox& box,
                                     const LogisticFitOptions& opt = {}) {
  box.validate();
  if (data.kind() != ModelKind::kLogistic) throw Error("fit_logistic_mple: dataset is not logistic");
  const Index d = data.d();
  PgdConfig cfg;
  cfg.step_size = logistic_step_size(data, box, opt);
  cfg.tolerance = opt.tolerance.value_or(1.0 / std::sqrt(static_cast<double>(data.n())));
  cfg.max_iters = opt.max_iters;
  cfg.record_trace = opt.record_trace;

  auto objective = [&data](const Vector& v, Vector& grad) {
    const LogisticParams p = LogisticParams::unpack(v);
    grad = -lpl_gradient(p, data);
    return -lpl_value(p, data);
  };
  const PgdResult r = pgd_minimize(objective, Vector::Zero(d + 1), box.logistic_lower(d),
                                   box.logistic_upper(d), cfg);
  LogisticFit fit;
  fit.params = LogisticParams::unpack(r.x);
  fit.diagnostics.iterations = r.iterations;
  fit.diagnostics.stationarity = r.stationarity;
  fit.diagnostics.gradient_norm = r.gradient.norm();
  fit.diagnostics.step_size = cfg.step_size;
  fit.diagnostics.tolerance = cfg.tolerance;
  fit.diagnostics.lpl = -r.value;
  fit.diagnostics.trace = r.trace;
  return fit;
}

}  // namespace netreg
