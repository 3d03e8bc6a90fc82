#pragma once

#include <cmath>
#include <limits>
#include <string>
#include <utility>
#include <vector>

#include "netreg/error.hpp"
#include "netreg/linalg.hpp"

namespace netreg {

struct PgdConfig {
  double step_size = 1.0;
  double tolerance = 1e-6;
  long max_iters = 100000;
  bool record_trace = false;

  void validate() const {
    if (!(step_size > 0.0) || !std::isfinite(step_size)) {
      throw Error("PgdConfig: step_size must be positive and finite");
    }
    if (!(tolerance > 0.0)) throw Error("PgdConfig: tolerance must be positive");
    if (max_iters < 1) throw Error("PgdConfig: max_iters must be >= 1");
  }
};

/// Componentwise clamp onto [lower, upper], which is the Euclidean projection
/// onto that box.
inline Vector project_box(const Vector& point, const Vector& lower, const Vector& upper) {
  if (point.size() != lower.size() || point.size() != upper.size()) {
    throw DimensionError("project_box: dimension mismatch");
  }
  for (Index k = 0; k < point.size(); ++k) {
    if (!(lower(k) <= upper(k))) {
      throw Error("project_box: lower bound exceeds upper bound at coordinate " +
                  std::to_string(k));
    }
  }
  return point.cwiseMax(lower).cwiseMin(upper);
}

struct PgdTrace {
  std::vector<Vector> iterates;
  std::vector<double> values;
  std::vector<double> stationarity;
};

struct PgdResult {
  Vector x;
  double value = 0.0;
  Vector gradient;
  /// ||x - P(x - step * grad)|| / step at x. Equals ||grad|| whenever the step
  /// stays inside the box, and vanishes exactly at the constrained minimizer.
  double stationarity = std::numeric_limits<double>::infinity();
  long iterations = 0;
  PgdTrace trace;
};

class PgdNotConverged : public Error {
 public:
  PgdNotConverged(const std::string& what, PgdResult best)
      : Error(what), best_(std::move(best)) {}
  /// The iterate with the smallest stationarity measure seen.
  const PgdResult& best() const noexcept { return best_; }

 private:
  PgdResult best_;
};

/// Fixed-step projected gradient descent on a box.
///
/// `f(x, grad)` must return the objective at x and write its gradient into
/// `grad`. Stops at the first iterate whose projected-gradient norm is at most
/// `cfg.tolerance`; throws PgdNotConverged after `cfg.max_iters` steps.
template <class Objective>
PgdResult pgd_minimize(Objective&& f, const Vector& init, const Vector& lower,
                       const Vector& upper, const PgdConfig& cfg) {
  cfg.validate();
  Vector x = project_box(init, lower, upper);
  const double eta = cfg.step_size;
  PgdResult best;
  PgdTrace trace;
  Vector grad(x.size());
  for (long t = 0;; ++t) {
    const double value = f(static_cast<const Vector&>(x), grad);
    if (grad.size() != x.size()) throw DimensionError("pgd_minimize: gradient size mismatch");
    Vector next = (x - eta * grad).cwiseMax(lower).cwiseMin(upper);
    const double stat = (x - next).norm() / eta;
    if (!std::isfinite(value) || !std::isfinite(stat)) {
      throw Error("pgd_minimize: objective or gradient is not finite at iteration " +
                  std::to_string(t));
    }
    if (cfg.record_trace) {
      trace.iterates.push_back(x);
      trace.values.push_back(value);
      trace.stationarity.push_back(stat);
    }
    if (stat < best.stationarity) {
      best.x = x;
      best.value = value;
      best.gradient = grad;
      best.stationarity = stat;
      best.iterations = t;
    }
    if (stat <= cfg.tolerance) {
      PgdResult out{x, value, grad, stat, t, std::move(trace)};
      return out;
    }
    if (t >= cfg.max_iters) {
      best.trace = std::move(trace);
      throw PgdNotConverged("pgd_minimize: no convergence within " +
                                std::to_string(cfg.max_iters) + " iterations (best " +
                                std::to_string(best.stationarity) + ", tolerance " +
                                std::to_string(cfg.tolerance) + ")",
                            std::move(best));
    }
    x = std::move(next);
  }
}

}  // namespace netreg
