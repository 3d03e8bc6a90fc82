#pragma once

#include <cmath>
#include <cstdint>
#include <string>
#include <vector>

#include "netreg/error.hpp"
#include "netreg/linalg.hpp"
#include "netreg/model_core.hpp"
#include "netreg/rng.hpp"

namespace netreg {

namespace detail {

inline void check_logistic_inputs(const LogisticParams& p, const RegressionDesign& design,
                                  const InteractionMatrix& a) {
  if (p.theta.size() != design.d()) {
    throw DimensionError("logistic model: theta has " + std::to_string(p.theta.size()) +
                         " entries, design has d=" + std::to_string(design.d()));
  }
  if (a.size() != design.n()) throw DimensionError("logistic model: n mismatch");
}

}  // namespace detail

/// Pr[y_i = sign] for a unit whose local field is `field`, i.e.
/// 1 / (1 + exp(-2 * field * sign)). The two signs always sum to exactly 1:
/// the smaller probability is computed directly and the larger as its complement.
inline double logistic_sign_probability(double field, double sign) noexcept {
  const double z = 2.0 * field * sign;
  const double e = std::exp(-std::abs(z));
  const double small = e / (1.0 + e);
  return z >= 0.0 ? 1.0 - small : small;
}

/// Pr[y_i = sign | y_{-i}] with field theta^T x_i + beta * sum_j A_ij y_j.
inline double logistic_conditional(Index i, const Vector& y, const LogisticParams& p,
                                   const RegressionDesign& design, const InteractionMatrix& a,
                                   double sign = 1.0) {
  detail::check_logistic_inputs(p, design, a);
  if (y.size() != design.n()) throw DimensionError("logistic_conditional: y size mismatch");
  if (i < 0 || i >= design.n()) throw DimensionError("logistic_conditional: index out of range");
  const double field = design.x().row(i).dot(p.theta) + p.beta * a.row_dot(i, y);
  return logistic_sign_probability(field, sign);
}

/// Exact law of the spin vector, with weights
///   exp(sum_i (theta^T x_i) s_i + beta * sum_{i<j} A_ij s_i s_j).
/// Configuration k has s_i = +1 when bit i of k is set and -1 otherwise.
struct IsingDistribution {
  std::vector<double> probs;
  double log_z = 0.0;
  Index n = 0;

  Vector config(std::uint64_t k) const {
    Vector s(n);
    for (Index i = 0; i < n; ++i) s(i) = ((k >> i) & 1U) ? 1.0 : -1.0;
    return s;
  }

  /// E[s_i] for every site.
  Vector marginal_means() const {
    Vector m = Vector::Zero(n);
    for (std::size_t k = 0; k < probs.size(); ++k) {
      for (Index i = 0; i < n; ++i) m(i) += ((k >> i) & 1U) ? probs[k] : -probs[k];
    }
    return m;
  }
};

inline constexpr Index kMaxExactSpins = 20;

inline IsingDistribution ising_exact_distribution(const LogisticParams& p,
                                                  const RegressionDesign& design,
                                                  const InteractionMatrix& a) {
  detail::check_logistic_inputs(p, design, a);
  const Index n = design.n();
  if (n > kMaxExactSpins) {
    throw Error("ising_exact_distribution: n=" + std::to_string(n) + " exceeds the limit of " +
                std::to_string(kMaxExactSpins) + " spins");
  }
  const Vector h = design.x() * p.theta;
  const Matrix& am = a.matrix();
  const std::uint64_t count = std::uint64_t{1} << n;

  // Walk the configurations in Gray-code order so each step flips one spin.
  std::vector<double> logw(count);
  Vector s = Vector::Constant(n, -1.0);
  Vector m = am * s;
  double energy = h.dot(s) + 0.5 * p.beta * s.dot(m);
  std::uint64_t code = 0;
  logw[0] = energy;
  for (std::uint64_t t = 1; t < count; ++t) {
    const Index i = static_cast<Index>(__builtin_ctzll(t));
    energy -= 2.0 * s(i) * (h(i) + p.beta * m(i));
    s(i) = -s(i);
    m += (2.0 * s(i)) * am.col(i);
    code ^= std::uint64_t{1} << i;
    logw[code] = energy;
  }
  double top = logw[0];
  for (double v : logw) top = std::max(top, v);
  double sum = 0.0;
  for (double v : logw) sum += std::exp(v - top);

  IsingDistribution out;
  out.n = n;
  out.log_z = top + std::log(sum);
  out.probs.resize(count);
  for (std::uint64_t k = 0; k < count; ++k) out.probs[k] = std::exp(logw[k] - out.log_z);
  return out;
}

struct GibbsConfig {
  int burn_in = 200;     // sweeps before the first retained sample
  int n_samples = 1;
  int thinning = 5;      // sweeps between retained samples
  std::uint64_t seed = 0;
};

/// Systematic-scan Gibbs sampler for the logistic (Ising) model. The chain
/// starts from independent fair coin flips.
inline std::vector<Vector> ising_gibbs_sample(const LogisticParams& p,
                                              const RegressionDesign& design,
                                              const InteractionMatrix& a,
                                              const GibbsConfig& cfg) {
  detail::check_logistic_inputs(p, design, a);
  if (cfg.burn_in < 0 || cfg.n_samples < 0 || cfg.thinning < 1) {
    throw Error("ising_gibbs_sample: need burn_in >= 0, n_samples >= 0, thinning >= 1");
  }
  const Index n = design.n();
  const Vector h = design.x() * p.theta;
  CounterRng rng(cfg.seed, 0x61bb5ULL);
  Vector y(n);
  for (Index i = 0; i < n; ++i) y(i) = rng.uniform() < 0.5 ? 1.0 : -1.0;

  auto sweep = [&]() {
    for (Index i = 0; i < n; ++i) {
      const double field = h(i) + p.beta * a.row_dot(i, y);
      y(i) = rng.uniform() < logistic_sign_probability(field, 1.0) ? 1.0 : -1.0;
    }
  };
  for (int s = 0; s < cfg.burn_in; ++s) sweep();
  std::vector<Vector> out;
  out.reserve(static_cast<std::size_t>(cfg.n_samples));
  for (int k = 0; k < cfg.n_samples; ++k) {
    if (k > 0) {
      for (int s = 0; s < cfg.thinning; ++s) sweep();
    }
    out.push_back(y);
  }
  return out;
}

struct ConditionalMoments {
  double mean = 0.0;
  double variance = 0.0;
};

/// Law of y_i given y_{-i} in the linear model with precision beta*A + D:
/// mean theta^T x_i - (beta / D_ii) sum_{j != i} A_ij (y_j - theta^T x_j), variance 1 / D_ii.
inline ConditionalMoments gaussian_conditional(Index i, const Vector& y, const Vector& theta,
                                               double beta, const RegressionDesign& design,
                                               const InteractionMatrix& a) {
  if (theta.size() != design.d() || y.size() != design.n() || a.size() != design.n()) {
    throw DimensionError("gaussian_conditional: dimension mismatch");
  }
  if (i < 0 || i >= design.n()) throw DimensionError("gaussian_conditional: index out of range");
  const Vector resid = y - design.x() * theta;
  const double dii = design.d_diag()(i);
  return {design.x().row(i).dot(theta) - beta / dii * a.row_dot(i, resid), 1.0 / dii};
}

/// Dense precision matrix beta*A + D.
inline Matrix precision_matrix(double beta, const RegressionDesign& design,
                               const InteractionMatrix& a) {
  Matrix p = beta * a.matrix();
  p.diagonal() += design.d_diag();
  return p;
}

/// Exact draws y = X theta + L^{-T} w with L L^T = beta*A + D and w ~ N(0, I).
inline std::vector<Vector> gaussian_sample(const Vector& theta, double beta,
                                           const RegressionDesign& design,
                                           const InteractionMatrix& a, int n_samples,
                                           std::uint64_t seed) {
  if (theta.size() != design.d() || a.size() != design.n()) {
    throw DimensionError("gaussian_sample: dimension mismatch");
  }
  if (n_samples < 0) throw Error("gaussian_sample: n_samples must be >= 0");
  Eigen::LLT<Matrix> llt(precision_matrix(beta, design, a));
  if (llt.info() != Eigen::Success) {
    throw NotPositiveDefinite("gaussian_sample: beta*A + D is not positive definite at beta=" +
                              std::to_string(beta));
  }
  const Vector mean = design.x() * theta;
  const Index n = design.n();
  CounterRng rng(seed, 0x6a55ULL);
  std::vector<Vector> out;
  out.reserve(static_cast<std::size_t>(n_samples));
  Vector w(n);
  for (int s = 0; s < n_samples; ++s) {
    for (Index i = 0; i < n; ++i) w(i) = rng.normal();
    llt.matrixU().solveInPlace(w);
    out.push_back(mean + w);
  }
  return out;
}

}  // namespace netreg
