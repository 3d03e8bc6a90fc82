#include <gtest/gtest.h>

#include <cmath>

#include "netreg/logistic_mple.hpp"
#include "netreg/sampling.hpp"
#include "test_util.hpp"

using namespace netreg;
using netreg::testing::central_diff;

namespace {

Matrix uniform_features(Index n, Index d, double bound, std::uint64_t seed) {
  CounterRng rng(seed, 17);
  Matrix x(n, d);
  for (Index j = 0; j < d; ++j) {
    for (Index i = 0; i < n; ++i) x(i, j) = bound * (2.0 * rng.uniform() - 1.0);
  }
  return x;
}

Dataset random_dataset(Index n, Index d, std::uint64_t seed, double theta_bound = 1.0) {
  return Dataset::logistic(RegressionDesign(uniform_features(n, d, theta_bound, seed)),
                           netreg::testing::random_interaction(n, seed + 1000),
                           netreg::testing::random_spins(n, seed + 2000));
}

LogisticParams random_params(Index d, const ParameterBox& box, CounterRng& rng) {
  LogisticParams p;
  p.theta.resize(d);
  for (Index k = 0; k < d; ++k) p.theta(k) = box.theta_bound * (2.0 * rng.uniform() - 1.0);
  p.beta = box.beta_bound * (2.0 * rng.uniform() - 1.0);
  return p;
}

/// Sum of log conditional probabilities written as -log(1 + exp(-2 y t)), with
/// magnetizations recomputed from the dense matrix.
double reference_lpl(const Vector& theta, double beta, const Matrix& x, const Matrix& a,
                     const Vector& y) {
  const Index n = x.rows();
  double s = 0.0;
  for (Index i = 0; i < n; ++i) {
    double m = 0.0;
    for (Index j = 0; j < n; ++j) m += a(i, j) * y(j);
    double t = beta * m;
    for (Index k = 0; k < x.cols(); ++k) t += theta(k) * x(i, k);
    s -= std::log1p(std::exp(-2.0 * y(i) * t));
  }
  return s / static_cast<double>(n);
}

/// Newton's method for the +-1 logistic log-likelihood sum_i -log(1 + exp(-2 y_i x_i^T theta)).
Vector vanilla_logistic_mle(const Matrix& x, const Vector& y) {
  Vector theta = Vector::Zero(x.cols());
  for (int it = 0; it < 100; ++it) {
    Vector g = Vector::Zero(x.cols());
    Matrix h = Matrix::Zero(x.cols(), x.cols());
    for (Index i = 0; i < x.rows(); ++i) {
      const double t = x.row(i).dot(theta);
      const double p = 1.0 / (1.0 + std::exp(-2.0 * t));  // P(y = +1)
      g += x.row(i).transpose() * ((y(i) + 1.0) - 2.0 * p);
      h += 4.0 * p * (1.0 - p) * x.row(i).transpose() * x.row(i);
    }
    const Vector step = h.ldlt().solve(g);
    theta += step;
    if (step.norm() < 1e-14) break;
  }
  return theta;
}

}  // namespace

TEST(LplValue, ZeroParametersGiveMinusLn2) {
  const Dataset data = random_dataset(20, 3, 1);
  EXPECT_DOUBLE_EQ(lpl_value(LogisticParams{Vector::Zero(3), 0.0}, data), -std::log(2.0));
}

TEST(LplValue, ZeroFeaturesWithoutInteractionGiveMinusLn2) {
  const Dataset data = Dataset::logistic(RegressionDesign(Matrix::Zero(2, 1)),
                                         InteractionMatrix::zero(2), Vector::Ones(2));
  EXPECT_DOUBLE_EQ(lpl_value(LogisticParams{Vector::Constant(1, 0.7), 0.0}, data),
                   -std::log(2.0));
}

TEST(LplValue, PathGraphInstanceMatchesReference) {
  Matrix a = Matrix::Zero(3, 3);
  a(0, 1) = a(1, 0) = a(1, 2) = a(2, 1) = 1.0;
  const Matrix x = (Matrix(3, 1) << 1.0, -1.0, 0.5).finished();
  const Vector y = (Vector(3) << 1.0, -1.0, 1.0).finished();
  const Dataset data =
      Dataset::logistic(RegressionDesign(x), InteractionMatrix::from_symmetric(a), y);
  const Vector theta = Vector::Constant(1, 0.5);
  const double got = lpl_value(LogisticParams{theta, 0.2}, data);
  const double want = reference_lpl(theta, 0.2, x, a, y);
  EXPECT_NEAR(got, want, 1e-12 * std::abs(want));
}

TEST(LplValue, MatchesReferenceOnRandomInstances) {
  CounterRng rng(3);
  const ParameterBox box{2.0, 1.0};
  for (int s = 0; s < 20; ++s) {
    const Dataset data = random_dataset(40, 3, 100 + s);
    const LogisticParams p = random_params(3, box, rng);
    const double want =
        reference_lpl(p.theta, p.beta, data.design().x(), data.interaction().matrix(), data.y());
    EXPECT_NEAR(lpl_value(p, data), want, 1e-12 * std::abs(want));
  }
}

TEST(LplValue, StableForHugeArguments) {
  const Matrix x = Matrix::Constant(3, 1, 1e3);
  const Dataset data = Dataset::logistic(RegressionDesign(x), InteractionMatrix::zero(3),
                                         (Vector(3) << 1.0, -1.0, 1.0).finished());
  const double v = lpl_value(LogisticParams{Vector::Constant(1, 1.0), 0.0}, data);
  EXPECT_TRUE(std::isfinite(v));
  EXPECT_NEAR(v, -2.0 * 1e3 / 3.0, 1e-9);
}

TEST(LplGradient, TrivialExamples) {
  const Index n = 25;
  const Matrix x = netreg::testing::random_matrix(n, 2, 5);
  const Vector y = netreg::testing::random_spins(n, 6);
  const Dataset free_data = Dataset::logistic(RegressionDesign(x), InteractionMatrix::zero(n), y);
  const Vector g = lpl_gradient(LogisticParams{(Vector(2) << 0.3, -0.8).finished(), 0.4}, free_data);
  EXPECT_EQ(g(2), 0.0);

  const Dataset data = random_dataset(n, 2, 7);
  const Vector g0 = lpl_gradient(LogisticParams{Vector::Zero(2), 0.0}, data);
  const Vector want = data.design().x().transpose() * data.y() / static_cast<double>(n);
  EXPECT_NEAR((g0.head(2) - want).norm(), 0.0, 1e-15);
}

TEST(LplGradient, MatchesFiniteDifferences) {
  CounterRng rng(11);
  const ParameterBox box{1.0, 1.0};
  for (int s = 0; s < 20; ++s) {
    const Dataset data = random_dataset(30, 2, 200 + s);
    const LogisticParams p = random_params(2, box, rng);
    const Vector g = lpl_gradient(p, data);
    auto f = [&](const Vector& v) { return lpl_value(LogisticParams::unpack(v), data); };
    for (Index k = 0; k < 3; ++k) {
      EXPECT_NEAR(g(k), central_diff(f, p.pack(), k, 1e-5), 1e-7) << "seed " << s << " k " << k;
    }
  }
}

TEST(LplHessian, SingleFeatureAtZero) {
  const Index n = 10;
  Matrix x = Matrix::Zero(n, 2);
  x.col(0).setOnes();
  const Dataset data = Dataset::logistic(RegressionDesign(x), InteractionMatrix::zero(n),
                                         netreg::testing::random_spins(n, 1));
  const Matrix h = lpl_hessian(LogisticParams{Vector::Zero(2), 0.3}, data);
  Matrix want = Matrix::Zero(3, 3);
  want(0, 0) = 1.0;
  EXPECT_NEAR((-h - want).norm(), 0.0, 1e-15);
}

TEST(LplHessian, MatchesFiniteDifferences) {
  CounterRng rng(12);
  const ParameterBox box{1.0, 1.0};
  for (int s = 0; s < 20; ++s) {
    const Dataset data = random_dataset(30, 2, 300 + s);
    const LogisticParams p = random_params(2, box, rng);
    const Matrix h = lpl_hessian(p, data);
    for (Index c = 0; c < 3; ++c) {
      for (Index r = 0; r < 3; ++r) {
        auto f = [&](const Vector& v) { return lpl_gradient(LogisticParams::unpack(v), data)(r); };
        EXPECT_NEAR(h(r, c), central_diff(f, p.pack(), c, 1e-5), 1e-6);
      }
    }
  }
}

TEST(LplHessian, CurvatureBoundedBySmoothnessConstant) {
  CounterRng rng(13);
  for (int s = 0; s < 100; ++s) {
    const Index d = 1 + s % 3;
    const ParameterBox box{0.5 + 0.02 * s, 0.8};
    const Dataset data = random_dataset(40, d, 400 + s, box.theta_bound);
    const LogisticParams p = random_params(d, box, rng);
    const Vector ev = symmetric_eigenvalues(-lpl_hessian(p, data));
    const double bound = static_cast<double>(d) * box.theta_bound * box.theta_bound + 1.0;
    EXPECT_GE(ev(0), -1e-12);
    EXPECT_LE(ev(d), bound + 1e-9);
  }
}

TEST(LplValue, ConcaveAlongSegments) {
  CounterRng rng(14);
  const ParameterBox box{2.0, 1.0};
  for (int s = 0; s < 100; ++s) {
    const Dataset data = random_dataset(30, 2, 500 + s % 10);
    const Vector u = random_params(2, box, rng).pack();
    const Vector v = random_params(2, box, rng).pack();
    const double mid = lpl_value(LogisticParams::unpack(0.5 * (u + v)), data);
    const double avg = 0.5 * (lpl_value(LogisticParams::unpack(u), data) +
                              lpl_value(LogisticParams::unpack(v), data));
    EXPECT_GE(mid, avg - 1e-12);
  }
}

TEST(LplHessian, NegativeSemidefiniteOnProbes) {
  CounterRng rng(15);
  const ParameterBox box{2.0, 1.0};
  for (int s = 0; s < 100; ++s) {
    const Dataset data = random_dataset(30, 2, 600 + s % 10);
    const Matrix h = lpl_hessian(random_params(2, box, rng), data);
    const Vector v = netreg::testing::random_vector(3, 700 + s);
    EXPECT_GE(v.dot(-h * v), -1e-10);
  }
}

// Second moments of the score at the truth, summed exactly over all 2^12 spin
// configurations.
TEST(LplGradient, ExactVarianceBoundsAtTruth) {
  const Index n = 12;
  const Index d = 2;
  const double b = 0.4;
  const double m_bound = 1.0;
  CounterRng rng(16);
  for (int s = 0; s < 5; ++s) {
    const RegressionDesign design(uniform_features(n, d, m_bound, 800 + s));
    const InteractionMatrix a = netreg::testing::random_interaction(n, 900 + s);
    const LogisticParams p = random_params(d, ParameterBox{1.0, b}, rng);
    const IsingDistribution dist = ising_exact_distribution(p, design, a);
    double e_beta = 0.0;
    double e_theta = 0.0;
    for (std::uint64_t k = 0; k < dist.probs.size(); ++k) {
      const Vector y = dist.config(k);
      const Vector m = a.matrix() * y;
      const Vector t = design.x() * p.theta + p.beta * m;
      const Vector r = y - t.unaryExpr([](double v) { return std::tanh(v); });
      e_beta += dist.probs[k] * std::pow(m.dot(r), 2);
      e_theta += dist.probs[k] * (design.x().transpose() * r).squaredNorm();
    }
    EXPECT_LE(e_beta, (12.0 + 4.0 * b) * n);
    EXPECT_LE(e_theta, (4.0 + 4.0 * b) * m_bound * m_bound * d * n);
  }
}

TEST(FitLogistic, MatchesVanillaLogisticWithoutInteraction) {
  const Index n = 2000;
  const Matrix x = netreg::testing::random_matrix(n, 2, 21);
  const Vector theta0 = (Vector(2) << 0.5, -0.3).finished();
  GibbsConfig g;
  g.seed = 22;
  g.burn_in = 1;
  const Vector y =
      ising_gibbs_sample(LogisticParams{theta0, 0.0}, RegressionDesign(x), InteractionMatrix::zero(n), g)
          .front();
  const Dataset data = Dataset::logistic(RegressionDesign(x), InteractionMatrix::zero(n), y);
  LogisticFitOptions opt;
  opt.tolerance = 1e-10;
  const LogisticFit fit = fit_logistic_mple(data, ParameterBox{2.0, 0.4}, opt);
  const Vector oracle = vanilla_logistic_mle(x, y);
  EXPECT_LE((fit.params.theta - oracle).norm(), 1e-6);
  EXPECT_LE(fit.diagnostics.stationarity, 1e-10);
}

TEST(FitLogistic, MatchesGridSearchInOneDimension) {
  const Index n = 50;
  const ParameterBox box{1.0, 0.4};
  const InteractionMatrix a = build_bounded_degree(n, 4, 31);
  const RegressionDesign design(uniform_features(n, 1, 1.0, 32));
  GibbsConfig g;
  g.seed = 33;
  const Vector y =
      ising_gibbs_sample(LogisticParams{Vector::Constant(1, 0.5), 0.2}, design, a, g).front();
  const Dataset data = Dataset::logistic(design, a, y);
  LogisticFitOptions opt;
  opt.tolerance = 1e-9;
  const LogisticFit fit = fit_logistic_mple(data, box, opt);

  const Matrix& x = design.x();
  const Matrix am = a.matrix();
  auto f = [&](const Vector& v) { return reference_lpl(v.head(1), v(1), x, am, y); };
  const Vector grid = netreg::testing::grid_argmax(f, box.logistic_lower(1), box.logistic_upper(1), 2e-4);
  EXPECT_LE((fit.params.pack() - grid).norm(), 1e-3)
      << "fit " << fit.params.pack().transpose() << " grid " << grid.transpose();
}

TEST(FitLogistic, StaysInsideBoxAndIsDeterministic) {
  const ParameterBox box{0.2, 0.1};
  for (int s = 0; s < 5; ++s) {
    const Dataset data = random_dataset(200, 2, 1000 + s, 3.0);
    LogisticFitOptions opt;
    opt.record_trace = true;
    const LogisticFit a = fit_logistic_mple(data, box, opt);
    const LogisticFit b = fit_logistic_mple(data, box, opt);
    EXPECT_EQ(a.params.pack(), b.params.pack());
    EXPECT_EQ(a.diagnostics.iterations, b.diagnostics.iterations);
    for (const Vector& v : a.diagnostics.trace.iterates) {
      EXPECT_TRUE((v.array().abs() <= box.logistic_upper(2).array()).all());
    }
    EXPECT_LE(a.diagnostics.stationarity, 1.0 / std::sqrt(200.0));
  }
}

TEST(FitLogistic, StepRules) {
  const Dataset data = random_dataset(100, 2, 40, 0.5);
  const ParameterBox box{1.0, 0.5};
  LogisticFitOptions opt;
  EXPECT_DOUBLE_EQ(logistic_step_size(data, box, opt), 1.0 / 3.0);
  opt.step_rule = LogisticStepRule::kSqrtSmoothness;
  EXPECT_DOUBLE_EQ(logistic_step_size(data, box, opt), 1.0 / std::sqrt(3.0));
  opt.step_size = 0.01;
  EXPECT_DOUBLE_EQ(logistic_step_size(data, box, opt), 0.01);

  // Features far outside the nominal bound fall back to the data curvature bound.
  const Dataset wide = random_dataset(100, 2, 41, 10.0);
  opt = {};
  EXPECT_LT(logistic_step_size(wide, box, opt), 1.0 / 3.0);
  EXPECT_NO_THROW(fit_logistic_mple(wide, box, opt));
}

TEST(FitLogistic, IterationCapCarriesBestIterate) {
  const Dataset data = random_dataset(100, 2, 50);
  LogisticFitOptions opt;
  opt.max_iters = 1;
  opt.tolerance = 1e-14;
  EXPECT_THROW(fit_logistic_mple(data, ParameterBox{1.0, 0.5}, opt), PgdNotConverged);
}
