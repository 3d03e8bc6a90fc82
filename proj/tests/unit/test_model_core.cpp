#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>
#include <vector>

#include "netreg/netreg.hpp"
#include "test_util.hpp"

using namespace netreg;
using netreg::testing::random_interaction;
using netreg::testing::random_matrix;
using netreg::testing::random_vector;

namespace {

double dense_norm2(const Matrix& a) {
  const Vector ev = Eigen::SelfAdjointEigenSolver<Matrix>(a).eigenvalues();
  return std::max(std::abs(ev(0)), std::abs(ev(ev.size() - 1)));
}

}  // namespace

TEST(InteractionMatrix, FromUpperIsExactlySymmetricWithZeroDiagonal) {
  Matrix m = random_matrix(7, 7, 3);
  const InteractionMatrix a = InteractionMatrix::from_upper(m);
  for (Index i = 0; i < 7; ++i) {
    EXPECT_EQ(a(i, i), 0.0);
    for (Index j = 0; j < 7; ++j) EXPECT_EQ(a(i, j), a(j, i));
  }
  EXPECT_EQ(a(1, 4), m(1, 4));
  EXPECT_EQ(a(4, 1), m(1, 4));
}

TEST(InteractionMatrix, CachedNormsMatchRecomputation) {
  for (Index n : {5, 40, 350}) {
    const InteractionMatrix a = random_interaction(n, 11 + n, 0.8);
    const Matrix& m = a.matrix();
    EXPECT_NEAR(a.norm_inf(), m.cwiseAbs().rowwise().sum().maxCoeff(), 1e-10 * a.norm_inf());
    EXPECT_NEAR(a.frob_sq(), m.squaredNorm(), 1e-10 * a.frob_sq());
    const double n2 = dense_norm2(m);
    EXPECT_NEAR(a.norm2(), n2, 1e-10 * n2) << "n=" << n;
  }
}

TEST(InteractionMatrix, LanczosAgreesWithDenseSolverOnSk) {
  const InteractionMatrix a = build_sk(420, 5);
  const Vector ev = Eigen::SelfAdjointEigenSolver<Matrix>(a.matrix()).eigenvalues();
  EXPECT_NEAR(a.min_eigenvalue(), ev(0), 1e-10 * std::abs(ev(0)));
  EXPECT_NEAR(a.max_eigenvalue(), ev(ev.size() - 1), 1e-10 * ev(ev.size() - 1));
}

TEST(InteractionMatrix, ValidNormInequalities) {
  for (std::uint64_t seed = 0; seed < 20; ++seed) {
    const Index n = 3 + static_cast<Index>(seed);
    const InteractionMatrix a = random_interaction(n, seed, 1.0 + 0.1 * seed);
    const double tol = 1e-9 * a.norm_inf();
    EXPECT_LE(a.norm2(), a.norm_inf() + tol);
    EXPECT_LE(a.norm2(), std::sqrt(a.frob_sq()) + tol);
    EXPECT_LE(std::sqrt(a.frob_sq()), std::sqrt(static_cast<double>(n)) * a.norm2() + tol);
  }
}

TEST(InteractionMatrix, InfinityNormCanExceedFrobeniusNorm) {
  // A star: the hub row sums to 5 while ||A||_F^2 = 10, so ||A||_inf > ||A||_F.
  Matrix m = Matrix::Zero(6, 6);
  for (Index j = 1; j < 6; ++j) m(0, j) = 1.0;
  const InteractionMatrix a = InteractionMatrix::from_upper(m);
  EXPECT_DOUBLE_EQ(a.norm_inf(), 5.0);
  EXPECT_DOUBLE_EQ(a.frob_sq(), 10.0);
  EXPECT_GT(a.norm_inf(), std::sqrt(a.frob_sq()));
}

TEST(InteractionMatrix, FromSymmetricRejectsBadInput) {
  Matrix m = Matrix::Zero(3, 3);
  m(0, 1) = 1.0;
  EXPECT_THROW(InteractionMatrix::from_symmetric(m), Error);
  m(1, 0) = 1.0;
  EXPECT_NO_THROW(InteractionMatrix::from_symmetric(m));
  m(2, 2) = 0.5;
  EXPECT_THROW(InteractionMatrix::from_symmetric(m), Error);
  EXPECT_THROW(InteractionMatrix::from_upper(Matrix::Zero(2, 3)), DimensionError);
}

TEST(InteractionMatrix, FromEdgesRejectsLoopsAndRepeats) {
  const std::vector<InteractionMatrix::Edge> ok = {{0, 1, 0.5}, {1, 2, 0.25}};
  const InteractionMatrix a = InteractionMatrix::from_edges(3, ok);
  EXPECT_EQ(a(1, 0), 0.5);
  EXPECT_EQ(a(2, 1), 0.25);
  const std::vector<InteractionMatrix::Edge> loop = {{1, 1, 1.0}};
  EXPECT_THROW(InteractionMatrix::from_edges(3, loop), Error);
  const std::vector<InteractionMatrix::Edge> rep = {{0, 1, 1.0}, {1, 0, 1.0}};
  EXPECT_THROW(InteractionMatrix::from_edges(3, rep), Error);
}

TEST(InteractionMatrix, SparseAndDenseProductsAgree) {
  const InteractionMatrix sparse = build_bounded_degree(64, 3, 9);
  ASSERT_TRUE(sparse.is_sparse());
  const Vector y = random_vector(64, 2);
  const Vector dense = sparse.matrix() * y;
  const Vector fast = sparse.apply(y);
  for (Index i = 0; i < 64; ++i) {
    EXPECT_NEAR(fast(i), dense(i), 1e-14);
    EXPECT_NEAR(sparse.row_dot(i, y), dense(i), 1e-14);
  }
  const InteractionMatrix full = random_interaction(10, 4);
  EXPECT_FALSE(full.is_sparse());
}

TEST(InteractionMatrix, CopiesShareStorage) {
  const InteractionMatrix a = random_interaction(30, 1);
  const InteractionMatrix b = a;
  EXPECT_EQ(&a.matrix(), &b.matrix());
}

TEST(RegressionDesign, ValidatesShapesAndDiagonal) {
  EXPECT_THROW(RegressionDesign(Matrix::Zero(2, 2)), DimensionError);
  EXPECT_THROW(RegressionDesign(Matrix::Zero(3, 0)), DimensionError);
  EXPECT_THROW(RegressionDesign(Matrix::Zero(4, 1), Vector::Ones(3)), DimensionError);
  Vector dd = Vector::Ones(4);
  dd(2) = 0.0;
  EXPECT_THROW(RegressionDesign(Matrix::Zero(4, 1), dd), Error);
  const Matrix x = random_matrix(10, 2, 1);
  const RegressionDesign des(x);
  EXPECT_TRUE(des.covariance().isApprox(x.transpose() * x / 10.0, 1e-14));
  EXPECT_EQ(des.d_diag(), Vector::Ones(10));
}

TEST(ParameterBox, BoundsAndPacking) {
  const ParameterBox box{2.0, 0.5};
  const Vector lu = box.logistic_upper(2);
  EXPECT_EQ(lu, (Vector(3) << 2.0, 2.0, 0.5).finished());
  const Vector ll = box.linear_lower(2);
  EXPECT_EQ(ll, (Vector(5) << -2.0, -2.0, -0.5, -1.0, -1.0).finished());
  EXPECT_THROW((ParameterBox{0.0, 1.0}.validate()), Error);

  const LinearParams lp = LinearParams::from_truth((Vector(2) << 0.5, -0.3).finished(), 0.2);
  EXPECT_DOUBLE_EQ(lp.kappa(0), 0.1);
  const LinearParams back = LinearParams::unpack(lp.pack());
  EXPECT_EQ(back.theta, lp.theta);
  EXPECT_EQ(back.beta, lp.beta);
  EXPECT_EQ(back.kappa, lp.kappa);

  const LogisticParams p{(Vector(2) << 1.0, -2.0).finished(), 0.3};
  EXPECT_EQ(LogisticParams::unpack(p.pack()).theta, p.theta);
  EXPECT_TRUE(p.inside(box));
  EXPECT_FALSE((LogisticParams{p.theta, 0.6}.inside(box)));
}

TEST(Dataset, LogisticRequiresSpinsAndCachesMagnetizations) {
  const InteractionMatrix a = random_interaction(8, 3);
  const RegressionDesign des(random_matrix(8, 2, 4));
  Vector y = netreg::testing::random_spins(8, 1);
  const Dataset ds = Dataset::logistic(des, a, y);
  const Vector m = a.matrix() * y;
  for (Index i = 0; i < 8; ++i) EXPECT_NEAR(ds.magnetizations()(i), m(i), 1e-12);
  y(3) = 0.5;
  EXPECT_THROW(Dataset::logistic(des, a, y), Error);
  EXPECT_THROW(Dataset::linear(des, InteractionMatrix::zero(7), Vector::Zero(8)), DimensionError);
}

// ---------------------------------------------------------------------------

TEST(QuadraticMoments, ConstantFunction) {
  const Matrix s = Matrix::Identity(3, 3);
  const auto r = quadratic_gaussian_moments(Matrix::Zero(3, 3), Vector::Zero(3), 5.0,
                                            random_vector(3, 1), s);
  EXPECT_DOUBLE_EQ(r.mean, 5.0);
  EXPECT_DOUBLE_EQ(r.variance, 0.0);
}

TEST(QuadraticMoments, ChiSquaredOneDof) {
  const auto r = quadratic_gaussian_moments(Matrix::Ones(1, 1), Vector::Zero(1), 0.0,
                                            Vector::Zero(1), Matrix::Ones(1, 1));
  EXPECT_DOUBLE_EQ(r.mean, 1.0);
  EXPECT_DOUBLE_EQ(r.variance, 2.0);
}

TEST(QuadraticMoments, Errors) {
  EXPECT_THROW(quadratic_gaussian_moments(Matrix::Zero(2, 2), Vector::Zero(3), 0.0,
                                          Vector::Zero(2), Matrix::Identity(2, 2)),
               DimensionError);
  Matrix bad = Matrix::Identity(2, 2);
  bad(0, 1) = bad(1, 0) = 2.0;
  EXPECT_THROW(quadratic_gaussian_moments(Matrix::Zero(2, 2), Vector::Zero(2), 0.0,
                                          Vector::Zero(2), bad),
               NotPositiveDefinite);
}

namespace {

struct McEstimate {
  double mean;
  double mean_se;
  double var;
  double var_se;
};

McEstimate monte_carlo_quadratic(const Matrix& a, const Vector& b, double c, const Vector& mu,
                                 const Matrix& sigma, long draws, std::uint64_t seed) {
  const Index n = mu.size();
  const Matrix l = Eigen::LLT<Matrix>(sigma).matrixL();
  CounterRng rng(seed, 13);
  std::vector<double> f(static_cast<std::size_t>(draws));
  Vector w(n);
  double sum = 0.0;
  for (long k = 0; k < draws; ++k) {
    for (Index i = 0; i < n; ++i) w(i) = rng.normal();
    const Vector z = mu + l * w;
    f[static_cast<std::size_t>(k)] = z.dot(a * z) + b.dot(z) + c;
    sum += f[static_cast<std::size_t>(k)];
  }
  const double mean = sum / draws;
  double m2 = 0.0;
  double m4 = 0.0;
  for (double v : f) {
    const double e = (v - mean) * (v - mean);
    m2 += e;
    m4 += e * e;
  }
  m2 /= draws;
  m4 /= draws;
  return {mean, std::sqrt(m2 / draws), m2, std::sqrt(std::max(m4 - m2 * m2, 0.0) / draws)};
}

void check_against_monte_carlo(Index n, std::uint64_t seed, long draws) {
  const Matrix g = random_matrix(n, n, seed);
  const Matrix a = random_matrix(n, n, seed + 100);  // deliberately not symmetric
  const Matrix sigma = g * g.transpose() / static_cast<double>(n) + 0.1 * Matrix::Identity(n, n);
  const Vector b = random_vector(n, seed + 200);
  const Vector mu = random_vector(n, seed + 300);
  const auto exact = quadratic_gaussian_moments(a, b, 0.7, mu, sigma);
  const McEstimate mc = monte_carlo_quadratic(a, b, 0.7, mu, sigma, draws, seed);
  EXPECT_LE(std::abs(exact.mean - mc.mean), 4.0 * mc.mean_se) << "n=" << n << " seed=" << seed;
  EXPECT_LE(std::abs(exact.variance - mc.var), 4.0 * mc.var_se) << "n=" << n << " seed=" << seed;
}

}  // namespace

TEST(QuadraticMoments, MatchesMonteCarloThreeByThree) { check_against_monte_carlo(3, 42, 1000000); }

TEST(QuadraticMoments, MatchesMonteCarloOnSmallInstances) {
  for (std::uint64_t s = 0; s < 20; ++s) {
    check_against_monte_carlo(1 + static_cast<Index>(s % 5), 1000 + s, 200000);
  }
}

TEST(Linalg, EigendecompositionReconstructsLargeMatrices) {
  for (Index n : {Index{30}, Index{300}}) {
    const Matrix a = netreg::testing::random_interaction(n, 77).matrix();
    const SymmetricEigen e = symmetric_eigen(a);
    const Matrix rebuilt = e.vectors * e.values.asDiagonal() * e.vectors.transpose();
    EXPECT_LE((rebuilt - a).norm(), 1e-11 * std::max(1.0, a.norm())) << "n=" << n;
    EXPECT_LE((e.vectors.transpose() * e.vectors - Matrix::Identity(n, n)).norm(), 1e-11);
    EXPECT_TRUE(std::is_sorted(e.values.data(), e.values.data() + n));
  }
}
