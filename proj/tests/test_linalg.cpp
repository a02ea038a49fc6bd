#include <gtest/gtest.h>

#include <cmath>
#include <numbers>
#include <random>

#include "lindblad/linalg.hpp"
#include "oracles.hpp"

using namespace lindblad;

namespace {

ComplexMatrix diag(std::initializer_list<double> values) {
  ComplexMatrix d = ComplexMatrix::Zero(static_cast<Index>(values.size()), static_cast<Index>(values.size()));
  Index i = 0;
  for (const double v : values) d(i, i) = v, ++i;
  return d;
}

// Unitary from the QR factor of a seeded complex Gaussian matrix.
ComplexMatrix random_unitary(std::mt19937_64& rng, Index m) {
  Eigen::HouseholderQR<ComplexMatrix> qr(oracle::random_complex(rng, m, m));
  return qr.householderQ() * ComplexMatrix::Identity(m, m);
}

}  // namespace

TEST(TraceNorm, DiagonalAndUnitaryInvariant) {
  std::mt19937_64 rng(1);
  const ComplexMatrix d = diag({1.0, -2.0, 3.0});
  EXPECT_NEAR(trace_norm(d), 6.0, 1e-14);
  const ComplexMatrix u = random_unitary(rng, 3);
  EXPECT_NEAR(trace_norm(u * d * u.adjoint()), 6.0, 1e-12);
}

TEST(TraceNorm, NonHermitianIsSumOfSingularValues) {
  ComplexMatrix n(2, 2);
  n << 0.0, 1.0, 0.0, 0.0;
  EXPECT_NEAR(trace_norm(n), 1.0, 1e-15);
  std::mt19937_64 rng(2);
  const ComplexMatrix x = oracle::random_complex(rng, 5, 5);
  double sum = 0.0;
  for (const double s : oracle::singular_values(x)) sum += s;
  EXPECT_NEAR(trace_norm(x), sum, 1e-11);
}

TEST(AccurateSquaredNorm, NormalizesLargeFactorsToTheLastUlp) {
  std::mt19937_64 rng(4);
  ComplexMatrix x = oracle::random_complex(rng, 256, 128);
  EXPECT_NEAR(accurate_squared_norm(x), x.squaredNorm(), 1e-12 * x.squaredNorm());
  x /= std::sqrt(accurate_squared_norm(x));
  EXPECT_LE(std::abs(accurate_squared_norm(x) - 1.0), 4e-16);
  EXPECT_EQ(accurate_squared_norm(ComplexMatrix(3, 0)), 0.0);
}

TEST(HermitianSpectrum, MatchesCharacteristicPolynomialRoots) {
  std::mt19937_64 rng(3);
  for (const Index m : {2, 4, 6}) {
    const ComplexMatrix h = oracle::random_hermitian(rng, m);
    const std::vector<double> roots = oracle::char_poly_spectrum(h);
    ASSERT_EQ(static_cast<Index>(roots.size()), m);
    const RealVector spec = hermitian_spectrum(h);
    // roots come in ascending order, the spectrum in descending order
    for (Index i = 0; i < m; ++i) EXPECT_NEAR(spec(i), roots[static_cast<std::size_t>(m - 1 - i)], 1e-10);
    EXPECT_NEAR(min_eigenvalue(h), roots.front(), 1e-10);
  }
}

TEST(HermitianSpectrum, ProjectorHasZeroAndOne) {
  ComplexMatrix p = ComplexMatrix::Constant(2, 2, 0.5);
  const RealVector spec = hermitian_spectrum(p);
  EXPECT_NEAR(spec(0), 1.0, 1e-15);
  EXPECT_NEAR(spec(1), 0.0, 1e-15);
}

TEST(Hermiticity, PartAndDefect) {
  ComplexMatrix a(2, 2);
  a << 1.0, Complex{0.0, 1.0}, 0.0, 2.0;
  EXPECT_FALSE(is_hermitian(a));
  const ComplexMatrix h = hermitian_part(a);
  EXPECT_TRUE(is_hermitian(h));
  EXPECT_EQ(h(0, 1), Complex(0.0, 0.5));
  EXPECT_EQ(h(1, 0), Complex(0.0, -0.5));
}

TEST(Hconcat, SkipsEmptyBlocksAndChecksRows) {
  const ComplexMatrix a = ComplexMatrix::Ones(3, 2);
  const ComplexMatrix e(3, 0);
  const ComplexMatrix b = ComplexMatrix::Constant(3, 1, 2.0);
  const ComplexMatrix c = hconcat({a, e, b});
  ASSERT_EQ(c.cols(), 3);
  EXPECT_EQ(c(2, 2), Complex(2.0, 0.0));
  EXPECT_THROW(hconcat({a, ComplexMatrix::Ones(2, 1)}), DimensionError);
}

TEST(TruncateSvd, TwoSingularValues) {
  std::mt19937_64 rng(4);
  const ComplexMatrix u = random_unitary(rng, 3);
  const ComplexMatrix v = random_unitary(rng, 2);
  ComplexMatrix s = ComplexMatrix::Zero(3, 2);
  s(0, 0) = 2.0;
  s(1, 1) = 0.5;
  const ComplexMatrix x = u * s * v.adjoint();

  // sigma_2^2 = 0.25 fits the tolerance exactly: one column is discarded.
  const SvdTruncation t = truncate_svd(x, 0.25);
  EXPECT_EQ(t.rank, 1);
  EXPECT_EQ(t.pre_columns, 2);
  EXPECT_NEAR(t.discarded_energy, 0.25, 1e-14);
  EXPECT_NEAR(trace_norm(x * x.adjoint() - t.factor * t.factor.adjoint()), 0.25, 1e-13);
  EXPECT_NEAR(t.factor.norm(), 2.0, 1e-14);

  const SvdTruncation keep = truncate_svd(x, 0.2499);
  EXPECT_EQ(keep.rank, 2);
  EXPECT_NEAR(trace_norm(x * x.adjoint() - keep.factor * keep.factor.adjoint()), 0.0, 1e-13);
}

TEST(TruncateSvd, ColumnsHaveRealPositiveLeadingEntry) {
  std::mt19937_64 rng(5);
  const ComplexMatrix x = oracle::random_complex(rng, 6, 4);
  const SvdTruncation t = truncate_svd(x, 0.0);
  ASSERT_EQ(t.rank, 4);
  for (Index j = 0; j < t.rank; ++j) {
    Index i = 0;
    while (std::abs(t.factor(i, j)) <= 1e-10) ++i;
    EXPECT_GT(t.factor(i, j).real(), 0.0);
    EXPECT_NEAR(t.factor(i, j).imag(), 0.0, 1e-13);
  }
}

TEST(TruncateSvd, OptimalAmongRankR) {
  std::mt19937_64 rng(6);
  const ComplexMatrix x = oracle::random_complex(rng, 5, 8);
  const std::vector<double> sigma = oracle::singular_values(x.adjoint());
  double tail = 0.0;
  for (std::size_t i = 3; i < sigma.size(); ++i) tail += sigma[i] * sigma[i];
  // tolerance between the energy of the last two and the last three values
  const SvdTruncation t = truncate_svd(x, tail + 0.5 * sigma[2] * sigma[2]);
  EXPECT_EQ(t.rank, 3);
  EXPECT_NEAR(t.discarded_energy, tail, 1e-11);
  EXPECT_NEAR(trace_norm(x * x.adjoint() - t.factor * t.factor.adjoint()), tail, 1e-11);
}

TEST(TruncateSvd, ZeroAndEmptyInputs) {
  const SvdTruncation z = truncate_svd(ComplexMatrix::Zero(4, 3), 0.0);
  EXPECT_EQ(z.rank, 0);
  EXPECT_EQ(z.factor.rows(), 4);
  EXPECT_EQ(z.factor.cols(), 0);
  const SvdTruncation e = truncate_svd(ComplexMatrix(4, 0), 1e-3);
  EXPECT_EQ(e.rank, 0);
  EXPECT_THROW(truncate_svd(ComplexMatrix::Ones(2, 2), -1.0), ParameterError);
}

TEST(TruncateSvd, RankCapReportsExcess) {
  const ComplexMatrix x = diag({3.0, 2.0, 1.0});
  const SvdTruncation t = truncate_svd(x, 0.5, Index{1});
  EXPECT_EQ(t.rank, 1);
  EXPECT_NEAR(t.discarded_energy, 5.0, 1e-13);
  EXPECT_NEAR(t.cap_excess, 4.5, 1e-13);
}

TEST(Expm, ClosedForms) {
  EXPECT_TRUE(expm(ComplexMatrix::Zero(3, 3)).isIdentity(0.0));

  const ComplexMatrix d = expm(diag({0.5, -1.0, 2.0}));
  EXPECT_NEAR(std::abs(d(0, 0) - std::exp(0.5)), 0.0, 1e-15);
  EXPECT_NEAR(std::abs(d(1, 1) - std::exp(-1.0)), 0.0, 1e-15);
  EXPECT_NEAR(std::abs(d(2, 2) - std::exp(2.0)), 0.0, 1e-14);

  ComplexMatrix n(2, 2);
  n << 0.0, 1.0, 0.0, 0.0;
  const ComplexMatrix en = expm(n);
  EXPECT_NEAR(std::abs(en(0, 1) - 1.0), 0.0, 1e-15);
  EXPECT_NEAR(std::abs(en(0, 0) - 1.0), 0.0, 1e-15);

  // exp(-i theta sigma_x) = cos(theta) I - i sin(theta) sigma_x
  const double theta = 0.7;
  ComplexMatrix sx(2, 2);
  sx << 0.0, 1.0, 1.0, 0.0;
  const ComplexMatrix r = expm(Complex{0.0, -theta} * sx);
  EXPECT_NEAR(std::abs(r(0, 0) - std::cos(theta)), 0.0, 1e-15);
  EXPECT_NEAR(std::abs(r(0, 1) - Complex{0.0, -std::sin(theta)}), 0.0, 1e-15);
}

TEST(Expm, MatchesLongDoubleTaylor) {
  std::mt19937_64 rng(7);
  for (const double scale : {0.01, 0.5, 3.0, 20.0}) {
    const ComplexMatrix a = scale * oracle::random_complex(rng, 6, 6) / 6.0;
    const ComplexMatrix ref = oracle::taylor_expm(a);
    EXPECT_LE((expm(a) - ref).norm() / ref.norm(), 1e-12) << "scale " << scale;
  }
}

TEST(Expm, InverseOfNegative) {
  std::mt19937_64 rng(8);
  const ComplexMatrix a = oracle::random_complex(rng, 5, 5);
  EXPECT_LE((expm(a) * expm(-a) - ComplexMatrix::Identity(5, 5)).norm(), 1e-12);
}

TEST(ExpmAction, DenseRouteIsExact) {
  std::mt19937_64 rng(9);
  const ComplexMatrix a = oracle::random_complex(rng, 8, 8) / 4.0;
  const ComplexMatrix v = oracle::random_complex(rng, 8, 3);
  ExpmActionPlan plan;
  const ComplexMatrix y = expm_action(a, v, 1e-3, {}, &plan);
  EXPECT_EQ(plan.substeps, 0);
  EXPECT_LE((y - oracle::taylor_expm(a) * v).norm(), 1e-13 * v.norm());
}

TEST(ExpmAction, TaylorRouteMeetsTolerance) {
  std::mt19937_64 rng(10);
  ExpmActionOptions taylor;
  taylor.dense_fallback_dim = 0;
  taylor.dense_tolerance = 0.0;
  const Index m = 40;
  // dissipative generator: skew-Hermitian part plus a negative semidefinite part
  const ComplexMatrix h = oracle::random_hermitian(rng, m) / std::sqrt(static_cast<double>(m));
  const ComplexMatrix l = oracle::random_complex(rng, m, m) / std::sqrt(static_cast<double>(m));
  const ComplexMatrix a = Complex{0.0, -1.0} * h - 0.25 * l.adjoint() * l;
  const ComplexMatrix v = oracle::random_complex(rng, m, 5);
  const ComplexMatrix ref = oracle::taylor_expm(a) * v;
  for (const double tol : {1e-2, 1e-4, 1e-6, 1e-9}) {
    ExpmActionPlan plan;
    const ComplexMatrix y = expm_action(a, v, tol, taylor, &plan);
    EXPECT_GT(plan.substeps, 0);
    EXPECT_LE((y - ref).norm(), 10.0 * tol * v.norm()) << "tolerance " << tol;
  }
}

TEST(ExpmAction, DenseThresholds) {
  ExpmActionOptions opt;
  EXPECT_TRUE(expm_action_is_dense(64, 1e-2, opt));
  EXPECT_FALSE(expm_action_is_dense(65, 1e-2, opt));
  EXPECT_TRUE(expm_action_is_dense(65, 1e-10, opt));
  EXPECT_TRUE(expm_action_is_dense(1000, 0.0, opt));
}

TEST(ExpmAction, RejectsBadInput) {
  const ComplexMatrix a = ComplexMatrix::Identity(3, 3);
  EXPECT_THROW(expm_action(a, ComplexMatrix::Ones(2, 1), 1e-6), DimensionError);
  EXPECT_THROW(expm_action(a, ComplexMatrix::Ones(3, 1), 1.0), ParameterError);
  EXPECT_THROW(expm_action(a, ComplexMatrix::Ones(3, 1), -1e-3), ParameterError);
  EXPECT_EQ(expm_action(a, ComplexMatrix(3, 0), 1e-6).cols(), 0);
}
