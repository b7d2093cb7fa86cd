#include <gtest/gtest.h>

#include <cmath>
#include <limits>
#include <numeric>

#include "bsattn/errors.hpp"
#include "bsattn/numerics.hpp"

using namespace bsattn;

TEST(Softmax, KnownValues) {
  const std::vector<double> z{0.0, std::log(3.0)};
  const auto p = stable_softmax(z);
  EXPECT_NEAR(p[0], 0.25, 1e-15);
  EXPECT_NEAR(p[1], 0.75, 1e-15);
}

TEST(Softmax, HugeLogitsStayFinite) {
  const std::vector<double> z{1000.0, 1000.0, -1000.0};
  const auto p = stable_softmax(z);
  EXPECT_DOUBLE_EQ(p[0], 0.5);
  EXPECT_DOUBLE_EQ(p[1], 0.5);
  EXPECT_EQ(p[2], 0.0);
}

TEST(Softmax, MaskedScoreGivesExactZero) {
  const std::vector<double> z{0.3, -1e30, 1.2};
  EXPECT_EQ(stable_softmax(z)[1], 0.0);
}

TEST(Softmax, RejectsEmptyAndNonFinite) {
  EXPECT_THROW(stable_softmax(std::vector<double>{}), ArgumentError);
  EXPECT_THROW(stable_softmax(std::vector<double>{1.0, std::nan("")}), ArgumentError);
  EXPECT_THROW(stable_softmax(std::vector<double>{std::numeric_limits<double>::infinity()}), ArgumentError);
}

TEST(Softmax, PropertySumsToOneAndShiftInvariant) {
  Rng rng(11);
  for (int trial = 0; trial < 200; ++trial) {
    const std::size_t n = 1 + rng.below(20);
    std::vector<double> z(n);
    rng.fill_normal(z, 5.0);
    const auto p = stable_softmax(z);
    EXPECT_NEAR(std::accumulate(p.begin(), p.end(), 0.0), 1.0, 1e-14);
    for (double v : p) EXPECT_GE(v, 0.0);
    const double shift = rng.uniform(-50, 50);
    for (double& v : z) v += shift;
    const auto q = stable_softmax(z);
    for (std::size_t i = 0; i < n; ++i) EXPECT_NEAR(p[i], q[i], 1e-13);
  }
}

TEST(SoftmaxVjp, MatchesExplicitJacobian) {
  Rng rng(12);
  for (int trial = 0; trial < 50; ++trial) {
    const std::size_t n = 1 + rng.below(8);
    std::vector<double> z(n), g(n);
    rng.fill_normal(z, 2.0);
    rng.fill_normal(g, 1.0);
    const auto p = stable_softmax(z);
    const auto got = softmax_vjp(p, g);
    for (std::size_t j = 0; j < n; ++j) {
      double want = 0.0;
      for (std::size_t i = 0; i < n; ++i) want += g[i] * ((i == j ? p[i] : 0.0) - p[i] * p[j]);
      EXPECT_NEAR(got[j], want, 1e-14);
    }
  }
}

TEST(FiniteDifference, ExactOnQuadratic) {
  // Central differences have no truncation error on quadratics.
  const ScalarFunction f = [](std::span<const double> x) { return 3.0 * x[0] * x[0] - x[0] * x[1] + 2.0 * x[1]; };
  const std::vector<double> x{0.5, -1.0};
  const auto g = finite_difference_grad(f, x, 1e-3);
  EXPECT_NEAR(g[0], 3.0 * 2 * 0.5 + 1.0, 1e-9);
  EXPECT_NEAR(g[1], -0.5 + 2.0, 1e-9);
}

TEST(FiniteDifference, ReportsCoordinateOfNonFiniteEvaluation) {
  const ScalarFunction f = [](std::span<const double> x) { return x[1] > 0.5 ? std::nan("") : x[0]; };
  const std::vector<double> x{0.0, 0.5};
  try {
    finite_difference_grad(f, x, 1e-3);
    FAIL() << "expected OracleError";
  } catch (const OracleError& e) {
    EXPECT_EQ(e.index(), 1u);
  }
}

namespace {
// SplitMix64 written out from its published constants.
std::uint64_t splitmix(std::uint64_t z) {
  z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
  z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
  return z ^ (z >> 31);
}
}  // namespace

TEST(Rng, CounterBasedSplitMix) {
  Rng rng(42);
  for (std::uint64_t n = 0; n < 10; ++n) EXPECT_EQ(rng.next_u64(), splitmix(42 + (n + 1) * 0x9E3779B97F4A7C15ULL));
  EXPECT_EQ(rng.counter(), 10u);
}

TEST(Rng, DeterministicAndSeedSensitive) {
  Rng a(7), b(7), c(8);
  for (int i = 0; i < 100; ++i) {
    const double x = a.normal();
    EXPECT_EQ(x, b.normal());
    EXPECT_NE(x, c.normal());
  }
}

TEST(Rng, RangesAndMoments) {
  Rng rng(3);
  double sum = 0, sum2 = 0;
  const int n = 20000;
  for (int i = 0; i < n; ++i) {
    const double u = rng.uniform();
    ASSERT_GE(u, 0.0);
    ASSERT_LT(u, 1.0);
    ASSERT_LT(rng.below(7), 7u);
    const double z = rng.normal();
    sum += z;
    sum2 += z * z;
  }
  EXPECT_NEAR(sum / n, 0.0, 0.05);
  EXPECT_NEAR(sum2 / n, 1.0, 0.05);
}
