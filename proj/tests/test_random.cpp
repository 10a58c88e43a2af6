#include <gtest/gtest.h>

#include <cmath>
#include <set>

#include "clab/random.hpp"

TEST(Rng, SplitmixReferenceValues) {
  // splitmix64 finalizer applied to 0 + golden gamma, computed independently.
  EXPECT_EQ(clab::splitmix64(0), 0xe220a8397b1dcdafULL);
}

TEST(Rng, SameSeedSameStream) {
  clab::Rng a(123), b(123), c(124);
  bool differs = false;
  for (int i = 0; i < 100; ++i) {
    const double x = a.uniform();
    EXPECT_EQ(x, b.uniform());
    differs = differs || x != c.uniform();
  }
  EXPECT_TRUE(differs);
}

TEST(Rng, DerivedSeedsAreDistinct) {
  std::set<std::uint64_t> seen;
  for (auto s : {clab::Stream::Centers, clab::Stream::Instances, clab::Stream::Augment, clab::Stream::Batch})
    for (std::uint64_t i = 0; i < 50; ++i) seen.insert(clab::derive_seed(7, s, i));
  EXPECT_EQ(seen.size(), 200u);
}

TEST(Rng, UniformMoments) {
  clab::Rng r(5);
  const int n = 200000;
  double m = 0, m2 = 0;
  for (int i = 0; i < n; ++i) {
    const double u = r.uniform();
    ASSERT_GE(u, 0.0);
    ASSERT_LT(u, 1.0);
    m += u;
    m2 += u * u;
  }
  m /= n;
  m2 /= n;
  EXPECT_NEAR(m, 0.5, 5 * std::sqrt(1.0 / 12 / n));
  EXPECT_NEAR(m2 - m * m, 1.0 / 12, 2e-3);
}

TEST(Rng, NormalMoments) {
  clab::Rng r(6);
  const int n = 200000;
  double m = 0, m2 = 0, m4 = 0;
  for (int i = 0; i < n; ++i) {
    const double z = r.normal();
    m += z;
    m2 += z * z;
    m4 += z * z * z * z;
  }
  EXPECT_NEAR(m / n, 0.0, 5 / std::sqrt(double(n)));
  EXPECT_NEAR(m2 / n, 1.0, 0.02);
  EXPECT_NEAR(m4 / n, 3.0, 0.1);
}

TEST(Rng, GammaAndBetaMeans) {
  clab::Rng r(8);
  const int n = 100000;
  for (double shape : {0.5, 1.0, 4.5}) {
    double m = 0;
    for (int i = 0; i < n; ++i) m += r.gamma(shape);
    EXPECT_NEAR(m / n, shape, 5 * std::sqrt(shape / n));
  }
  double b = 0;
  for (int i = 0; i < n; ++i) b += r.beta(2.0, 5.0);
  EXPECT_NEAR(b / n, 2.0 / 7.0, 5 * std::sqrt(10.0 / (49.0 * 8.0) / n));
}

TEST(Rng, BelowIsUnbiased) {
  clab::Rng r(9);
  std::vector<int> counts(7, 0);
  const int n = 70000;
  for (int i = 0; i < n; ++i) {
    const auto v = r.below(7);
    ASSERT_LT(v, 7u);
    ++counts[v];
  }
  for (int c : counts) EXPECT_NEAR(c, n / 7.0, 5 * std::sqrt(n / 7.0));
}
