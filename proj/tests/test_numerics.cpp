#include <gtest/gtest.h>

#include <atomic>
#include <set>

#include "autosamp/numerics.hpp"
#include "oracles.hpp"

using namespace autosamp;

namespace {

ComplexImage random_image(std::uint64_t seed, int h, int w) {
  RngStream rng(seed);
  ComplexImage x(h, w);
  x.data = cgauss(rng, x.size(), 1.0);
  return x;
}

}  // namespace

TEST(Fft, MatchesDirectCenteredDft) {
  for (auto [h, w] : {std::pair{8, 8}, std::pair{6, 10}, std::pair{7, 5}}) {
    const ComplexImage x = random_image(11, h, w);
    const ComplexImage got = fft2c(x);
    const ComplexImage want = oracle::dft2c(x, -1);
    EXPECT_LT(oracle::max_abs_diff(got.data, want.data), 1e-12) << h << "x" << w;
    const ComplexImage back = ifft2c(x);
    EXPECT_LT(oracle::max_abs_diff(back.data, oracle::dft2c(x, +1).data), 1e-12);
  }
}

TEST(Fft, UnitaryAndInvertible) {
  const ComplexImage x = random_image(3, 16, 12);
  const ComplexImage k = fft2c(x);
  EXPECT_NEAR(norm2(k), norm2(x), 1e-12 * norm2(x));
  EXPECT_LT(oracle::max_abs_diff(ifft2c(k).data, x.data), 1e-12);
}

TEST(Fft, DeltaAtCenterIsFlat) {
  ComplexImage x(8, 8);
  x(4, 4) = 1.0;
  const ComplexImage k = fft2c(x);
  for (const auto& v : k.data) EXPECT_NEAR(std::abs(v - cx(1.0 / 8.0, 0.0)), 0.0, 1e-15);
}

TEST(Fft, RejectsEmpty) {
  EXPECT_THROW(fft2c(ComplexImage(0, 4)), ValidationError);
}

TEST(Inner, ConjugatesSecondArgument) {
  const CxVec a{cx(1, 2), cx(0, 1)};
  const CxVec b{cx(3, -1), cx(2, 2)};
  const cx want = a[0] * std::conj(b[0]) + a[1] * std::conj(b[1]);
  EXPECT_EQ(inner(a, b), want);
  EXPECT_THROW(inner(a, CxVec{cx(1, 0)}), ValidationError);
  EXPECT_DOUBLE_EQ(norm2(CxVec{cx(3, 4)}), 5.0);
}

TEST(Rng, Deterministic) {
  RngStream a(42), b(42);
  for (int i = 0; i < 100; ++i) EXPECT_EQ(a.next_u64(), b.next_u64());
  RngStream c(43);
  EXPECT_NE(RngStream(42).next_u64(), c.next_u64());
}

TEST(Rng, SplitStreamsDiffer) {
  const RngStream root(5);
  RngStream s0 = root.split(0), s1 = root.split(1), s0b = root.split(0);
  EXPECT_NE(s0.next_u64(), s1.next_u64());
  RngStream s0c = root.split(0);
  s0b.next_u64();
  EXPECT_EQ(s0b.next_u64(), (s0c.next_u64(), s0c.next_u64()));
}

TEST(Rng, UniformAndNormalMoments) {
  RngStream rng(9);
  const int n = 200000;
  double su = 0, sn = 0, sn2 = 0;
  for (int i = 0; i < n; ++i) {
    const double u = rng.uniform();
    ASSERT_GE(u, 0.0);
    ASSERT_LT(u, 1.0);
    su += u;
    const double z = rng.normal();
    sn += z;
    sn2 += z * z;
  }
  EXPECT_NEAR(su / n, 0.5, 5e-3);
  EXPECT_NEAR(sn / n, 0.0, 1e-2);
  EXPECT_NEAR(sn2 / n, 1.0, 1e-2);
}

TEST(Rng, BelowCoversRange) {
  RngStream rng(1);
  std::set<std::uint64_t> seen;
  for (int i = 0; i < 1000; ++i) {
    const auto v = rng.below(7);
    ASSERT_LT(v, 7u);
    seen.insert(v);
  }
  EXPECT_EQ(seen.size(), 7u);
}

TEST(Cgauss, ComplexVariance) {
  RngStream rng(2);
  const CxVec v = cgauss(rng, 100000, 0.5);
  double s = 0.0;
  for (const auto& c : v) s += std::norm(c);
  // sigma^2 is the variance of each complex entry.
  EXPECT_NEAR(s / v.size(), 0.25, 0.005);
}

TEST(ParallelFor, VisitsEveryIndexOnceAndRethrows) {
  set_max_threads(4);
  std::vector<std::atomic<int>> hits(1000);
  parallel_for(hits.size(), [&](std::size_t i) { hits[i]++; });
  for (auto& h : hits) EXPECT_EQ(h.load(), 1);
  EXPECT_THROW(parallel_for(100, [](std::size_t i) {
                 if (i == 57) throw NumericalError("boom");
               }),
               NumericalError);
  set_max_threads(1);
}

TEST(ComplexImage, ArithmeticAndShapeChecks) {
  ComplexImage a(2, 3, cx(1, 1)), b(2, 3, cx(2, 0));
  a += b;
  EXPECT_EQ(a(1, 2), cx(3, 1));
  a -= b;
  a *= cx(0, 1);
  EXPECT_EQ(a(0, 0), cx(-1, 1));
  ComplexImage c(3, 2);
  EXPECT_THROW(a += c, ValidationError);
  a(0, 0) = cx(std::nan(""), 0);
  EXPECT_FALSE(a.all_finite());
}
