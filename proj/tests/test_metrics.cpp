#include <gtest/gtest.h>

#include <filesystem>
#include <fstream>

#include "autosamp/dataset.hpp"
#include "autosamp/metrics.hpp"
#include "oracles.hpp"

using namespace autosamp;

TEST(Psnr, PerfectReconIsCapped) {
  const ComplexImage x = make_phantom(RngStream(1), 32, 32, 5);
  EXPECT_EQ(psnr(x, x), kPsnrCap);
}

TEST(Psnr, ConstantOffsetGivesTwentyDb) {
  ComplexImage ref(8, 8);
  ref(3, 3) = cx(1.0, 0.0);
  ComplexImage x = ref;
  for (auto& v : x.data) v += 0.1;
  EXPECT_NEAR(psnr(x, ref), 20.0, 1e-12);
}

TEST(Psnr, MatchesTwoPassOracle) {
  RngStream rng(2);
  for (int trial = 0; trial < 10; ++trial) {
    ComplexImage a(17, 13), b(17, 13);
    a.data = cgauss(rng, a.size(), 1.0);
    b = a;
    for (auto& v : b.data) v += cx(0.05 * rng.normal(), 0.05 * rng.normal());
    EXPECT_NEAR(psnr(b, a), oracle::psnr(b, a), 1e-10);
  }
}

TEST(Psnr, GlobalPhaseInvariant) {
  RngStream rng(3);
  ComplexImage a(16, 16), b(16, 16);
  a.data = cgauss(rng, a.size(), 1.0);
  b.data = cgauss(rng, b.size(), 1.0);
  const double before = psnr(b, a);
  const cx rot = std::polar(1.0, 1.234);
  a *= rot;
  b *= rot;
  EXPECT_NEAR(psnr(b, a), before, 1e-10);
}

TEST(Psnr, RejectsZeroReference) {
  EXPECT_THROW(psnr(ComplexImage(4, 4), ComplexImage(4, 4)), ValidationError);
  EXPECT_THROW(psnr(ComplexImage(4, 4), ComplexImage(4, 5)), ValidationError);
}

TEST(Ssim, IdenticalIsOne) {
  const RealImage m = magnitude(make_phantom(RngStream(4), 32, 32, 6));
  EXPECT_NEAR(ssim(m, m), 1.0, 1e-9);
}

TEST(Ssim, MatchesExplicitWindowOracle) {
  RngStream rng(5);
  const RealImage ref = magnitude(make_phantom(RngStream(6), 24, 20, 6));
  RealImage x = ref;
  for (auto& v : x.data) v = std::abs(v + 0.05 * rng.normal());
  double range = 0.0;
  for (double v : ref.data) range = std::max(range, v);
  EXPECT_NEAR(ssim(x, ref), oracle::ssim(x.data, ref.data, 24, 20, range), 1e-10);
}

TEST(Ssim, InvertedContrastScoresLow) {
  const RealImage ref = magnitude(make_phantom(RngStream(7), 64, 64, 8));
  double mx = 0.0;
  for (double v : ref.data) mx = std::max(mx, v);
  RealImage inv = ref;
  for (auto& v : inv.data) v = mx - v;
  EXPECT_LT(ssim(inv, ref), 0.5);
}

TEST(Ssim, MoreNoiseLowersScore) {
  const RealImage ref = magnitude(make_phantom(RngStream(8), 64, 64, 8));
  RngStream rng(9);
  RealImage lo = ref, hi = ref;
  for (std::size_t i = 0; i < ref.data.size(); ++i) {
    const double n = rng.normal();
    lo.data[i] = std::abs(ref.data[i] + 0.01 * n);
    hi.data[i] = std::abs(ref.data[i] + 0.1 * n);
  }
  EXPECT_LT(ssim(hi, ref), ssim(lo, ref));
}

TEST(Ssim, SymmetricWhenPeaksMatch) {
  RngStream rng(10);
  RealImage a(16, 16), b(16, 16);
  for (auto& v : a.data) v = rng.uniform(0.0, 1.0);
  for (auto& v : b.data) v = rng.uniform(0.0, 1.0);
  a.data[0] = b.data[0] = 1.0;
  EXPECT_NEAR(ssim(a, b), ssim(b, a), 1e-12);
}

TEST(Ssim, RejectsSmallImages) {
  EXPECT_THROW(ssim(RealImage(10, 20), RealImage(10, 20)), ValidationError);
}

TEST(MetricTable, MeansAndCsv) {
  MetricTable t;
  t.rows = {{"a", 30.0, 0.8}, {"b", 40.0, 0.9}};
  EXPECT_DOUBLE_EQ(t.mean_psnr(), 35.0);
  EXPECT_DOUBLE_EQ(t.mean_ssim(), 0.85);
  const auto p = std::filesystem::temp_directory_path() / "autosamp_metrics.csv";
  write_metrics_csv(p.string(), t);
  std::ifstream in(p);
  std::string header;
  std::getline(in, header);
  EXPECT_EQ(header, "id,psnr,ssim");
  int lines = 0;
  for (std::string l; std::getline(in, l);) ++lines;
  EXPECT_EQ(lines, 3);
}
