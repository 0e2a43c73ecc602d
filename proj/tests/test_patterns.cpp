#include <gtest/gtest.h>

#include <filesystem>
#include <set>

#include "autosamp/patterns.hpp"

using namespace autosamp;

namespace {

const GridSize kGrid{64, 64};

bool on_cartesian(SamplePoint p, GridSize g) {
  const double x = p.kx * g.width, y = p.ky * g.height;
  return x == std::round(x) && y == std::round(y);
}

/// Kolmogorov-Smirnov distance between sample radii and the uniform-disc
/// law F(r) = (r / 0.5)^2.
double ks_uniform_disc(std::vector<double> r) {
  std::sort(r.begin(), r.end());
  double d = 0.0;
  const double n = static_cast<double>(r.size());
  for (std::size_t i = 0; i < r.size(); ++i) {
    const double f = std::min(1.0, (r[i] / 0.5) * (r[i] / 0.5));
    d = std::max({d, std::abs(f - i / n), std::abs(f - (i + 1) / n)});
  }
  return d;
}

}  // namespace

TEST(Grid, Parse) {
  EXPECT_EQ(parse_grid("64x32"), (GridSize{64, 32}));
  EXPECT_EQ(parse_grid("64"), (GridSize{64, 64}));
  EXPECT_THROW(parse_grid("64xq"), ValidationError);
  EXPECT_THROW(parse_grid("0x4"), ValidationError);
}

TEST(Project, ClampsAndIsIdempotent) {
  const SamplePoint p = project(SamplePoint{0.7, -0.6});
  EXPECT_EQ(p.kx, 0.5 - std::ldexp(1.0, -20));
  EXPECT_EQ(p.ky, -0.5);
  EXPECT_EQ(project(p), p);
  const SamplePoint q{0.1, -0.2};
  EXPECT_EQ(project(q), q);
}

TEST(Calibration, BlockIsExactCartesianSquare) {
  const auto pts = calibration_block(kGrid, 20);
  ASSERT_EQ(pts.size(), 400u);
  std::set<std::pair<double, double>> uniq;
  for (const auto& p : pts) {
    EXPECT_TRUE(on_cartesian(p, kGrid));
    EXPECT_GE(p.kx * 64, -10);
    EXPECT_LE(p.kx * 64, 9);
    uniq.insert({p.kx, p.ky});
  }
  EXPECT_EQ(uniq.size(), 400u);
  EXPECT_THROW(calibration_block(GridSize{8, 8}, 9), ValidationError);
}

TEST(Uniform, CountsAndCalibrationOnlyBoundary) {
  RngStream rng(1);
  PatternOptions opt;
  opt.calib = 8;
  const auto p = gen_uniform(rng, kGrid, 5.0, 1.0, opt);
  EXPECT_EQ(p.size(), static_cast<std::size_t>(target_sample_count(kGrid, 5.0)));
  EXPECT_EQ(p.n_calib, 64);
  // M = calib^2 exactly
  const auto q = gen_uniform(rng, kGrid, 4096.0 / 64.0, 1.0, opt);
  EXPECT_EQ(q.size(), 64u);
  EXPECT_EQ(q.n_calib, 64);
  EXPECT_THROW(gen_uniform(rng, kGrid, 100.0, 1.0, opt), ValidationError);
}

TEST(Uniform, SmallDiscSupport) {
  PatternOptions opt;
  opt.calib = 8;
  opt.corner_cut = true;
  const auto p = gen_uniform(RngStream(2), kGrid, 5.0, 0.5, opt);
  for (std::size_t i = 0; i < p.size(); ++i) {
    if (p.is_calibration(i)) continue;
    EXPECT_LE(std::hypot(p.points[i].kx, p.points[i].ky), 0.25 + 1e-12);
  }
}

TEST(Uniform, DiscMeanRadius) {
  PatternOptions opt;
  opt.calib = 0;
  opt.corner_cut = true;
  const GridSize g{256, 256};
  const auto p = gen_uniform(RngStream(3), g, 2.0, 1.0, opt);
  double s = 0, s2 = 0;
  for (const auto& q : p.points) {
    const double r = std::hypot(q.kx, q.ky);
    s += r;
    s2 += r * r;
  }
  const double n = static_cast<double>(p.size());
  const double mean = s / n;
  const double se = std::sqrt((s2 / n - mean * mean) / n);
  EXPECT_NEAR(mean, 2.0 / 3.0 * 0.5, 3 * se);
}

TEST(VdGaussian, CornerCutAndDensityTrend) {
  PatternOptions opt;
  opt.calib = 0;
  opt.corner_cut = true;
  const auto p = gen_vd_gaussian(RngStream(4), GridSize{128, 128}, 128.0 * 128.0 / 10000.0, 0.25, opt);
  ASSERT_EQ(p.size(), 10000u);
  std::vector<int> hist(5, 0);
  for (const auto& q : p.points) {
    const double r = std::hypot(q.kx, q.ky);
    ASSERT_LT(r, 0.5);
    // Annulus density: counts per unit area.
    hist[static_cast<std::size_t>(r / 0.1)]++;
  }
  std::vector<double> density;
  for (int b = 0; b < 5; ++b) density.push_back(hist[b] / (std::numbers::pi * (std::pow(0.1 * (b + 1), 2) - std::pow(0.1 * b, 2))));
  for (int b = 0; b + 1 < 5; ++b) EXPECT_GT(density[b], density[b + 1]) << b;
}

TEST(VdGaussian, WideStdApproachesUniform) {
  PatternOptions opt;
  opt.calib = 0;
  opt.corner_cut = true;
  const auto p = gen_vd_gaussian(RngStream(5), GridSize{128, 128}, 128.0 * 128.0 / 10000.0, 10.0, opt);
  std::vector<double> r;
  for (const auto& q : p.points) r.push_back(std::hypot(q.kx, q.ky));
  EXPECT_LT(ks_uniform_disc(r), 0.05);
}

TEST(VdPoisson, HitsTargetCountAndSlopeGrowsWithR) {
  PatternOptions opt;
  opt.calib = 8;
  double prev = -1.0;
  for (double R : {5.0, 10.0, 15.0, 20.0}) {
    const auto p = gen_vd_poisson(RngStream(7), kGrid, R, 0.02, opt);
    const double target = target_sample_count(kGrid, R);
    EXPECT_LE(std::abs(static_cast<double>(p.size()) - target), 0.02 * target) << "R=" << R;
    ASSERT_TRUE(p.slope.has_value());
    EXPECT_GT(*p.slope, prev) << "R=" << R;
    prev = *p.slope;
    EXPECT_EQ(p.n_calib, 64);
  }
}

TEST(VdPoisson, MinimumDistanceProperty) {
  PatternOptions opt;
  opt.calib = 20;
  const auto p = gen_vd_poisson(RngStream(8), kGrid, 10.0, 0.02, opt);
  const double s = *p.slope;
  auto radius = [&](double x, double y) { return 1.0 + s * std::hypot(x, y) / 0.5; };
  for (std::size_t i = p.n_calib; i < p.size(); ++i)
    for (std::size_t j = i + 1; j < p.size(); ++j) {
      const auto a = p.points[i], b = p.points[j];
      const double d = std::hypot((a.kx - b.kx) * 64, (a.ky - b.ky) * 64);
      ASSERT_GE(d, 0.8 * radius(0.5 * (a.kx + b.kx), 0.5 * (a.ky + b.ky))) << i << "," << j;
    }
}

TEST(VdPoisson, NoFreePointInsideCalibrationRegion) {
  PatternOptions opt;
  opt.calib = 20;
  const auto p = gen_vd_poisson(RngStream(9), kGrid, 5.0, 0.02, opt);
  for (std::size_t i = p.n_calib; i < p.size(); ++i) {
    const double x = p.points[i].kx * 64, y = p.points[i].ky * 64;
    EXPECT_FALSE(x >= -10.5 && x < 9.5 && y >= -10.5 && y < 9.5);
  }
}

TEST(Generators, Deterministic) {
  PatternOptions opt;
  opt.calib = 8;
  EXPECT_EQ(gen_vd_poisson(RngStream(3), kGrid, 8.0, 0.02, opt), gen_vd_poisson(RngStream(3), kGrid, 8.0, 0.02, opt));
  EXPECT_EQ(gen_vd_gaussian(RngStream(3), kGrid, 8.0, 0.25, opt), gen_vd_gaussian(RngStream(3), kGrid, 8.0, 0.25, opt));
  EXPECT_NE(gen_uniform(RngStream(3), kGrid, 8.0, 1.0, opt), gen_uniform(RngStream(4), kGrid, 8.0, 1.0, opt));
}

TEST(Discretize, SnapsToNearestCartesianPoint) {
  SamplingPattern p;
  p.grid = {8, 8};
  p.points = {{0.126, -0.374}};
  p.frozen = {0};
  const auto d = discretize(p);
  ASSERT_EQ(d.size(), 1u);
  EXPECT_EQ(d.points[0].kx, 0.125);
  EXPECT_EQ(d.points[0].ky, -0.375);
}

TEST(Discretize, CartesianFixedPointAndDisplacementBound) {
  const auto cart = gen_cartesian(GridSize{8, 8});
  const auto d = discretize(cart);
  EXPECT_EQ(d.points, cart.points);
  EXPECT_EQ(d.multiplicity, std::vector<int>(64, 1));

  PatternOptions opt;
  opt.calib = 8;
  const auto p = gen_uniform(RngStream(11), kGrid, 4.0, 1.0, opt);
  const auto q = discretize(p);
  EXPECT_EQ(q.sample_count(), p.size());
  // Every original point is within half a cell diagonal of some snapped
  // point (periodically, since +0.5 wraps to -0.5).
  std::set<std::pair<double, double>> snapped;
  for (const auto& s : q.points) snapped.insert({s.kx, s.ky});
  for (const auto& o : p.points) {
    double best = 1e9;
    for (const auto& s : q.points) {
      double dx = std::abs(o.kx - s.kx), dy = std::abs(o.ky - s.ky);
      dx = std::min(dx, 1.0 - dx);
      dy = std::min(dy, 1.0 - dy);
      best = std::min(best, std::hypot(dx, dy));
    }
    EXPECT_LE(best, std::sqrt(2.0) / (2 * 64) + 1e-15);
  }
}

TEST(Discretize, CollapsesDuplicatesWithMultiplicity) {
  SamplingPattern p;
  p.grid = {8, 8};
  p.points = {{0.01, 0.0}, {-0.01, 0.02}, {0.25, 0.25}, {0.4999, 0.0}, {-0.5, 0.0}};
  p.frozen = {0, 1, 0, 0, 0};
  const auto d = discretize(p);
  ASSERT_EQ(d.size(), 3u);
  EXPECT_EQ(d.multiplicity, (std::vector<int>{2, 1, 2}));
  EXPECT_EQ(d.frozen[0], 1);
  EXPECT_EQ(d.points[2].kx, -0.5);
}

TEST(PatternFile, RoundTrip) {
  const auto dir = std::filesystem::temp_directory_path() / "autosamp_pattern_tests";
  PatternOptions opt;
  opt.calib = 8;
  opt.freeze_calib = true;
  auto p = gen_vd_poisson(RngStream(12), kGrid, 6.0, 0.02, opt);
  save_pattern(dir / "p.csv", p);
  EXPECT_EQ(load_pattern(dir / "p.csv"), p);
  const auto d = discretize(p);
  save_pattern(dir / "d.csv", d);
  EXPECT_EQ(load_pattern(dir / "d.csv"), d);
  std::ifstream js(dir / "p.json");
  const auto j = nlohmann::json::parse(js);
  for (const char* key : {"R", "calib", "corner_cut", "grid_h", "grid_w", "seed"}) EXPECT_TRUE(j.contains(key)) << key;
}

TEST(PatternFile, RejectsBadHeader) {
  const auto dir = std::filesystem::temp_directory_path() / "autosamp_pattern_tests";
  std::filesystem::create_directories(dir);
  save_pattern(dir / "bad.csv", gen_cartesian(GridSize{4, 4}));
  std::ofstream(dir / "bad.csv") << "x,y\n0,0\n";
  EXPECT_THROW(load_pattern(dir / "bad.csv"), IoError);
}
