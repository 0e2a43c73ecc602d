#include <gtest/gtest.h>

#include <filesystem>
#include <fstream>

#include "autosamp/analysis.hpp"
#include "autosamp/metrics.hpp"
#include "oracles.hpp"

using namespace autosamp;

namespace {

SamplingPattern from_points(std::vector<SamplePoint> pts, GridSize g = {16, 16}) {
  SamplingPattern p;
  p.grid = g;
  p.points = std::move(pts);
  p.frozen.assign(p.points.size(), 0);
  return p;
}

double sum(const std::vector<double>& v) {
  double s = 0.0;
  for (double x : v) s += x;
  return s;
}

}  // namespace

TEST(Psf, FullCartesianIsDelta) {
  const GridSize g{16, 16};
  const PsfResult r = psf(gen_cartesian(g), g);
  EXPECT_NEAR(std::abs(r.psf(8, 8)), 1.0, 1e-12);
  for (int row = 0; row < 16; ++row)
    for (int c = 0; c < 16; ++c)
      if (row != 8 || c != 8) {
        EXPECT_LT(std::abs(r.psf(row, c)), 1e-6);
      }
  EXPECT_EQ(r.profile.size(), 16u);
}

TEST(Psf, SingleOriginSampleIsFlat) {
  const GridSize g{12, 10};
  const PsfResult r = psf(from_points({{0.0, 0.0}}, g), g);
  for (const auto& v : r.psf.data) EXPECT_NEAR(std::abs(v), 1.0, 1e-9);
}

TEST(Psf, MatchesDirectSummation) {
  RngStream rng(1);
  for (int trial = 0; trial < 5; ++trial) {
    std::vector<SamplePoint> pts;
    for (int i = 0; i < 10; ++i) pts.push_back({rng.uniform(-0.5, 0.5), rng.uniform(-0.5, 0.5)});
    const GridSize g{20, 16};
    const PsfResult r = psf(from_points(pts, g), g);
    const ComplexImage want = oracle::psf(pts, 20, 16);
    EXPECT_LT(oracle::max_abs_diff(r.psf.data, want.data), 1e-3);
  }
}

TEST(Psf, UnitPeakAtCenterForAnyPattern) {
  RngStream rng(2);
  PatternOptions opt;
  opt.calib = 8;
  const GridSize g{32, 32};
  const auto p = gen_vd_poisson(rng, g, 4.0, 0.02, opt);
  const PsfResult r = psf(p, g);
  double peak = 0.0;
  for (const auto& v : r.psf.data) peak = std::max(peak, std::abs(v));
  EXPECT_NEAR(peak, 1.0, 1e-12);
  EXPECT_NEAR(std::abs(r.psf(16, 16)), 1.0, 1e-12);
  EXPECT_LT(r.peak_sidelobe_db, 0.0);
  EXPECT_GE(r.main_lobe_halfwidth, 1);
}

TEST(Psf, MultiplicityMatchesRepeatedPoints) {
  const GridSize g{8, 8};
  SamplingPattern rep = from_points({{0.1, 0.2}, {0.1, 0.2}, {-0.3, 0.0}}, g);
  SamplingPattern w = from_points({{0.1, 0.2}, {-0.3, 0.0}}, g);
  w.multiplicity = {2, 1};
  EXPECT_LT(oracle::max_abs_diff(psf(rep, g).psf.data, psf(w, g).psf.data), 1e-12);
  EXPECT_THROW(psf(SamplingPattern{}, g), ValidationError);
}

TEST(Voronoi, TwoSymmetricPointsSplitEvenly) {
  const auto vs = voronoi_areas(from_points({{-0.2, 0.1}, {0.2, -0.1}}), 256);
  EXPECT_NEAR(vs.area[0] / vs.domain_area, 0.5, 0.02);
  EXPECT_NEAR(vs.area[1] / vs.domain_area, 0.5, 0.02);
}

TEST(Voronoi, AreasPartitionTheDomain) {
  RngStream rng(3);
  for (bool cut : {false, true}) {
    PatternOptions opt;
    opt.calib = 4;
    opt.corner_cut = cut;
    const auto p = gen_uniform(rng, {32, 32}, 4.0, 1.0, opt);
    const auto vs = voronoi_areas(p, 512);
    EXPECT_NEAR(sum(vs.area), vs.domain_area, 0.01 * vs.domain_area);
    EXPECT_NEAR(vs.domain_area, cut ? std::numbers::pi * 0.25 : 1.0, 0.01);
  }
}

TEST(Voronoi, RegularGridInteriorCellsEqual) {
  std::vector<SamplePoint> pts;
  for (int r = 0; r < 4; ++r)
    for (int c = 0; c < 4; ++c) pts.push_back({-0.375 + 0.25 * c, -0.375 + 0.25 * r});
  const auto vs = voronoi_areas(from_points(pts), 512);
  for (int r = 1; r < 3; ++r)
    for (int c = 1; c < 3; ++c) EXPECT_NEAR(vs.area[r * 4 + c], 1.0 / 16.0, 0.02 / 16.0);
}

TEST(Voronoi, PermutationInvariant) {
  RngStream rng(4);
  std::vector<SamplePoint> pts;
  for (int i = 0; i < 40; ++i) pts.push_back({rng.uniform(-0.5, 0.5), rng.uniform(-0.5, 0.5)});
  const auto a = voronoi_areas(from_points(pts), 256);
  std::vector<SamplePoint> rev(pts.rbegin(), pts.rend());
  const auto b = voronoi_areas(from_points(rev), 256);
  for (std::size_t i = 0; i < pts.size(); ++i) EXPECT_DOUBLE_EQ(a.area[i], b.area[pts.size() - 1 - i]);
}

TEST(Voronoi, RefinementConverges) {
  RngStream rng(5);
  std::vector<SamplePoint> pts;
  for (int i = 0; i < 12; ++i) pts.push_back({rng.uniform(-0.5, 0.5), rng.uniform(-0.5, 0.5)});
  const auto a = voronoi_areas(from_points(pts), 1024);
  const auto b = voronoi_areas(from_points(pts), 2048);
  for (std::size_t i = 0; i < pts.size(); ++i) EXPECT_NEAR(a.area[i], b.area[i], 0.01 * b.area[i]) << i;
}

TEST(Voronoi, CoincidentPointsTieToLowestIndex) {
  const auto vs = voronoi_areas(from_points({{0.1, 0.1}, {0.1, 0.1}, {-0.2, -0.2}}), 128);
  EXPECT_GT(vs.area[0], 0.0);
  EXPECT_EQ(vs.area[1], 0.0);
  EXPECT_THROW(voronoi_areas(from_points({{0.1, 0.1}, {0.1, 0.1}}), 64), ValidationError);
}

TEST(RadialFit, SyntheticExamples) {
  VoronoiSummary vs;
  for (int i = 1; i <= 20; ++i) {
    vs.radius.push_back(0.02 * i);
    vs.area.push_back(3.0 * 0.02 * i);
    vs.calibration.push_back(0);
  }
  EXPECT_NEAR(radial_density_fit(vs), 1.0, 1e-6);
  for (auto& a : vs.area) a = 0.01;
  EXPECT_NEAR(radial_density_fit(vs), 0.0, 1e-12);
  for (auto& r : vs.radius) r = 0.3;
  EXPECT_THROW(radial_density_fit(vs), ValidationError);
  vs.area.resize(5);
  vs.radius.resize(5);
  vs.calibration.resize(5);
  EXPECT_THROW(radial_density_fit(vs), ValidationError);
}

TEST(RadialFit, InverseSqrtDensityGivesHalfExponent) {
  // density ~ k_r^(-1/2) in 2-D: radial CDF ~ r^(3/2) on the disc of radius 0.5.
  RngStream rng(6);
  std::vector<SamplePoint> pts;
  for (int i = 0; i < 600; ++i) {
    const double r = 0.5 * std::pow(rng.uniform(), 2.0 / 3.0);
    const double a = rng.uniform(0.0, 2.0 * std::numbers::pi);
    pts.push_back({r * std::cos(a), r * std::sin(a)});
  }
  SamplingPattern p = from_points(pts);
  p.corner_cut = true;
  const auto vs = voronoi_areas(p, 1024);
  EXPECT_NEAR(radial_density_fit(vs), 0.5, 0.1);
}

TEST(Writers, ProfileCsvAndPgmRoundTrip) {
  const auto dir = std::filesystem::temp_directory_path() / "autosamp_analysis_test";
  std::filesystem::create_directories(dir);
  const GridSize g{8, 8};
  const PsfResult r = psf(gen_cartesian(g), g);
  write_psf_profile_csv((dir / "profile.csv").string(), r);
  std::ifstream in(dir / "profile.csv");
  std::string header;
  std::getline(in, header);
  EXPECT_EQ(header, "offset,magnitude,power");
  int peaks = 0, rows = 0;
  for (std::string line; std::getline(in, line); ++rows) {
    const auto c1 = line.find(','), c2 = line.find(',', c1 + 1);
    if (std::stod(line.substr(c1 + 1, c2 - c1 - 1)) > 0.5) ++peaks;
  }
  EXPECT_EQ(rows, 8);
  EXPECT_EQ(peaks, 1);

  const RealImage mag = magnitude(r.psf);
  write_pgm16((dir / "psf.pgm").string(), mag);
  const Pgm16 back = read_pgm16((dir / "psf.pgm").string());
  EXPECT_EQ(back.width, 8);
  EXPECT_EQ(back.height, 8);
  EXPECT_EQ(back.data[8 * 4 + 4], 65535);
}
