#include <gtest/gtest.h>

#include "autosamp/acquisition.hpp"
#include "oracles.hpp"

using namespace autosamp;

namespace {

ComplexImage random_image(RngStream& rng, int h, int w) {
  ComplexImage x(h, w);
  x.data = cgauss(rng, x.size(), 1.0);
  return x;
}

SamplingPattern random_pattern(RngStream& rng, GridSize g, int m) {
  SamplingPattern p;
  p.grid = g;
  for (int i = 0; i < m; ++i) p.points.push_back({rng.uniform(-0.5, 0.5), rng.uniform(-0.5, 0.5)});
  p.frozen.assign(p.points.size(), 0);
  return p;
}

}  // namespace

TEST(Acquisition, SingleUniformCoilReducesToNufft) {
  RngStream rng(1);
  const auto p = random_pattern(rng, {10, 10}, 30);
  const AcquisitionModel m(p, make_coils(10, 10, 1, CoilMode::uniform), 0.0);
  const ComplexImage x = random_image(rng, 10, 10);
  EXPECT_EQ(m.forward(x).values, nufft_forward(x, p.points));
  const CxVec y = cgauss(rng, 30, 1.0);
  KspaceData d(30, 1);
  d.values = y;
  EXPECT_LT(oracle::max_abs_diff(m.adjoint(d).data, nufft_adjoint(y, p.points, KbParams{}, 10, 10).data), 1e-14);
}

TEST(Acquisition, MatchesPerCoilDirectSum) {
  RngStream rng(2);
  const auto p = random_pattern(rng, {8, 8}, 20);
  const CoilSet coils = make_coils(8, 8, 4, CoilMode::gaussian_array, RngStream(3));
  const AcquisitionModel m(p, coils, 0.0, KbParams::analysis());
  const ComplexImage x = random_image(rng, 8, 8);
  const KspaceData y = m.forward(x);
  for (int c = 0; c < 4; ++c) {
    ComplexImage sx(8, 8);
    for (std::size_t i = 0; i < sx.size(); ++i) sx.data[i] = coils.maps[c].data[i] * x.data[i];
    const CxVec want = oracle::nudft(sx, p.points);
    const auto got = y.coil(c);
    EXPECT_LT(oracle::rel_l2(CxVec(got.begin(), got.end()), want), 1e-3);
  }
}

TEST(Acquisition, LinearInImage) {
  RngStream rng(3);
  const auto p = random_pattern(rng, {12, 12}, 40);
  const AcquisitionModel m(p, make_coils(12, 12, 4, CoilMode::gaussian_array, RngStream(1)), 0.0);
  const ComplexImage a = random_image(rng, 12, 12), b = random_image(rng, 12, 12);
  const cx alpha(0.3, -1.2);
  KspaceData lhs = m.forward(alpha * a + b);
  KspaceData rhs = m.forward(a);
  rhs *= alpha;
  rhs += m.forward(b);
  EXPECT_LT(oracle::max_abs_diff(lhs.values, rhs.values), 1e-12 * oracle::max_abs(rhs.values));
}

TEST(Acquisition, AdjointDotTestAcrossCoilCounts) {
  RngStream rng(4);
  for (int c : {1, 4, 8}) {
    for (int trial = 0; trial < 5; ++trial) {
      const int n = 6 + static_cast<int>(rng.below(20));
      const auto p = random_pattern(rng, {n, n}, 10 + static_cast<int>(rng.below(80)));
      const CoilSet coils = c == 1 ? make_coils(n, n, 1, CoilMode::uniform) : make_coils(n, n, c, CoilMode::gaussian_array, rng.split(trial));
      const AcquisitionModel m(p, coils, 0.0);
      const ComplexImage x = random_image(rng, n, n);
      KspaceData y(m.samples(), c);
      y.values = cgauss(rng, y.values.size(), 1.0);
      const cx lhs = inner(m.forward(x).values, y.values);
      const cx rhs = inner(x, m.adjoint(y));
      EXPECT_LT(std::abs(lhs - rhs), 1e-10 * std::abs(lhs)) << "C=" << c;
    }
  }
}

TEST(Acquisition, ZeroDataGivesZeroImage) {
  RngStream rng(5);
  const auto p = random_pattern(rng, {8, 8}, 10);
  const AcquisitionModel m(p, make_coils(8, 8, 2, CoilMode::gaussian_array), 0.0);
  EXPECT_EQ(norm2(m.adjoint(KspaceData(10, 2))), 0.0);
}

TEST(Acquisition, MeasureNoiseStatistics) {
  RngStream rng(6);
  const auto p = random_pattern(rng, {16, 16}, 12500);
  const AcquisitionModel m(p, make_coils(16, 16, 8, CoilMode::gaussian_array), 0.3);
  const ComplexImage x = random_image(rng, 16, 16);
  const KspaceData clean = m.forward(x);
  RngStream noise(7);
  const KspaceData z1 = m.measure(x, noise);
  const KspaceData z2 = m.measure(x, noise);
  double s = 0.0;
  for (std::size_t i = 0; i < z1.values.size(); ++i) s += std::norm(z1.values[i] - clean.values[i]);
  EXPECT_NEAR(s / z1.values.size(), 0.09, 0.05 * 0.09);
  EXPECT_NE(z1.values, z2.values);
  RngStream again(7);
  EXPECT_EQ(m.measure(x, again).values, z1.values);
  const AcquisitionModel quiet(p, make_coils(16, 16, 8, CoilMode::gaussian_array), 0.0);
  RngStream r3(1);
  EXPECT_EQ(quiet.measure(x, r3).values, clean.values);
}

TEST(Acquisition, MultiplicityActsLikeRepeatedSamples) {
  RngStream rng(8);
  SamplingPattern rep = random_pattern(rng, {8, 8}, 3);
  SamplingPattern weighted = rep;
  weighted.multiplicity = {1, 3, 2};
  rep.points = {rep.points[0], rep.points[1], rep.points[1], rep.points[1], rep.points[2], rep.points[2]};
  rep.frozen.assign(6, 0);
  const CoilSet coils = make_coils(8, 8, 2, CoilMode::gaussian_array);
  const AcquisitionModel a(rep, coils, 0.0), b(weighted, coils, 0.0);
  const ComplexImage x = random_image(rng, 8, 8);
  const ComplexImage ra = a.normal(x), rb = b.normal(x);
  EXPECT_LT(oracle::max_abs_diff(ra.data, rb.data), 1e-12 * oracle::max_abs(ra.data));
}

TEST(Acquisition, OperatorNormStable) {
  RngStream rng(9);
  const auto p = random_pattern(rng, {16, 16}, 100);
  const AcquisitionModel m(p, make_coils(16, 16, 4, CoilMode::gaussian_array), 0.0);
  const double a = m.operator_norm(), b = m.operator_norm();
  EXPECT_TRUE(std::isfinite(a));
  EXPECT_NEAR(a, b, 1e-6);
  EXPECT_GT(a, 0.0);
}

TEST(Acquisition, CoordinateVjpsMatchFiniteDifferences) {
  RngStream rng(10);
  const auto p = random_pattern(rng, {8, 8}, 6);
  const CoilSet coils = make_coils(8, 8, 3, CoilMode::gaussian_array, RngStream(2));
  const ComplexImage x = random_image(rng, 8, 8);
  KspaceData u(6, 3);
  u.values = cgauss(rng, u.values.size(), 1.0);
  const AcquisitionModel m(p, coils, 0.0);
  const auto gf = m.forward_coord_vjp(x, u);
  const auto ga = m.adjoint_coord_vjp(x, u);
  const double h = 1e-6;
  for (std::size_t i = 0; i < 6; ++i) {
    auto shifted = [&](double dx) {
      SamplingPattern q = p;
      q.points[i].kx += dx;
      return AcquisitionModel(q, coils, 0.0);
    };
    const double fd_f = (inner(u.values, shifted(h).forward(x).values).real() - inner(u.values, shifted(-h).forward(x).values).real()) / (2 * h);
    const double fd_a = (inner(x, shifted(h).adjoint(u)).real() - inner(x, shifted(-h).adjoint(u)).real()) / (2 * h);
    EXPECT_NEAR(gf[i].dkx, fd_f, 1e-4 * std::max(1.0, std::abs(fd_f)));
    EXPECT_NEAR(ga[i].dkx, fd_a, 1e-4 * std::max(1.0, std::abs(fd_a)));
  }
}

TEST(Acquisition, ShapeChecks) {
  RngStream rng(11);
  const auto p = random_pattern(rng, {8, 8}, 4);
  EXPECT_THROW(AcquisitionModel(p, make_coils(9, 8, 1, CoilMode::uniform), 0.0), ValidationError);
  EXPECT_THROW(AcquisitionModel(p, make_coils(8, 8, 1, CoilMode::uniform), -1.0), ValidationError);
  const AcquisitionModel m(p, make_coils(8, 8, 1, CoilMode::uniform), 0.0);
  EXPECT_THROW(m.forward(ComplexImage(4, 4)), ValidationError);
  EXPECT_THROW(m.adjoint(KspaceData(3, 1)), ValidationError);
}

TEST(Acquisition, KspaceArrayRoundTrip) {
  KspaceData d(5, 3);
  RngStream rng(12);
  d.values = cgauss(rng, 15, 1.0);
  const Array a = kspace_to_array(d);
  EXPECT_EQ(a.shape, (std::vector<std::int64_t>{5, 3}));
  EXPECT_EQ(kspace_from_array(a).values, d.values);
}
