#include <gtest/gtest.h>

#include <algorithm>

#include "autosamp/grad.hpp"

using namespace autosamp;

class GradCheckOp : public ::testing::TestWithParam<std::string> {};

TEST_P(GradCheckOp, PassesAtDefaultTolerance) {
  for (std::uint64_t seed : {1u, 2u}) {
    const GradCheckReport rep = grad_check(GetParam(), seed);
    ASSERT_FALSE(rep.groups.empty());
    for (const auto& g : rep.groups) EXPECT_TRUE(g.pass) << g.group << " err=" << g.max_rel_err << " " << g.note;
    if (GetParam() != "instance_norm_constant") {
      EXPECT_LE(rep.max_rel_err(), 1e-3);
    }
  }
}

INSTANTIATE_TEST_SUITE_P(AllOps, GradCheckOp, ::testing::ValuesIn(grad_check_ops()),
                         [](const auto& info) { return info.param; });

TEST(GradCheck, ConstantChannelIsSkippedNotFailed) {
  const GradCheckReport rep = grad_check("instance_norm_constant", 3);
  bool saw_skip = false;
  for (const auto& g : rep.groups) {
    if (g.status == "skipped") saw_skip = true;
    EXPECT_NE(g.status, "failed");
  }
  EXPECT_TRUE(saw_skip);
  EXPECT_TRUE(rep.pass());
}

TEST(GradCheck, UnknownOpAndJsonShape) {
  EXPECT_THROW(grad_check("no_such_op", 1), ValidationError);
  const auto j = to_json(grad_check("kb_deriv", 1));
  EXPECT_EQ(j["op"], "kb_deriv");
  ASSERT_TRUE(j["groups"].is_array());
  for (const char* key : {"op", "group", "max_rel_err", "pass"}) EXPECT_TRUE(j["groups"][0].contains(key)) << key;
}

TEST(GradCheck, DetectsAWrongGradient) {
  const auto f = [](const std::vector<double>& v) { return v[0] * v[0] + 3.0 * v[1]; };
  const GroupReport ok = check_group("ok", {0.7, 0.2}, f, {1.4, 3.0}, all_indices(0, 2), 1e-5, 1e-3);
  EXPECT_TRUE(ok.pass);
  const GroupReport bad = check_group("bad", {0.7, 0.2}, f, {1.4, 3.1}, all_indices(0, 2), 1e-5, 1e-3);
  EXPECT_FALSE(bad.pass);
  EXPECT_EQ(bad.status, "failed");
}

TEST(Loss, L1SubgradientIsZeroAtExactRecon) {
  RngStream rng(1);
  ComplexImage x(6, 6);
  x.data = cgauss(rng, x.size(), 1.0);
  const LossValue lv = image_loss(LossKind::l1, x, x);
  EXPECT_EQ(lv.value, 0.0);
  EXPECT_EQ(norm2(lv.grad), 0.0);
}

TEST(Loss, L1GradientMagnitudesAreZeroOrOneOverN) {
  RngStream rng(2);
  ComplexImage a(8, 8), b(8, 8);
  a.data = cgauss(rng, a.size(), 1.0);
  b = a;
  for (std::size_t i = 0; i < b.size(); i += 3) b.data[i] += cx(rng.normal(), rng.normal());
  const LossValue lv = image_loss(LossKind::l1, b, a);
  const double n = 64.0;
  for (const auto& g : lv.grad.data) {
    const double m = std::abs(g);
    EXPECT_TRUE(m == 0.0 || std::abs(m * n - 1.0) < 1e-12) << m;
  }
}

TEST(Loss, L2ValueAndGradient) {
  ComplexImage a(2, 2), b(2, 2);
  b.data = {cx(1, 0), cx(0, 1), cx(0, 0), cx(-1, 1)};
  const LossValue lv = image_loss(LossKind::l2, b, a);
  EXPECT_DOUBLE_EQ(lv.value, (1.0 + 1.0 + 0.0 + 2.0) / 4.0);
  EXPECT_EQ(lv.grad.data[3], cx(-0.5, 0.5));
}

namespace {

struct Instance {
  detail::PipelineInstance inst;
  ReconModel recon;
  AcquisitionModel model;
  KspaceData z;
};

Instance make_setup(std::uint64_t seed, ProxKind kind) {
  auto inst = detail::pipeline_instance(seed);
  UnrolledConfig cfg;
  cfg.n_unrolls = 2;
  cfg.prox_kind = kind;
  cfg.channels = 3;
  cfg.n_resblocks = 1;
  cfg.tau_init = 0.05;
  ReconModel recon = ReconModel::init(cfg, seed);
  AcquisitionModel m = inst.model(inst.pattern.points);
  KspaceData z = inst.measure(m);
  return {std::move(inst), std::move(recon), std::move(m), std::move(z)};
}

}  // namespace

TEST(Backward, PhiGradientIsSumOfPaths) {
  for (ProxKind kind : {ProxKind::cnn, ProxKind::wavelet}) {
    const Instance s = make_setup(4, kind);
    const auto full = backward(LossKind::l1, s.inst.x_true, s.z, s.model, s.recon).grads.d_phi;
    std::vector<PointGrad> sum(full.size());
    auto add_path = [&](GradPaths p) {
      const auto part = backward(LossKind::l1, s.inst.x_true, s.z, s.model, s.recon, p).grads.d_phi;
      for (std::size_t i = 0; i < sum.size(); ++i) {
        sum[i].dkx += part[i].dkx;
        sum[i].dky += part[i].dky;
      }
    };
    GradPaths p = GradPaths::none(2);
    p.encoder = true;
    add_path(p);
    p = GradPaths::none(2);
    p.x0 = true;
    add_path(p);
    for (int i = 0; i < 2; ++i) {
      p = GradPaths::none(2);
      p.dc[static_cast<std::size_t>(i)] = true;
      add_path(p);
    }
    double scale = 0.0;
    for (const auto& g : full) scale = std::max({scale, std::abs(g.dkx), std::abs(g.dky)});
    for (std::size_t i = 0; i < full.size(); ++i) {
      EXPECT_NEAR(sum[i].dkx, full[i].dkx, 1e-12 * scale);
      EXPECT_NEAR(sum[i].dky, full[i].dky, 1e-12 * scale);
    }
    // Every path carries signal.
    const auto none = backward(LossKind::l1, s.inst.x_true, s.z, s.model, s.recon, GradPaths::none(2)).grads.d_phi;
    for (const auto& g : none) EXPECT_EQ(g.dkx, 0.0);
  }
}

TEST(Backward, PermutingPointsPermutesPhiGradient) {
  const Instance s = make_setup(5, ProxKind::cnn);
  const auto base = backward(LossKind::l1, s.inst.x_true, s.z, s.model, s.recon).grads.d_phi;
  auto pts = s.inst.pattern.points;
  std::swap(pts[2], pts[9]);
  const AcquisitionModel m2 = s.inst.model(pts);
  KspaceData z2 = s.z;
  const int coils = s.model.coil_count();
  const auto M = static_cast<std::size_t>(s.model.samples());
  for (int c = 0; c < coils; ++c) std::swap(z2.values[c * M + 2], z2.values[c * M + 9]);
  const auto perm = backward(LossKind::l1, s.inst.x_true, z2, m2, s.recon).grads.d_phi;
  auto close = [](PointGrad a, PointGrad b) {
    return std::abs(a.dkx - b.dkx) <= 1e-9 * (1.0 + std::abs(a.dkx)) && std::abs(a.dky - b.dky) <= 1e-9 * (1.0 + std::abs(a.dky));
  };
  EXPECT_TRUE(close(perm[2], base[9]));
  EXPECT_TRUE(close(perm[9], base[2]));
  EXPECT_TRUE(close(perm[0], base[0]));
}

TEST(Backward, MatchesForwardLossAndIsDeterministic) {
  const Instance s = make_setup(6, ProxKind::cnn);
  const auto a = backward(LossKind::l2, s.inst.x_true, s.z, s.model, s.recon);
  const auto b = backward(LossKind::l2, s.inst.x_true, s.z, s.model, s.recon);
  EXPECT_EQ(a.loss, forward_loss(LossKind::l2, s.inst.x_true, s.z, s.model, s.recon));
  EXPECT_EQ(a.grads.d_theta, b.grads.d_theta);
  EXPECT_EQ(a.x_hat, unrolled_recon(s.z, s.model, s.recon));
}

TEST(Backward, NonFiniteInputNamesStage) {
  Instance s = make_setup(7, ProxKind::wavelet);
  s.z.values[0] = cx(std::numeric_limits<double>::quiet_NaN(), 0.0);
  try {
    backward(LossKind::l1, s.inst.x_true, s.z, s.model, s.recon);
    FAIL();
  } catch (const NumericalError& e) {
    EXPECT_NE(std::string(e.what()).find("zero-filled adjoint"), std::string::npos) << e.what();
  }
}
