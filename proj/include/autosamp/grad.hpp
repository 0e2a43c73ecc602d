#pragma once

// Reverse-mode gradients of the training loss with respect to the decoder
// parameters theta and the sample coordinates phi, plus a central-difference
// harness for every differentiable op.
//
// Convention: for a real loss L of complex y, the gradient is the complex g
// with dL = Re sum conj(g) dy.

#include <functional>
#include <map>
#include <string>
#include <vector>

#include "autosamp/acquisition.hpp"
#include "autosamp/cnn.hpp"
#include "autosamp/recon.hpp"
#include "json.hpp"

namespace autosamp {

enum class LossKind { l1, l2 };

inline std::string to_string(LossKind k) { return k == LossKind::l1 ? "l1" : "l2"; }

inline LossKind loss_kind_from_string(const std::string& s) {
  if (s == "l1") return LossKind::l1;
  if (s == "l2") return LossKind::l2;
  throw ValidationError("loss: expected 'l1' or 'l2', got '" + s + "'");
}

struct LossValue {
  double value = 0.0;
  ComplexImage grad;
};

/// Mean over pixels of |r| (l1) or |r|^2 (l2), r = x_hat - x_true.
inline LossValue image_loss(LossKind kind, const ComplexImage& x_hat, const ComplexImage& x_true) {
  x_hat.require_same(x_true);
  const double n = static_cast<double>(x_hat.size());
  LossValue out{0.0, ComplexImage(x_hat.height, x_hat.width)};
  for (std::size_t p = 0; p < x_hat.size(); ++p) {
    const cx r = x_hat.data[p] - x_true.data[p];
    if (kind == LossKind::l2) {
      out.value += std::norm(r);
      out.grad.data[p] = 2.0 * r / n;
    } else {
      const double m = std::abs(r);
      out.value += m;
      out.grad.data[p] = m > 0.0 ? r / (m * n) : cx{};
    }
  }
  out.value /= n;
  return out;
}

struct GradBundle {
  std::vector<double> d_theta;
  std::vector<PointGrad> d_phi;
};

/// Which phi-gradient paths contribute. Every path still propagates
/// gradients; a disabled path only withholds its own coordinate term.
struct GradPaths {
  bool encoder = true;
  bool x0 = true;
  std::vector<bool> dc;  // per unroll; empty enables all

  bool dc_enabled(int i) const { return dc.empty() || (static_cast<std::size_t>(i) < dc.size() && dc[static_cast<std::size_t>(i)]); }

  static GradPaths none(int n_unrolls) {
    GradPaths p;
    p.encoder = false;
    p.x0 = false;
    p.dc.assign(static_cast<std::size_t>(std::max(n_unrolls, 0)), false);
    if (p.dc.empty()) p.dc.push_back(false);
    return p;
  }
};

struct BackwardResult {
  double loss = 0.0;
  ComplexImage x_hat;
  GradBundle grads;
};

namespace detail {

inline void require_finite(const ComplexImage& x, const std::string& stage) {
  if (!x.all_finite()) throw NumericalError("non-finite value first seen at stage '" + stage + "'");
}

inline void accumulate(std::vector<PointGrad>& dst, const std::vector<PointGrad>& src, double scale = 1.0) {
  for (std::size_t i = 0; i < dst.size(); ++i) {
    dst[i].dkx += scale * src[i].dkx;
    dst[i].dky += scale * src[i].dky;
  }
}

}  // namespace detail

/// Loss and its exact gradient through z = A x_true + eps, x0 = A^H z, every
/// data-consistency step and every prox. The noise inside `z` is treated as
/// a constant.
inline BackwardResult backward(LossKind kind, const ComplexImage& x_true, const KspaceData& z, const AcquisitionModel& model,
                               const ReconModel& recon, const GradPaths& paths = {}) {
  ReconTrace trace;
  BackwardResult out;
  {
    out.x_hat = model.adjoint(z);
    detail::require_finite(out.x_hat, "zero-filled adjoint");
    trace.x0 = out.x_hat;
    for (int i = 0; i < recon.n_unrolls(); ++i) {
      ComplexImage v = data_consistency(out.x_hat, z, model, recon.step(i));
      detail::require_finite(v, "unroll " + std::to_string(i) + " data consistency");
      CnnTape* tape = recon.config().prox_kind == ProxKind::cnn ? &trace.tapes.emplace_back() : nullptr;
      trace.x_in.push_back(std::move(out.x_hat));
      out.x_hat = apply_prox(recon, i, v, tape);
      detail::require_finite(out.x_hat, "unroll " + std::to_string(i) + " prox");
      trace.v.push_back(std::move(v));
    }
  }
  LossValue lv = image_loss(kind, out.x_hat, x_true);
  if (!std::isfinite(lv.value)) throw NumericalError("non-finite value first seen at stage 'loss'");
  out.loss = lv.value;

  auto& d_theta = out.grads.d_theta;
  auto& d_phi = out.grads.d_phi;
  d_theta.assign(recon.size(), 0.0);
  d_phi.assign(static_cast<std::size_t>(model.samples()), PointGrad{});
  KspaceData g_z(model.samples(), model.coil_count());
  ComplexImage g = std::move(lv.grad);

  for (int i = recon.n_unrolls() - 1; i >= 0; --i) {
    const auto ui = static_cast<std::size_t>(i);
    // prox
    ComplexImage g_v;
    if (recon.config().prox_kind == ProxKind::wavelet) {
      auto [gx, dtau] = prox_wavelet_vjp(trace.v[ui], std::max(recon.tau(i), 0.0), g);
      g_v = std::move(gx);
      if (recon.tau(i) >= 0.0) d_theta[recon.prox_offset(i)] += dtau;
    } else {
      std::span<double> slot = std::span<double>(d_theta).subspan(recon.prox_offset(i), recon.prox_size());
      g_v = recon.cnn().backward(recon.prox_params(i), trace.tapes[ui], g, slot);
    }
    // v = x - 2t A^H r,  r = A x - z
    const double t = recon.step(i);
    const ComplexImage& x = trace.x_in[ui];
    KspaceData r = model.forward(x);
    r -= z;
    const ComplexImage ahr = model.adjoint(r);
    d_theta[recon.step_offset(i)] += -2.0 * inner(g_v, ahr).real();

    const KspaceData ag = model.forward(g_v);
    if (paths.dc_enabled(i)) {
      ComplexImage g_w = g_v;
      g_w *= cx(-2.0 * t, 0.0);
      KspaceData ag_w = ag;
      ag_w *= cx(-2.0 * t, 0.0);
      detail::accumulate(d_phi, model.adjoint_coord_vjp(g_w, r));
      detail::accumulate(d_phi, model.forward_coord_vjp(x, ag_w));
    }
    for (std::size_t k = 0; k < g_z.values.size(); ++k) g_z.values[k] += 2.0 * t * ag.values[k];
    ComplexImage aag = model.adjoint(ag);
    aag *= cx(-2.0 * t, 0.0);
    aag += g_v;
    g = std::move(aag);
  }

  // x0 = A^H z
  g_z += model.forward(g);
  if (paths.x0) detail::accumulate(d_phi, model.adjoint_coord_vjp(g, z));
  // z = A x_true + eps
  if (paths.encoder) detail::accumulate(d_phi, model.forward_coord_vjp(x_true, g_z));

  for (double v : d_theta)
    if (!std::isfinite(v)) throw NumericalError("non-finite value first seen at stage 'theta gradient'");
  for (const auto& p : d_phi)
    if (!std::isfinite(p.dkx) || !std::isfinite(p.dky)) throw NumericalError("non-finite value first seen at stage 'phi gradient'");
  return out;
}

/// Loss only, same forward pass as backward().
inline double forward_loss(LossKind kind, const ComplexImage& x_true, const KspaceData& z, const AcquisitionModel& model,
                           const ReconModel& recon) {
  return image_loss(kind, unrolled_recon(z, model, recon), x_true).value;
}

// ---------------------------------------------------------------------------
// Finite-difference harness.

struct GroupReport {
  std::string group;
  double max_rel_err = 0.0;
  int checked = 0;
  int skipped = 0;
  bool pass = true;
  std::string status = "ok";  // ok | failed | skipped
  std::string note;
};

struct GradCheckReport {
  std::string op;
  std::uint64_t seed = 0;
  double h = 1e-5;
  double tol = 1e-3;
  std::vector<GroupReport> groups;

  bool pass() const {
    for (const auto& g : groups)
      if (!g.pass) return false;
    return true;
  }
  double max_rel_err() const {
    double m = 0.0;
    for (const auto& g : groups)
      if (g.status != "skipped") m = std::max(m, g.max_rel_err);
    return m;
  }
};

inline nlohmann::ordered_json to_json(const GradCheckReport& r) {
  nlohmann::ordered_json groups = nlohmann::ordered_json::array();
  for (const auto& g : r.groups) {
    nlohmann::ordered_json j{{"op", r.op},       {"group", g.group},     {"max_rel_err", g.max_rel_err},
                             {"pass", g.pass},   {"status", g.status},   {"checked", g.checked},
                             {"skipped", g.skipped}};
    if (!g.note.empty()) j["note"] = g.note;
    groups.push_back(std::move(j));
  }
  return {{"op", r.op}, {"seed", r.seed}, {"h", r.h}, {"tol", r.tol}, {"pass", r.pass()}, {"groups", groups}};
}

/// Denominator floor for groups whose true gradient is (near) zero.
inline constexpr double kGradFloor = 1e-6;

/// Compares `analytic` with central differences of `f` at `x` over the
/// entries listed in `index`. An entry whose one-sided differences disagree
/// by more than its own error is straddling a kink and is skipped.
inline GroupReport check_group(const std::string& name, std::vector<double> x, const std::function<double(const std::vector<double>&)>& f,
                               const std::vector<double>& analytic, const std::vector<std::size_t>& index, double h, double tol) {
  GroupReport rep;
  rep.group = name;
  const double f0 = f(x);
  std::vector<double> fd, an;
  std::vector<double> d_plus, d_minus;
  for (std::size_t k : index) {
    const double keep = x[k];
    x[k] = keep + h;
    const double fp = f(x);
    x[k] = keep - h;
    const double fm = f(x);
    x[k] = keep;
    fd.push_back((fp - fm) / (2.0 * h));
    an.push_back(analytic[k]);
    d_plus.push_back((fp - f0) / h);
    d_minus.push_back((f0 - fm) / h);
  }
  double scale = 0.0;
  for (double v : fd) scale = std::max(scale, std::abs(v));
  const double denom = std::max(scale, kGradFloor);
  double worst = 0.0;
  for (std::size_t i = 0; i < fd.size(); ++i) {
    const double e = std::abs(an[i] - fd[i]);
    if (e > tol * denom && std::abs(d_plus[i] - d_minus[i]) > e) {
      ++rep.skipped;
      continue;
    }
    ++rep.checked;
    worst = std::max(worst, e);
  }
  rep.max_rel_err = worst / denom;
  if (rep.checked == 0 && !fd.empty()) {
    rep.status = "skipped";
    rep.note = "every entry straddles a kink";
  } else {
    rep.pass = rep.max_rel_err <= tol;
    rep.status = rep.pass ? "ok" : "failed";
  }
  if (rep.skipped > 0 && rep.note.empty()) rep.note = std::to_string(rep.skipped) + " entries straddle a kink";
  return rep;
}

inline std::vector<std::size_t> all_indices(std::size_t begin, std::size_t end) {
  std::vector<std::size_t> v;
  for (std::size_t i = begin; i < end; ++i) v.push_back(i);
  return v;
}

namespace detail {

inline ComplexImage random_image(RngStream& rng, int h, int w, double sigma = 1.0) {
  ComplexImage x(h, w);
  x.data = cgauss(rng, x.size(), sigma);
  return x;
}

inline std::vector<SamplePoint> random_points(RngStream& rng, int n, double lim = 0.45) {
  std::vector<SamplePoint> pts;
  for (int i = 0; i < n; ++i) pts.push_back({rng.uniform(-lim, lim), rng.uniform(-lim, lim)});
  return pts;
}

inline std::vector<double> flatten(const std::vector<SamplePoint>& pts) {
  std::vector<double> v;
  for (const auto& p : pts) {
    v.push_back(p.kx);
    v.push_back(p.ky);
  }
  return v;
}

inline std::vector<SamplePoint> unflatten(const std::vector<double>& v) {
  std::vector<SamplePoint> pts;
  for (std::size_t i = 0; i + 1 < v.size(); i += 2) pts.push_back({v[i], v[i + 1]});
  return pts;
}

inline std::vector<double> flatten(const std::vector<PointGrad>& g) {
  std::vector<double> v;
  for (const auto& p : g) {
    v.push_back(p.dkx);
    v.push_back(p.dky);
  }
  return v;
}

inline std::vector<std::size_t> strided(std::size_t n, std::size_t offset, std::size_t stride) {
  std::vector<std::size_t> v;
  for (std::size_t i = offset; i < n; i += stride) v.push_back(i);
  return v;
}

/// Small multi-coil instance shared by the pipeline checks.
struct PipelineInstance {
  int n = 8;
  ComplexImage x_true;
  CoilSet coils;
  SamplingPattern pattern;
  CxVec noise;
  KbParams kb;

  AcquisitionModel model(const std::vector<SamplePoint>& pts) const {
    SamplingPattern p = pattern;
    p.points = pts;
    return AcquisitionModel(p, coils, 0.0, kb);
  }
  KspaceData measure(const AcquisitionModel& m) const {
    KspaceData z = m.forward(x_true);
    for (std::size_t i = 0; i < z.values.size(); ++i) z.values[i] += noise[i];
    return z;
  }
};

inline PipelineInstance pipeline_instance(std::uint64_t seed, int n = 8, int n_points = 16, int coils = 2) {
  RngStream rng(seed);
  PipelineInstance inst;
  inst.n = n;
  inst.x_true = random_image(rng, n, n);
  inst.coils = make_coils(n, n, coils, CoilMode::gaussian_array, rng.split(1));
  inst.pattern.grid = {n, n};
  inst.pattern.points = random_points(rng, n_points);
  inst.pattern.frozen.assign(inst.pattern.points.size(), 0);
  inst.noise = cgauss(rng, static_cast<std::size_t>(n_points) * coils, 0.05);
  return inst;
}

}  // namespace detail

/// Names accepted by grad_check().
inline std::vector<std::string> grad_check_ops() {
  return {"kb_deriv",       "nufft_coords", "acquisition_coords", "conv_weights",  "instance_norm", "instance_norm_constant",
          "cnn_prox",       "wavelet_prox", "loss_l1",            "loss_l2",            "zero_unroll_phi", "pipeline_phi", "pipeline_theta",
          "pipeline_wavelet"};
}

inline GradCheckReport grad_check(const std::string& op, std::uint64_t seed, double h = 1e-5, double tol = 1e-3) {
  GradCheckReport rep;
  rep.op = op;
  rep.seed = seed;
  rep.h = h;
  rep.tol = tol;
  RngStream rng(seed);
  using Vec = std::vector<double>;

  if (op == "kb_deriv") {
    const KbParams kb = KbParams::paper();
    Vec u;
    for (int i = 0; i < 16; ++i) u.push_back(rng.uniform(-0.49, 0.49) * kb.width);
    Vec an;
    for (double v : u) an.push_back(kb_deriv(v, kb));
    // Sum of independent terms: each partial is kb'(u_i).
    auto f = [&](const Vec& x) {
      double s = 0.0;
      for (double v : x) s += kb_eval(v, kb);
      return s;
    };
    // One group per entry so each slope is judged on its own scale.
    for (std::size_t i = 0; i < u.size(); ++i) {
      auto g = check_group("u" + std::to_string(i), u, f, an, {i}, h, tol);
      rep.groups.push_back(g);
    }
    return rep;
  }

  if (op == "nufft_coords") {
    const int n = 8;
    const ComplexImage img = detail::random_image(rng, n, n);
    const auto pts = detail::random_points(rng, 5);
    const CxVec up = cgauss(rng, pts.size(), 1.0);
    const KbParams kb = KbParams::paper();
    auto f = [&](const Vec& v) {
      const CxVec y = nufft_forward(img, detail::unflatten(v), kb);
      return inner(up, y).real();
    };
    const Vec x = detail::flatten(pts);
    const Vec an = detail::flatten(nufft_coord_vjp(img, pts, kb, up));
    rep.groups.push_back(check_group("kx", x, f, an, detail::strided(x.size(), 0, 2), h, tol));
    rep.groups.push_back(check_group("ky", x, f, an, detail::strided(x.size(), 1, 2), h, tol));
    return rep;
  }

  if (op == "acquisition_coords") {
    auto inst = detail::pipeline_instance(seed, 8, 12, 3);
    const ComplexImage g = detail::random_image(rng, 8, 8);
    const AcquisitionModel m0 = inst.model(inst.pattern.points);
    const KspaceData up = inst.measure(m0);
    const Vec x = detail::flatten(inst.pattern.points);
    auto f_fwd = [&](const Vec& v) {
      const AcquisitionModel m = inst.model(detail::unflatten(v));
      return inner(up.values, m.forward(g).values).real();
    };
    auto f_adj = [&](const Vec& v) {
      const AcquisitionModel m = inst.model(detail::unflatten(v));
      return inner(g, m.adjoint(up)).real();
    };
    const Vec an_fwd = detail::flatten(m0.forward_coord_vjp(g, up));
    const Vec an_adj = detail::flatten(m0.adjoint_coord_vjp(g, up));
    rep.groups.push_back(check_group("forward", x, f_fwd, an_fwd, all_indices(0, x.size()), h, tol));
    rep.groups.push_back(check_group("adjoint", x, f_adj, an_adj, all_indices(0, x.size()), h, tol));
    return rep;
  }

  if (op == "conv_weights") {
    const int n = 8, cin = 4, cout = 4;
    const std::size_t plane = 64;
    Vec in(cin * plane), w(static_cast<std::size_t>(cout) * cin * 9), b(cout), up(cout * plane);
    for (auto* v : {&in, &w, &b, &up})
      for (auto& e : *v) e = rng.normal();
    auto value = [&](const Vec& in_, const Vec& w_, const Vec& b_) {
      Vec out(cout * plane);
      detail::conv3x3(in_.data(), cin, n, n, w_.data(), b_.data(), cout, out.data());
      double s = 0.0;
      for (std::size_t i = 0; i < out.size(); ++i) s += out[i] * up[i];
      return s;
    };
    Vec gin(in.size(), 0.0), gw(w.size(), 0.0), gb(b.size(), 0.0);
    detail::conv3x3_backward(in.data(), cin, n, n, w.data(), cout, up.data(), gin.data(), gw.data(), gb.data());
    rep.groups.push_back(check_group("weight", w, [&](const Vec& v) { return value(in, v, b); }, gw, all_indices(0, w.size()), h, tol));
    rep.groups.push_back(check_group("bias", b, [&](const Vec& v) { return value(in, w, v); }, gb, all_indices(0, b.size()), h, tol));
    rep.groups.push_back(check_group("input", in, [&](const Vec& v) { return value(v, w, b); }, gin, all_indices(0, in.size()), h, tol));
    return rep;
  }

  if (op == "instance_norm" || op == "instance_norm_constant") {
    const int ch = 3;
    const std::size_t plane = 36;
    Vec in(ch * plane), gamma(ch), beta(ch), up(ch * plane);
    for (auto* v : {&in, &gamma, &beta, &up})
      for (auto& e : *v) e = rng.normal();
    if (op == "instance_norm_constant")
      for (std::size_t p = 0; p < plane; ++p) in[p] = 0.7;
    auto value = [&](const Vec& in_, const Vec& g_, const Vec& b_) {
      Vec xh(in_.size()), is(ch), out(in_.size());
      detail::instance_norm(in_.data(), ch, plane, g_.data(), b_.data(), xh.data(), is.data(), out.data());
      double s = 0.0;
      for (std::size_t i = 0; i < out.size(); ++i) s += out[i] * up[i];
      return s;
    };
    Vec xh(in.size()), is(ch), out(in.size());
    detail::instance_norm(in.data(), ch, plane, gamma.data(), beta.data(), xh.data(), is.data(), out.data());
    Vec gin(in.size(), 0.0), gg(ch, 0.0), gbeta(ch, 0.0);
    detail::instance_norm_backward(xh.data(), is.data(), ch, plane, gamma.data(), up.data(), gin.data(), gg.data(), gbeta.data());
    for (int c = 0; c < ch; ++c) {
      const std::string name = "input/ch" + std::to_string(c);
      double mean = 0.0, var = 0.0;
      for (std::size_t p = 0; p < plane; ++p) mean += in[c * plane + p];
      mean /= static_cast<double>(plane);
      for (std::size_t p = 0; p < plane; ++p) var += (in[c * plane + p] - mean) * (in[c * plane + p] - mean);
      var /= static_cast<double>(plane);
      if (var < 1e3 * kInstanceNormEps) {
        GroupReport g;
        g.group = name;
        g.status = "skipped";
        g.skipped = static_cast<int>(plane);
        g.note = "zero-variance channel (normalization is singular here)";
        rep.groups.push_back(g);
        continue;
      }
      rep.groups.push_back(check_group(name, in, [&](const Vec& v) { return value(v, gamma, beta); }, gin,
                                       all_indices(c * plane, (c + 1) * plane), h, tol));
    }
    rep.groups.push_back(check_group("gamma", gamma, [&](const Vec& v) { return value(in, v, beta); }, gg, all_indices(0, ch), h, tol));
    rep.groups.push_back(check_group("beta", beta, [&](const Vec& v) { return value(in, gamma, v); }, gbeta, all_indices(0, ch), h, tol));
    return rep;
  }

  if (op == "cnn_prox") {
    const int n = 8;
    const CnnProx net(4, 1);
    Vec theta(net.param_count());
    RngStream init = rng.split(7);
    net.init(theta, init);
    // Move the residual-branch scales away from their near-zero init so every
    // group carries signal.
    for (auto& v : theta) v += 0.05 * rng.normal();
    const ComplexImage x = detail::random_image(rng, n, n);
    const ComplexImage up = detail::random_image(rng, n, n);
    CnnTape tape;
    net.forward(theta, x, &tape);
    Vec gt(theta.size(), 0.0);
    const ComplexImage gx = net.backward(theta, tape, up, gt);
    auto f_theta = [&](const Vec& v) { return inner(up, net.forward(v, x)).real(); };
    for (const auto& b : net.layout("", 0))
      rep.groups.push_back(check_group(b.name, theta, f_theta, gt, all_indices(b.offset, b.offset + b.size()), h, tol));
    Vec xv, gv;
    for (std::size_t p = 0; p < x.size(); ++p) {
      xv.push_back(x.data[p].real());
      xv.push_back(x.data[p].imag());
      gv.push_back(gx.data[p].real());
      gv.push_back(gx.data[p].imag());
    }
    auto f_x = [&](const Vec& v) {
      ComplexImage xi(n, n);
      for (std::size_t p = 0; p < xi.size(); ++p) xi.data[p] = cx(v[2 * p], v[2 * p + 1]);
      return inner(up, net.forward(theta, xi)).real();
    };
    rep.groups.push_back(check_group("input", xv, f_x, gv, all_indices(0, xv.size()), h, tol));
    return rep;
  }

  if (op == "wavelet_prox") {
    const int n = 16;
    const ComplexImage x = detail::random_image(rng, n, n);
    const ComplexImage up = detail::random_image(rng, n, n);
    const double tau = 0.4;
    auto [gx, dtau] = prox_wavelet_vjp(x, tau, up);
    Vec xv, gv;
    for (std::size_t p = 0; p < x.size(); ++p) {
      xv.push_back(x.data[p].real());
      xv.push_back(x.data[p].imag());
      gv.push_back(gx.data[p].real());
      gv.push_back(gx.data[p].imag());
    }
    auto f_x = [&](const Vec& v) {
      ComplexImage xi(n, n);
      for (std::size_t p = 0; p < xi.size(); ++p) xi.data[p] = cx(v[2 * p], v[2 * p + 1]);
      return inner(up, prox_wavelet(xi, tau)).real();
    };
    rep.groups.push_back(check_group("input", xv, f_x, gv, all_indices(0, xv.size()), h, tol));
    rep.groups.push_back(check_group("tau", {tau}, [&](const Vec& v) { return inner(up, prox_wavelet(x, v[0])).real(); }, {dtau},
                                     {0}, h, tol));
    return rep;
  }

  if (op == "loss_l1" || op == "loss_l2") {
    const LossKind kind = op == "loss_l1" ? LossKind::l1 : LossKind::l2;
    const ComplexImage xt = detail::random_image(rng, 8, 8);
    const ComplexImage xh = detail::random_image(rng, 8, 8);
    const LossValue lv = image_loss(kind, xh, xt);
    Vec xv, gv;
    for (std::size_t p = 0; p < xh.size(); ++p) {
      xv.push_back(xh.data[p].real());
      xv.push_back(xh.data[p].imag());
      gv.push_back(lv.grad.data[p].real());
      gv.push_back(lv.grad.data[p].imag());
    }
    auto f = [&](const Vec& v) {
      ComplexImage xi(8, 8);
      for (std::size_t p = 0; p < xi.size(); ++p) xi.data[p] = cx(v[2 * p], v[2 * p + 1]);
      return image_loss(kind, xi, xt).value;
    };
    rep.groups.push_back(check_group("x_hat", xv, f, gv, all_indices(0, xv.size()), h, tol));
    return rep;
  }

  if (op == "zero_unroll_phi" || op == "pipeline_phi" || op == "pipeline_theta" || op == "pipeline_wavelet") {
    const auto inst = detail::pipeline_instance(seed);
    UnrolledConfig cfg;
    cfg.n_unrolls = op == "zero_unroll_phi" ? 0 : 2;
    cfg.prox_kind = op == "pipeline_wavelet" ? ProxKind::wavelet : ProxKind::cnn;
    cfg.channels = 4;
    cfg.n_resblocks = 1;
    cfg.tau_init = 0.05;
    ReconModel recon = ReconModel::init(cfg, seed + 1);
    if (cfg.prox_kind == ProxKind::cnn)
      for (auto& v : recon.theta()) v += 0.02 * rng.normal();
    const LossKind kind = op == "zero_unroll_phi" ? LossKind::l2 : LossKind::l1;
    const AcquisitionModel m0 = inst.model(inst.pattern.points);
    const KspaceData z0 = inst.measure(m0);
    const BackwardResult br = backward(kind, inst.x_true, z0, m0, recon);

    if (op == "pipeline_theta" || op == "pipeline_wavelet") {
      auto f = [&](const Vec& v) {
        ReconModel r = recon;
        r.theta() = v;
        return forward_loss(kind, inst.x_true, z0, m0, r);
      };
      for (const auto& b : recon.layout())
        rep.groups.push_back(check_group(b.name, recon.theta(), f, br.grads.d_theta, all_indices(b.offset, b.offset + b.size()), h, tol));
    }
    if (op != "pipeline_theta") {
      auto f = [&](const Vec& v) {
        const AcquisitionModel m = inst.model(detail::unflatten(v));
        return forward_loss(kind, inst.x_true, inst.measure(m), m, recon);
      };
      const Vec x = detail::flatten(inst.pattern.points);
      const Vec an = detail::flatten(br.grads.d_phi);
      rep.groups.push_back(check_group("phi/kx", x, f, an, detail::strided(x.size(), 0, 2), h, tol));
      rep.groups.push_back(check_group("phi/ky", x, f, an, detail::strided(x.size(), 1, 2), h, tol));
    }
    return rep;
  }

  throw ValidationError("grad_check: unknown op '" + op + "'");
}

}  // namespace autosamp
