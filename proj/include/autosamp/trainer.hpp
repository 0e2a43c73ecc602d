#pragma once

// Joint optimization of sample coordinates (phi) and decoder parameters
// (theta) with Adam, plus slice-wise evaluation.

#include <algorithm>
#include <cmath>
#include <fstream>
#include <functional>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "autosamp/acquisition.hpp"
#include "autosamp/dataset.hpp"
#include "autosamp/grad.hpp"
#include "autosamp/metrics.hpp"
#include "autosamp/patterns.hpp"
#include "autosamp/recon.hpp"

namespace autosamp {

// ---------------------------------------------------------------------------
// Adam

struct AdamState {
  std::vector<double> m;
  std::vector<double> v;
  long step = 0;
};

struct AdamParams {
  double lr = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
};

/// Bias-corrected Adam update in place. Rejects non-finite gradients before
/// touching any state.
inline void adam_step(std::span<double> params, AdamState& state, std::span<const double> grads, const AdamParams& p) {
  if (grads.size() != params.size()) throw ValidationError("adam_step: gradient length does not match parameters");
  for (std::size_t i = 0; i < grads.size(); ++i)
    if (!std::isfinite(grads[i])) throw NumericalError("adam_step: non-finite gradient at index " + std::to_string(i));
  if (state.m.empty()) {
    state.m.assign(params.size(), 0.0);
    state.v.assign(params.size(), 0.0);
  }
  if (state.m.size() != params.size()) throw ValidationError("adam_step: state length does not match parameters");
  ++state.step;
  const double c1 = 1.0 - std::pow(p.beta1, static_cast<double>(state.step));
  const double c2 = 1.0 - std::pow(p.beta2, static_cast<double>(state.step));
  for (std::size_t i = 0; i < params.size(); ++i) {
    state.m[i] = p.beta1 * state.m[i] + (1.0 - p.beta1) * grads[i];
    state.v[i] = p.beta2 * state.v[i] + (1.0 - p.beta2) * grads[i] * grads[i];
    const double mh = state.m[i] / c1;
    const double vh = state.v[i] / c2;
    params[i] -= p.lr * mh / (std::sqrt(vh) + p.eps);
  }
}

// ---------------------------------------------------------------------------

enum class SelectRule { highest_psnr, lowest_psnr };

inline SelectRule select_rule_from_string(const std::string& s) {
  if (s == "highest-psnr") return SelectRule::highest_psnr;
  if (s == "lowest-psnr") return SelectRule::lowest_psnr;
  throw ValidationError("select: expected 'highest-psnr' or 'lowest-psnr', got '" + s + "'");
}

inline std::string to_string(SelectRule r) { return r == SelectRule::highest_psnr ? "highest-psnr" : "lowest-psnr"; }

struct TrainConfig {
  double lr_phi = 0.01;
  double lr_theta = 0.001;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double adam_eps = 1e-8;
  int batch = 1;
  int epochs = 30;
  double sigma = 1e-4;
  LossKind loss_kind = LossKind::l1;
  bool freeze_phi = false;
  bool freeze_calib = false;
  std::uint64_t seed = 0;
  SelectRule select = SelectRule::highest_psnr;
  bool keep_snapshots = true;
  KbParams kb = KbParams::paper();

  void validate() const {
    if (!(lr_phi > 0.0) || !(lr_theta > 0.0)) throw ValidationError("learning rates must be > 0");
    if (!(beta1 > 0.0 && beta1 < 1.0)) throw ValidationError("beta1 must be in (0, 1)");
    if (!(beta2 > 0.0 && beta2 < 1.0)) throw ValidationError("beta2 must be in (0, 1)");
    if (!(adam_eps > 0.0)) throw ValidationError("adam_eps must be > 0");
    if (batch != 1) throw ValidationError("batch must be 1");
    if (epochs < 0) throw ValidationError("epochs must be >= 0");
    if (!(sigma >= 0.0)) throw ValidationError("sigma must be >= 0");
    kb.validate();
  }
};

struct Checkpoint {
  int epoch = 0;
  SamplingPattern phi;
  ReconModel theta;
  double val_psnr = 0.0;
  double val_ssim = 0.0;
  bool has_snapshot = true;
};

struct EpochStats {
  int epoch = 0;
  double train_loss = 0.0;
  double val_psnr = 0.0;
  double val_ssim = 0.0;
  double mean_free_radius = 0.0;
};

struct TrainResult {
  std::vector<Checkpoint> checkpoints;
  std::size_t best = 0;
  std::vector<EpochStats> history;
  bool diverged = false;
  std::string message;

  const Checkpoint& best_checkpoint() const {
    if (checkpoints.empty()) throw ValidationError("no checkpoints recorded");
    return checkpoints[best];
  }
};

// ---------------------------------------------------------------------------
// Evaluation

using Decoder = std::function<ComplexImage(const KspaceData&, const AcquisitionModel&)>;

inline Decoder unrolled_decoder(const ReconModel& recon) {
  return [&recon](const KspaceData& z, const AcquisitionModel& m) { return unrolled_recon(z, m, recon); };
}

/// Per-slice PSNR/SSIM. Slice i draws its noise from RngStream(seed).split(i),
/// so the table is a pure function of its inputs.
inline MetricTable evaluate(const std::vector<const VolumeRecord*>& slices, const SamplingPattern& pattern, const Decoder& decoder,
                            double sigma, std::uint64_t seed, const KbParams& kb = KbParams::paper()) {
  MetricTable table;
  table.rows.resize(slices.size());
  const RngStream base(seed);
  parallel_for(slices.size(), [&](std::size_t i) {
    const VolumeRecord& rec = *slices[i];
    const AcquisitionModel model(pattern, rec.coils, sigma, kb);
    RngStream rng = base.split(i);
    const KspaceData z = model.measure(rec.image, rng);
    const ComplexImage x_hat = decoder(z, model);
    table.rows[i] = {rec.id, psnr(x_hat, rec.image), ssim(x_hat, rec.image)};
  });
  return table;
}

// ---------------------------------------------------------------------------
// Training

namespace detail {

inline std::vector<double> phi_flat(const SamplingPattern& p) {
  std::vector<double> v;
  v.reserve(2 * p.points.size());
  for (const auto& q : p.points) {
    v.push_back(q.kx);
    v.push_back(q.ky);
  }
  return v;
}

inline void set_phi(SamplingPattern& p, const std::vector<double>& v) {
  for (std::size_t i = 0; i < p.points.size(); ++i) p.points[i] = project(SamplePoint{v[2 * i], v[2 * i + 1]});
}

inline constexpr std::uint64_t kValidationStream = 0x7661;  // fixed noise for validation slices

}  // namespace detail

struct TrainHooks {
  std::function<void(const EpochStats&)> on_epoch;
};

inline TrainResult train_joint(const Dataset& data, const SamplingPattern& pattern_init, const ReconModel& recon_init,
                               const TrainConfig& cfg, const TrainHooks& hooks = {}) {
  cfg.validate();
  const auto train = data.subset(data.split.train);
  const auto val = data.subset(data.split.val);
  if (train.empty()) throw ValidationError("train_joint: empty training split");
  if (val.empty()) throw ValidationError("train_joint: empty validation split");

  SamplingPattern pattern = pattern_init;
  if (pattern.frozen.size() != pattern.points.size()) pattern.frozen.assign(pattern.points.size(), 0);
  if (cfg.freeze_calib)
    for (std::size_t i = 0; i < pattern.points.size(); ++i)
      if (pattern.is_calibration(i)) pattern.frozen[i] = 1;
  ReconModel recon = recon_init;

  AdamState adam_phi, adam_theta;
  const AdamParams ap_phi{cfg.lr_phi, cfg.beta1, cfg.beta2, cfg.adam_eps};
  const AdamParams ap_theta{cfg.lr_theta, cfg.beta1, cfg.beta2, cfg.adam_eps};
  const RngStream root(cfg.seed);
  const std::uint64_t val_seed = RngStream::hash(cfg.seed, detail::kValidationStream);

  TrainResult result;
  std::vector<std::size_t> order(train.size());
  for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;

  for (int epoch = 1; epoch <= cfg.epochs; ++epoch) {
    RngStream shuffle = root.split(static_cast<std::uint64_t>(epoch) << 32);
    for (std::size_t i = order.size(); i > 1; --i) std::swap(order[i - 1], order[shuffle.below(i)]);

    double loss_sum = 0.0;
    bool diverged = false;
    for (std::size_t step = 0; step < order.size(); ++step) {
      const VolumeRecord& rec = *train[order[step]];
      const AcquisitionModel model(pattern, rec.coils, cfg.sigma, cfg.kb);
      RngStream noise_rng = root.split((static_cast<std::uint64_t>(epoch) << 32) | (step + 1));
      const KspaceData z = model.measure(rec.image, noise_rng);
      BackwardResult br;
      try {
        br = backward(cfg.loss_kind, rec.image, z, model, recon);
      } catch (const NumericalError& e) {
        result.diverged = true;
        result.message = "epoch " + std::to_string(epoch) + " step " + std::to_string(step) + ": " + e.what();
        diverged = true;
        break;
      }
      loss_sum += br.loss;
      adam_step(recon.theta(), adam_theta, br.grads.d_theta, ap_theta);
      recon.project();
      if (!cfg.freeze_phi) {
        std::vector<double> phi = detail::phi_flat(pattern);
        std::vector<double> g(phi.size(), 0.0);
        for (std::size_t i = 0; i < pattern.points.size(); ++i) {
          if (pattern.frozen[i]) continue;
          g[2 * i] = br.grads.d_phi[i].dkx;
          g[2 * i + 1] = br.grads.d_phi[i].dky;
        }
        adam_step(phi, adam_phi, g, ap_phi);
        detail::set_phi(pattern, phi);
      }
    }
    if (diverged) break;

    const MetricTable table = evaluate(val, pattern, unrolled_decoder(recon), cfg.sigma, val_seed, cfg.kb);
    const EpochStats st{epoch, loss_sum / static_cast<double>(order.size()), table.mean_psnr(), table.mean_ssim(),
                        mean_free_radius(pattern)};
    result.history.push_back(st);
    if (hooks.on_epoch) hooks.on_epoch(st);

    Checkpoint ck{epoch, pattern, recon, st.val_psnr, st.val_ssim, true};
    const bool better = result.checkpoints.empty() ||
                        (cfg.select == SelectRule::highest_psnr ? ck.val_psnr > result.checkpoints[result.best].val_psnr
                                                                : ck.val_psnr < result.checkpoints[result.best].val_psnr);
    if (!cfg.keep_snapshots && !result.checkpoints.empty() && !better) {
      ck.phi = SamplingPattern{};
      ck.theta = ReconModel{};
      ck.has_snapshot = false;
    }
    if (!cfg.keep_snapshots && better && !result.checkpoints.empty()) {
      auto& old = result.checkpoints[result.best];
      old.phi = SamplingPattern{};
      old.theta = ReconModel{};
      old.has_snapshot = false;
    }
    result.checkpoints.push_back(std::move(ck));
    if (better) result.best = result.checkpoints.size() - 1;
  }
  if (result.checkpoints.empty()) {
    // No finished epoch: fall back to the starting point.
    const MetricTable table = evaluate(val, pattern_init, unrolled_decoder(recon_init), cfg.sigma, val_seed, cfg.kb);
    result.checkpoints.push_back({0, pattern_init, recon_init, table.mean_psnr(), table.mean_ssim(), true});
    result.best = 0;
  }
  return result;
}

inline void write_history_csv(const std::string& path, const std::vector<EpochStats>& h) {
  std::ofstream out(path);
  if (!out) throw IoError("cannot write " + path);
  out << "epoch,train_loss,val_psnr,val_ssim,mean_free_radius\n";
  char buf[200];
  for (const auto& s : h) {
    std::snprintf(buf, sizeof buf, "%d,%.17g,%.17g,%.17g,%.17g\n", s.epoch, s.train_loss, s.val_psnr, s.val_ssim, s.mean_free_radius);
    out << buf;
  }
}

}  // namespace autosamp
