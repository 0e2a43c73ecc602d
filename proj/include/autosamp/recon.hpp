#pragma once

// Decoders: the unrolled proximal-gradient network and the l1-wavelet ISTA
// baseline.

#include <filesystem>
#include <fstream>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "autosamp/acquisition.hpp"
#include "autosamp/cnn.hpp"
#include "autosamp/container.hpp"
#include "autosamp/numerics.hpp"
#include "autosamp/wavelet.hpp"
#include "json.hpp"

namespace autosamp {

enum class ProxKind { wavelet, cnn };

inline std::string to_string(ProxKind k) { return k == ProxKind::wavelet ? "wavelet" : "cnn"; }

inline ProxKind prox_kind_from_string(const std::string& s) {
  if (s == "wavelet") return ProxKind::wavelet;
  if (s == "cnn") return ProxKind::cnn;
  throw ValidationError("prox_kind: expected 'wavelet' or 'cnn', got '" + s + "'");
}

struct UnrolledConfig {
  int n_unrolls = 8;
  ProxKind prox_kind = ProxKind::cnn;
  int channels = 128;
  int n_resblocks = 3;
  double step_init = 0.5;
  double tau_init = 0.01;  // wavelet mode only
  bool tied_weights = false;

  static UnrolledConfig paper() { return {}; }
  static UnrolledConfig desk() {
    UnrolledConfig c;
    c.n_unrolls = 3;
    c.channels = 16;
    return c;
  }

  void validate() const {
    if (n_unrolls < 0) throw ValidationError("n_unrolls must be >= 0");
    if (channels < 1) throw ValidationError("channels must be >= 1");
    if (n_resblocks < 0) throw ValidationError("n_resblocks must be >= 0");
    if (!std::isfinite(step_init)) throw ValidationError("step_init must be finite");
    if (!(tau_init >= 0.0)) throw ValidationError("tau_init must be >= 0");
  }

  bool operator==(const UnrolledConfig&) const = default;
};

inline nlohmann::ordered_json to_json(const UnrolledConfig& c) {
  return {{"n_unrolls", c.n_unrolls},   {"prox_kind", to_string(c.prox_kind)}, {"channels", c.channels},
          {"n_resblocks", c.n_resblocks}, {"step_init", c.step_init},          {"tau_init", c.tau_init},
          {"tied_weights", c.tied_weights}};
}

inline UnrolledConfig unrolled_config_from_json(const nlohmann::json& j) {
  UnrolledConfig c;
  for (auto it = j.begin(); it != j.end(); ++it) {
    const auto& k = it.key();
    if (k == "n_unrolls") c.n_unrolls = it->get<int>();
    else if (k == "prox_kind") c.prox_kind = prox_kind_from_string(it->get<std::string>());
    else if (k == "channels") c.channels = it->get<int>();
    else if (k == "n_resblocks") c.n_resblocks = it->get<int>();
    else if (k == "step_init") c.step_init = it->get<double>();
    else if (k == "tau_init") c.tau_init = it->get<double>();
    else if (k == "tied_weights") c.tied_weights = it->get<bool>();
    else throw ValidationError("unknown recon config key '" + k + "'");
  }
  c.validate();
  return c;
}

/// Flat parameter vector plus its named layout.
///
/// Per unroll i: "unroll{i}/step", then either "unroll{i}/tau" (wavelet) or
/// the CNN blocks under "unroll{i}/". With tied weights the prox parameters
/// appear once under "prox/" after all step sizes.
class ReconModel {
 public:
  ReconModel() = default;
  explicit ReconModel(const UnrolledConfig& config) : config_(config), cnn_(config.channels, config.n_resblocks) {
    config_.validate();
    build_layout();
    theta_.assign(count_, 0.0);
  }

  /// Fresh model with initialized parameters.
  static ReconModel init(const UnrolledConfig& config, std::uint64_t seed) {
    ReconModel m(config);
    RngStream rng(seed);
    for (int i = 0; i < config.n_unrolls; ++i) m.theta_[m.step_offset(i)] = config.step_init;
    const int n_prox = config.tied_weights ? (config.n_unrolls > 0 ? 1 : 0) : config.n_unrolls;
    for (int i = 0; i < n_prox; ++i) {
      if (config.prox_kind == ProxKind::wavelet) {
        m.theta_[m.prox_offset(i)] = config.tau_init;
      } else {
        RngStream sub = rng.split(static_cast<std::uint64_t>(i));
        m.cnn_.init(std::span<double>(m.theta_).subspan(m.prox_offset(i), m.prox_size()), sub);
      }
    }
    return m;
  }

  static std::size_t param_count(const UnrolledConfig& c) {
    const std::size_t prox = c.prox_kind == ProxKind::wavelet ? 1 : CnnProx::param_count(c.channels, c.n_resblocks);
    const std::size_t n = static_cast<std::size_t>(c.n_unrolls);
    if (c.tied_weights) return n + (n > 0 ? prox : 0);
    return n * (1 + prox);
  }

  const UnrolledConfig& config() const { return config_; }
  const CnnProx& cnn() const { return cnn_; }
  const std::vector<ParamBlock>& layout() const { return layout_; }
  std::vector<double>& theta() { return theta_; }
  const std::vector<double>& theta() const { return theta_; }
  std::size_t size() const { return theta_.size(); }
  int n_unrolls() const { return config_.n_unrolls; }

  std::size_t step_offset(int i) const { return step_offsets_.at(static_cast<std::size_t>(i)); }
  std::size_t prox_offset(int i) const {
    return prox_offsets_.at(config_.tied_weights ? 0 : static_cast<std::size_t>(i));
  }
  std::size_t prox_size() const {
    return config_.prox_kind == ProxKind::wavelet ? 1 : cnn_.param_count();
  }

  double step(int i) const { return theta_[step_offset(i)]; }
  double tau(int i) const { return theta_[prox_offset(i)]; }
  std::span<const double> prox_params(int i) const {
    return std::span<const double>(theta_).subspan(prox_offset(i), prox_size());
  }

  /// Keeps constrained parameters feasible (tau >= 0).
  void project() {
    if (config_.prox_kind != ProxKind::wavelet) return;
    for (auto off : prox_offsets_) theta_[off] = std::max(theta_[off], 0.0);
  }

  /// Block whose name matches exactly, or nullptr.
  const ParamBlock* find(const std::string& name) const {
    for (const auto& b : layout_)
      if (b.name == name) return &b;
    return nullptr;
  }

  bool operator==(const ReconModel& o) const { return config_ == o.config_ && theta_ == o.theta_; }

 private:
  void build_layout() {
    layout_.clear();
    step_offsets_.clear();
    prox_offsets_.clear();
    std::size_t off = 0;
    auto add_prox = [&](const std::string& prefix) {
      prox_offsets_.push_back(off);
      if (config_.prox_kind == ProxKind::wavelet) {
        layout_.push_back({prefix + "tau", off, {1}});
        off += 1;
      } else {
        for (auto& b : cnn_.layout(prefix, off)) layout_.push_back(std::move(b));
        off += cnn_.param_count();
      }
    };
    for (int i = 0; i < config_.n_unrolls; ++i) {
      const std::string p = "unroll" + std::to_string(i) + "/";
      step_offsets_.push_back(off);
      layout_.push_back({p + "step", off, {1}});
      off += 1;
      if (!config_.tied_weights) add_prox(p);
    }
    if (config_.tied_weights && config_.n_unrolls > 0) add_prox("prox/");
    count_ = off;
  }

  UnrolledConfig config_;
  CnnProx cnn_{1, 0};
  std::vector<ParamBlock> layout_;
  std::vector<std::size_t> step_offsets_;
  std::vector<std::size_t> prox_offsets_;
  std::size_t count_ = 0;
  std::vector<double> theta_;
};

// ---------------------------------------------------------------------------
// Checkpoint files: <stem>.json manifest and <stem>_theta.{hdr,bin}.

inline std::filesystem::path theta_path(const std::filesystem::path& stem) {
  return stem.parent_path() / (stem.filename().string() + "_theta");
}

inline std::filesystem::path recon_stem(const std::filesystem::path& p) {
  return p.extension() == ".json" ? p.parent_path() / p.stem() : p;
}

inline void save_recon(const std::filesystem::path& path, const ReconModel& m, const nlohmann::json& extra = {}) {
  const auto stem = recon_stem(path);
  nlohmann::ordered_json j;
  j["format"] = "autosamp-recon-1";
  j["config"] = to_json(m.config());
  j["param_count"] = m.size();
  auto layout = nlohmann::ordered_json::array();
  for (const auto& b : m.layout()) layout.push_back({{"name", b.name}, {"offset", b.offset}, {"shape", b.shape}});
  j["layout"] = layout;
  j["theta"] = theta_path(stem).filename().string();
  if (!extra.is_null()) j["extra"] = extra;
  if (!stem.parent_path().empty()) std::filesystem::create_directories(stem.parent_path());
  std::ofstream out(stem.string() + ".json");
  if (!out) throw IoError("cannot write " + stem.string() + ".json");
  out << j.dump(2) << "\n";
  save_array(theta_path(stem), Array::real({static_cast<std::int64_t>(m.size())}, m.theta()));
}

inline ReconModel load_recon(const std::filesystem::path& path) {
  const auto stem = recon_stem(path);
  std::ifstream in(stem.string() + ".json");
  if (!in) throw IoError("cannot read " + stem.string() + ".json");
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(in);
  } catch (const nlohmann::json::exception& e) {
    throw IoError(std::string("malformed recon manifest: ") + e.what());
  }
  ReconModel m(unrolled_config_from_json(j.at("config")));
  if (j.at("param_count").get<std::size_t>() != m.size())
    throw ValidationError("recon checkpoint: parameter count does not match its config");
  std::size_t i = 0;
  for (const auto& b : j.at("layout")) {
    if (i >= m.layout().size() || b.at("name").get<std::string>() != m.layout()[i].name ||
        b.at("offset").get<std::size_t>() != m.layout()[i].offset)
      throw ValidationError("recon checkpoint: layout mismatch at block " + std::to_string(i));
    ++i;
  }
  if (i != m.layout().size()) throw ValidationError("recon checkpoint: layout has the wrong number of blocks");
  const Array theta = load_array(theta_path(stem));
  auto values = theta.as_real();
  if (values.size() != m.size()) throw ValidationError("recon checkpoint: theta length mismatch");
  m.theta() = std::move(values);
  return m;
}

// ---------------------------------------------------------------------------

/// x - 2t A^H (A x - z)
inline ComplexImage data_consistency(const ComplexImage& x, const KspaceData& z, const AcquisitionModel& model, double t) {
  KspaceData r = model.forward(x);
  r -= z;
  ComplexImage g = model.adjoint(r);
  g *= cx(-2.0 * t, 0.0);
  g += x;
  return g;
}

/// Intermediates of one unrolled pass, kept for the reverse sweep.
struct ReconTrace {
  ComplexImage x0;
  std::vector<ComplexImage> x_in;  // input of unroll i
  std::vector<ComplexImage> v;     // DC output of unroll i
  std::vector<CnnTape> tapes;      // CNN mode only
};

inline ComplexImage apply_prox(const ReconModel& recon, int i, const ComplexImage& v, CnnTape* tape) {
  if (recon.config().prox_kind == ProxKind::wavelet) return prox_wavelet(v, std::max(recon.tau(i), 0.0));
  return recon.cnn().forward(recon.prox_params(i), v, tape);
}

inline ComplexImage unrolled_recon(const KspaceData& z, const AcquisitionModel& model, const ReconModel& recon,
                                   ReconTrace* trace = nullptr) {
  ComplexImage x = model.adjoint(z);
  if (trace) {
    *trace = ReconTrace{};
    trace->x0 = x;
  }
  for (int i = 0; i < recon.n_unrolls(); ++i) {
    ComplexImage v = data_consistency(x, z, model, recon.step(i));
    CnnTape* tape = nullptr;
    if (trace) {
      trace->x_in.push_back(x);
      if (recon.config().prox_kind == ProxKind::cnn) tape = &trace->tapes.emplace_back();
    }
    x = apply_prox(recon, i, v, tape);
    if (trace) trace->v.push_back(std::move(v));
  }
  return x;
}

// ---------------------------------------------------------------------------
// l1-wavelet compressed sensing baseline.

inline constexpr int kCsIterations = 100;
inline constexpr int kPowerIterations = 20;

/// 0.5 ||A x - z||^2 + lambda ||W x||_1 over all Haar coefficients.
inline double cs_objective(const ComplexImage& x, const KspaceData& z, const AcquisitionModel& model, double lambda) {
  KspaceData r = model.forward(x);
  r -= z;
  const double fid = norm2(r.values);
  return 0.5 * fid * fid + lambda * wavelet_l1(x, WaveletBands::all);
}

inline ComplexImage cs_recon(const KspaceData& z, const AcquisitionModel& model, double lambda, int n_iter = kCsIterations,
                             std::vector<double>* objective = nullptr) {
  if (!(lambda >= 0.0)) throw ValidationError("cs_recon: lambda must be >= 0");
  if (n_iter < 0) throw ValidationError("cs_recon: n_iter must be >= 0");
  const double norm = model.operator_norm(kPowerIterations);
  ComplexImage x(model.height(), model.width());
  if (norm == 0.0) return x;
  const double step = 1.0 / (norm * norm);
  if (objective) {
    objective->clear();
    objective->push_back(cs_objective(x, z, model, lambda));
  }
  for (int it = 0; it < n_iter; ++it) {
    KspaceData r = model.forward(x);
    r -= z;
    ComplexImage g = model.adjoint(r);
    g *= cx(-step, 0.0);
    g += x;
    x = prox_wavelet(g, lambda * step, WaveletBands::all);
    if (objective) objective->push_back(cs_objective(x, z, model, lambda));
  }
  return x;
}

}  // namespace autosamp
