#pragma once

// Subcommands. Each one is a function of its fully resolved JSON config and an
// output directory; that is what makes `replay` possible.

#include <chrono>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <string>
#include <vector>

#include "autosamp/autosamp.hpp"
#include "run_manifest.hpp"

namespace autosamp::cli {

enum class OptType { string, integer, real, boolean, seed, path };

struct OptSpec {
  std::string key;  // config key; the flag is the key with '-' for '_'
  OptType type;
  std::string help;
  ojson desk;
  ojson paper;  // null means same as desk
};

inline std::string flag_name(const std::string& key) {
  std::string f = key;
  for (auto& c : f)
    if (c == '_') c = '-';
  return f;
}

namespace detail {

inline OptSpec opt(std::string key, OptType t, std::string help, ojson desk, ojson paper = nullptr) {
  return {std::move(key), t, std::move(help), std::move(desk), std::move(paper)};
}

inline std::vector<OptSpec> kb_opts() {
  return {opt("kb_width", OptType::real, "Kaiser-Bessel kernel width W", 4.0),
          opt("kb_os", OptType::real, "grid oversampling factor", 1.25)};
}

inline std::vector<OptSpec> pattern_gen_opts() {
  return {opt("kind", OptType::string, "uniform | uniform-small | vd-gaussian | vd-poisson | cartesian", "vd-poisson"),
          opt("accel", OptType::real, "acceleration R = N/M", 5.0),
          opt("calib", OptType::integer, "calibration block side", 8, 20),
          opt("corner_cut", OptType::boolean, "restrict samples to the inscribed ellipse", false),
          opt("radius_frac", OptType::real, "support fraction for uniform-small", 0.5),
          opt("std_frac", OptType::real, "Gaussian std as a fraction of k-space width", 0.25),
          opt("tol", OptType::real, "relative tolerance on the Poisson sample count", 0.02),
          opt("freeze_calib", OptType::boolean, "mark calibration samples frozen", false)};
}

inline std::vector<OptSpec> concat(std::vector<OptSpec> a, const std::vector<OptSpec>& b) {
  a.insert(a.end(), b.begin(), b.end());
  return a;
}

}  // namespace detail

/// Option schema per command.
inline const std::map<std::string, std::vector<OptSpec>>& schemas() {
  using detail::opt;
  static const std::map<std::string, std::vector<OptSpec>> s = [] {
    std::map<std::string, std::vector<OptSpec>> m;
    m["gen-pattern"] = detail::concat(
        {opt("grid", OptType::string, "grid HxW", "64x64", "256x256"), opt("seed", OptType::seed, "pattern seed", 0),
         opt("discretize", OptType::boolean, "snap to the Cartesian grid", false)},
        detail::pattern_gen_opts());
    m["analyze-pattern"] = {opt("pattern", OptType::path, "pattern CSV", ""),
                            opt("psf", OptType::boolean, "compute the point spread function", false),
                            opt("voronoi", OptType::boolean, "compute Voronoi cell areas", false),
                            opt("raster_dim", OptType::integer, "Voronoi raster side", kDefaultRasterDim)};
    m["simulate"] = {opt("records", OptType::integer, "number of phantom records", 20),
                     opt("grid", OptType::string, "image size HxW", "64x64", "256x256"),
                     opt("coils", OptType::integer, "coil count", 4, 8),
                     opt("coil_mode", OptType::string, "gaussian-array | uniform", "gaussian-array"),
                     opt("ellipses", OptType::integer, "ellipses per phantom", 8),
                     opt("seed", OptType::seed, "dataset seed", 1),
                     opt("pattern", OptType::path, "also simulate k-space with this pattern", ""),
                     opt("sigma", OptType::real, "measurement noise std", 1e-4),
                     opt("split", OptType::string, "records to simulate: train | val | test | all", "all"),
                     opt("noise_seed", OptType::seed, "noise seed", 0)};
    const auto recon_common = detail::concat(
        {opt("dataset", OptType::path, "dataset directory", ""), opt("pattern", OptType::path, "pattern CSV", ""),
         opt("model", OptType::path, "recon checkpoint (.json)", ""),
         opt("method", OptType::string, "unrolled | cs | adjoint", "unrolled"),
         opt("lambda", OptType::real, "CS regularization weight", 1e-3),
         opt("tune_lambda", OptType::boolean, "pick lambda by validation PSNR over a log grid", false),
         opt("cs_iters", OptType::integer, "ISTA iterations", kCsIterations),
         opt("split", OptType::string, "train | val | test", "test"), opt("sigma", OptType::real, "noise std", 1e-4),
         opt("seed", OptType::seed, "noise seed", 0), opt("discretize", OptType::boolean, "snap the pattern first", false)},
        detail::kb_opts());
    m["reconstruct"] = recon_common;
    m["evaluate"] = recon_common;
    m["train"] = detail::concat(
        detail::concat(
            {opt("dataset", OptType::path, "dataset directory; empty synthesizes one", ""),
             opt("records", OptType::integer, "synthetic records when no dataset is given", 20),
             opt("grid", OptType::string, "synthetic image size", "64x64", "256x256"),
             opt("coils", OptType::integer, "synthetic coil count", 4, 8),
             opt("data_seed", OptType::seed, "synthetic dataset seed", 1),
             opt("pattern", OptType::path, "initial pattern CSV; empty generates one", ""),
             opt("pattern_seed", OptType::seed, "seed of the generated initial pattern", 0),
             opt("unrolls", OptType::integer, "unrolled iterations", 3, 8),
             opt("prox", OptType::string, "cnn | wavelet", "cnn"), opt("channels", OptType::integer, "CNN channels", 16, 128),
             opt("resblocks", OptType::integer, "CNN residual blocks", 3), opt("step_init", OptType::real, "initial DC step", 0.5),
             opt("tau_init", OptType::real, "initial wavelet threshold", 0.01),
             opt("tied_weights", OptType::boolean, "share prox weights across unrolls", false),
             opt("model_seed", OptType::seed, "network init seed", 0),
             opt("lr_phi", OptType::real, "Adam learning rate for coordinates", 0.01),
             opt("lr_theta", OptType::real, "Adam learning rate for network", 0.001),
             opt("beta1", OptType::real, "Adam beta1", 0.9), opt("beta2", OptType::real, "Adam beta2", 0.999),
             opt("adam_eps", OptType::real, "Adam epsilon", 1e-8), opt("epochs", OptType::integer, "epochs", 30),
             opt("sigma", OptType::real, "measurement noise std", 1e-4), opt("loss", OptType::string, "l1 | l2", "l1"),
             opt("freeze_phi", OptType::boolean, "train the decoder only", false),
             opt("seed", OptType::seed, "training seed", 0),
             opt("select", OptType::string, "highest-psnr | lowest-psnr", "highest-psnr"),
             opt("test_seed", OptType::seed, "noise seed for the test evaluation", 0)},
            detail::pattern_gen_opts()),
        detail::kb_opts());
    m["gradcheck"] = {opt("op", OptType::string, "operation to check", ""), opt("all", OptType::boolean, "check every operation", false),
                      opt("seed", OptType::seed, "instance seed", 1), opt("fd_step", OptType::real, "finite-difference step h", 1e-5),
                      opt("tol", OptType::real, "relative tolerance", 1e-3)};
    return m;
  }();
  return s;
}

inline const std::vector<OptSpec>& schema(const std::string& command) {
  const auto it = schemas().find(command);
  if (it == schemas().end()) throw ValidationError("unknown command '" + command + "'");
  return it->second;
}

/// Checks and normalizes one value against its spec.
inline ojson coerce(const OptSpec& s, const ojson& v, const std::string& where) {
  auto bad = [&](const std::string& want) {
    return ValidationError(where + " '" + s.key + "': expected " + want + ", got " + v.dump());
  };
  switch (s.type) {
    case OptType::string:
    case OptType::path:
      if (!v.is_string()) throw bad("a string");
      return v;
    case OptType::boolean:
      if (!v.is_boolean()) throw bad("true or false");
      return v;
    case OptType::integer:
      if (!v.is_number_integer()) throw bad("an integer");
      return v.get<std::int64_t>();
    case OptType::seed:
      if (!v.is_number_integer() || (v.is_number_integer() && !v.is_number_unsigned() && v.get<std::int64_t>() < 0))
        throw bad("a non-negative integer");
      return v.get<std::uint64_t>();
    case OptType::real:
      if (!v.is_number()) throw bad("a number");
      return v.get<double>();
  }
  return v;
}

/// Parses a flag's text into the JSON type its spec wants.
inline ojson parse_flag(const OptSpec& s, const std::string& text) {
  const std::string where = "flag --" + flag_name(s.key);
  auto bad = [&](const std::string& want) { return ValidationError(where + ": expected " + want + ", got '" + text + "'"); };
  std::size_t used = 0;
  try {
    switch (s.type) {
      case OptType::string:
      case OptType::path:
        return text;
      case OptType::boolean:
        if (text == "true" || text == "1") return true;
        if (text == "false" || text == "0") return false;
        throw bad("true or false");
      case OptType::integer: {
        const long long v = std::stoll(text, &used);
        if (used != text.size()) throw bad("an integer");
        return v;
      }
      case OptType::seed: {
        if (!text.empty() && text[0] == '-') throw bad("a non-negative integer");
        const unsigned long long v = std::stoull(text, &used, 0);
        if (used != text.size()) throw bad("a non-negative integer");
        return static_cast<std::uint64_t>(v);
      }
      case OptType::real: {
        const double v = std::stod(text, &used);
        if (used != text.size()) throw bad("a number");
        return v;
      }
    }
  } catch (const std::logic_error&) {
    throw bad(s.type == OptType::real ? "a number" : "an integer");
  }
  return text;
}

inline ojson profile_defaults(const std::string& command, const std::string& profile) {
  if (profile != "desk" && profile != "paper") throw ValidationError("unknown profile '" + profile + "' (desk | paper)");
  ojson cfg = ojson::object();
  for (const auto& s : schema(command)) cfg[s.key] = (profile == "paper" && !s.paper.is_null()) ? s.paper : s.desk;
  return cfg;
}

/// Overlays a config file's values, rejecting keys the command does not know.
inline void apply_config(const std::string& command, ojson& cfg, const nlohmann::json& file) {
  if (!file.is_object()) throw ValidationError("config file must hold a JSON object");
  for (const auto& [key, value] : file.items()) {
    if (key == "profile") continue;
    const auto& specs = schema(command);
    const auto it = std::find_if(specs.begin(), specs.end(), [&](const OptSpec& s) { return s.key == key; });
    if (it == specs.end()) throw ValidationError("unknown config key '" + key + "' for command " + command);
    cfg[key] = coerce(*it, ojson(value), "config key");
  }
}

// ---------------------------------------------------------------------------
// Run context

struct RunContext {
  std::string command;
  ojson cfg;
  fs::path out;
  RunManifest manifest;

  template <class T>
  T get(const std::string& key) const {
    if (!cfg.contains(key)) throw ValidationError("missing config key '" + key + "'");
    return cfg.at(key).get<T>();
  }
  std::string str(const std::string& key) const { return get<std::string>(key); }
  double real(const std::string& key) const { return get<double>(key); }
  int integer(const std::string& key) const { return static_cast<int>(get<std::int64_t>(key)); }
  bool flag(const std::string& key) const { return get<bool>(key); }
  std::uint64_t seed(const std::string& key) {
    const auto v = get<std::uint64_t>(key);
    manifest.seeds[key] = v;
    return v;
  }

  /// Path-valued key; records the input's hashes. Empty string -> empty path.
  fs::path input(const std::string& key, bool required) {
    const std::string p = str(key);
    if (p.empty()) {
      if (required) throw ValidationError("missing required input '" + flag_name(key) + "'");
      return {};
    }
    if (!fs::exists(p)) throw ValidationError("input '" + key + "' not found: " + p);
    ojson in = hash_input(p);
    in["key"] = key;
    manifest.inputs.push_back(in);
    return p;
  }

  KbParams kb() const { return KbParams::make(real("kb_width"), real("kb_os")); }
};

// ---------------------------------------------------------------------------
// Shared helpers

inline PatternOptions pattern_options(const RunContext& c) {
  PatternOptions o;
  o.calib = c.integer("calib");
  o.corner_cut = c.flag("corner_cut");
  o.freeze_calib = c.flag("freeze_calib");
  return o;
}

inline SamplingPattern generate_pattern(const RunContext& c, GridSize grid, std::uint64_t seed) {
  const std::string kind = c.str("kind");
  const PatternOptions o = pattern_options(c);
  const double accel = c.real("accel");
  const RngStream rng(seed);
  if (kind == "uniform") return gen_uniform(rng, grid, accel, 1.0, o);
  if (kind == "uniform-small") return gen_uniform(rng, grid, accel, c.real("radius_frac"), o);
  if (kind == "vd-gaussian") return gen_vd_gaussian(rng, grid, accel, c.real("std_frac"), o);
  if (kind == "vd-poisson") return gen_vd_poisson(rng, grid, accel, c.real("tol"), o);
  if (kind == "cartesian") return gen_cartesian(grid);
  throw ValidationError("unknown pattern kind '" + kind + "'");
}

inline void write_json(const fs::path& p, const ojson& j) {
  std::ofstream out(p);
  if (!out) throw IoError("cannot write " + p.string());
  out << j.dump(2) << '\n';
}

inline std::vector<std::string> split_ids(const Dataset& ds, const std::string& which) {
  if (which == "train") return ds.split.train;
  if (which == "val") return ds.split.val;
  if (which == "test") return ds.split.test;
  if (which == "all") {
    std::vector<std::string> ids;
    for (const auto& r : ds.records) ids.push_back(r.id);
    return ids;
  }
  throw ValidationError("unknown split '" + which + "' (train | val | test | all)");
}

inline void check_grid(const SamplingPattern& p, const Dataset& ds) {
  if (ds.records.empty()) throw ValidationError("dataset has no records");
  const auto& img = ds.records.front().image;
  if (p.grid.height != img.height || p.grid.width != img.width)
    throw ValidationError("pattern grid " + std::to_string(p.grid.height) + "x" + std::to_string(p.grid.width) +
                          " does not match image size " + std::to_string(img.height) + "x" + std::to_string(img.width));
}

inline ojson table_summary(const MetricTable& t) {
  return {{"n", t.rows.size()}, {"mean_psnr", t.mean_psnr()}, {"mean_ssim", t.mean_ssim()}};
}

// ---------------------------------------------------------------------------
// Commands. Each returns the process exit code.

inline int run_gen_pattern(RunContext& c) {
  const GridSize grid = parse_grid(c.str("grid"));
  SamplingPattern p = generate_pattern(c, grid, c.seed("seed"));
  if (c.flag("discretize")) p = discretize(p);
  save_pattern(c.out / "pattern.csv", p);
  std::cout << "pattern: " << p.size() << " points, M = " << p.sample_count();
  if (p.kind != "cartesian") std::cout << " (target " << target_sample_count(grid, c.real("accel")) << ")";
  std::cout << '\n';
  return 0;
}

inline int run_analyze_pattern(RunContext& c) {
  const SamplingPattern p = load_pattern(c.input("pattern", true));
  bool do_psf = c.flag("psf"), do_vor = c.flag("voronoi");
  if (!do_psf && !do_vor) do_psf = do_vor = true;
  ojson summary = {{"M", p.sample_count()}, {"n_calib", p.n_calib}, {"mean_free_radius", mean_free_radius(p)}};
  if (do_psf) {
    const PsfResult r = psf(p, p.grid);
    write_psf_profile_csv((c.out / "psf_profile.csv").string(), r);
    write_pgm16((c.out / "psf.pgm").string(), magnitude(r.psf));
    save_array(c.out / "psf", Array::from_image(r.psf));
    summary["main_lobe_halfwidth"] = r.main_lobe_halfwidth;
    summary["peak_sidelobe_db"] = r.peak_sidelobe_db;
  }
  if (do_vor) {
    const VoronoiSummary vs = voronoi_areas(p, c.integer("raster_dim"));
    write_voronoi_csv((c.out / "voronoi.csv").string(), p, vs);
    try {
      summary["radial_exponent"] = radial_density_fit(vs);
    } catch (const ValidationError& e) {
      summary["radial_exponent"] = nullptr;
      summary["radial_exponent_note"] = e.what();
    }
  }
  write_json(c.out / "summary.json", summary);
  std::cout << summary.dump() << '\n';
  return 0;
}

inline int run_simulate(RunContext& c) {
  SyntheticSpec spec;
  spec.n_records = c.integer("records");
  const GridSize g = parse_grid(c.str("grid"));
  spec.height = g.height;
  spec.width = g.width;
  spec.coils = c.integer("coils");
  spec.coil_mode = coil_mode_from_string(c.str("coil_mode"));
  spec.n_ellipses = c.integer("ellipses");
  spec.seed = c.seed("seed");
  const Dataset ds = make_synthetic_dataset(spec);
  save_dataset(c.out / "dataset", ds);

  const fs::path pattern_path = c.input("pattern", false);
  if (!pattern_path.empty()) {
    const SamplingPattern p = load_pattern(pattern_path);
    check_grid(p, ds);
    const double sigma = c.real("sigma");
    const RngStream base(c.seed("noise_seed"));
    const auto ids = split_ids(ds, c.str("split"));
    fs::create_directories(c.out / "kspace");
    for (std::size_t i = 0; i < ids.size(); ++i) {
      const VolumeRecord& rec = ds.get(ids[i]);
      const AcquisitionModel model(p, rec.coils, sigma);
      RngStream rng = base.split(i);
      save_array(c.out / "kspace" / ids[i], kspace_to_array(model.measure(rec.image, rng)));
    }
  }
  std::cout << "simulated " << ds.records.size() << " records\n";
  return 0;
}

namespace detail {

struct ReconSetup {
  Dataset ds;
  SamplingPattern pattern;
  std::optional<ReconModel> model;
  std::string method;
  double lambda = 0.0;
};

inline ReconSetup recon_setup(RunContext& c) {
  ReconSetup s;
  s.ds = load_dataset(c.input("dataset", true));
  s.pattern = load_pattern(c.input("pattern", true));
  if (c.flag("discretize")) s.pattern = discretize(s.pattern);
  check_grid(s.pattern, s.ds);
  s.method = c.str("method");
  if (s.method != "unrolled" && s.method != "cs" && s.method != "adjoint")
    throw ValidationError("unknown method '" + s.method + "' (unrolled | cs | adjoint)");
  const fs::path model_path = c.input("model", s.method == "unrolled");
  if (!model_path.empty()) s.model = load_recon(model_path);
  s.lambda = c.real("lambda");
  if (c.integer("cs_iters") < 0) throw ValidationError("cs_iters must be >= 0");
  return s;
}

inline Decoder make_decoder(const RunContext& c, const ReconSetup& s, double lambda) {
  if (s.method == "unrolled") return unrolled_decoder(*s.model);
  if (s.method == "adjoint") return [](const KspaceData& z, const AcquisitionModel& m) { return m.adjoint(z); };
  const int iters = c.integer("cs_iters");
  return [lambda, iters](const KspaceData& z, const AcquisitionModel& m) { return cs_recon(z, m, lambda, iters); };
}

/// Best CS weight on the validation split over a fixed log grid.
inline double tune_lambda(const RunContext& c, const ReconSetup& s, double sigma, std::uint64_t seed, ojson& log) {
  const auto val = s.ds.subset(s.ds.split.val);
  if (val.empty()) throw ValidationError("tune_lambda needs a non-empty validation split");
  double best = 0.0, best_psnr = -1e300;
  for (int e = -6; e <= -1; ++e) {
    const double lam = std::pow(10.0, e);
    const MetricTable t = evaluate(val, s.pattern, make_decoder(c, s, lam), sigma, seed, c.kb());
    log.push_back({{"lambda", lam}, {"val_psnr", t.mean_psnr()}});
    if (t.mean_psnr() > best_psnr) {
      best_psnr = t.mean_psnr();
      best = lam;
    }
  }
  return best;
}

}  // namespace detail

/// reconstruct writes images as well as metrics; evaluate writes metrics only.
inline int run_recon_or_eval(RunContext& c, bool write_images) {
  detail::ReconSetup s = detail::recon_setup(c);
  const double sigma = c.real("sigma");
  const std::uint64_t seed = c.seed("seed");
  ojson summary = {{"method", s.method}};
  if (s.method == "cs" && c.flag("tune_lambda")) {
    ojson log = ojson::array();
    s.lambda = detail::tune_lambda(c, s, sigma, RngStream::hash(seed, autosamp::detail::kValidationStream), log);
    summary["lambda_search"] = log;
  }
  if (s.method == "cs") summary["lambda"] = s.lambda;
  const auto slices = s.ds.subset(split_ids(s.ds, c.str("split")));
  const Decoder dec = detail::make_decoder(c, s, s.lambda);
  const KbParams kb = c.kb();

  if (write_images) {
    // Same noise draws as evaluate(), keeping each reconstruction for dumping.
    std::vector<ComplexImage> images(slices.size());
    MetricTable t;
    t.rows.resize(slices.size());
    const RngStream base(seed);
    parallel_for(slices.size(), [&](std::size_t i) {
      const VolumeRecord& rec = *slices[i];
      const AcquisitionModel model(s.pattern, rec.coils, sigma, kb);
      RngStream rng = base.split(i);
      const KspaceData z = model.measure(rec.image, rng);
      images[i] = dec(z, model);
      t.rows[i] = {rec.id, psnr(images[i], rec.image), ssim(images[i], rec.image)};
    });
    fs::create_directories(c.out / "recon");
    for (std::size_t i = 0; i < slices.size(); ++i) {
      save_array(c.out / "recon" / slices[i]->id, Array::from_image(images[i]));
      write_pgm16((c.out / "recon" / (slices[i]->id + ".pgm")).string(), magnitude(images[i]));
    }
    write_metrics_csv((c.out / "metrics.csv").string(), t);
    summary["metrics"] = table_summary(t);
  } else {
    const MetricTable t = evaluate(slices, s.pattern, dec, sigma, seed, kb);
    write_metrics_csv((c.out / "metrics.csv").string(), t);
    summary["metrics"] = table_summary(t);
  }
  write_json(c.out / "summary.json", summary);
  std::cout << summary["metrics"].dump() << '\n';
  return 0;
}

inline int run_train(RunContext& c) {
  Dataset ds;
  const fs::path data_path = c.input("dataset", false);
  if (!data_path.empty()) {
    ds = load_dataset(data_path);
  } else {
    SyntheticSpec spec;
    spec.n_records = c.integer("records");
    const GridSize g = parse_grid(c.str("grid"));
    spec.height = g.height;
    spec.width = g.width;
    spec.coils = c.integer("coils");
    spec.seed = c.seed("data_seed");
    ds = make_synthetic_dataset(spec);
  }
  if (ds.records.empty()) throw ValidationError("dataset has no records");

  SamplingPattern init;
  const fs::path pattern_path = c.input("pattern", false);
  if (!pattern_path.empty()) {
    init = load_pattern(pattern_path);
  } else {
    const auto& img = ds.records.front().image;
    init = generate_pattern(c, {img.height, img.width}, c.seed("pattern_seed"));
  }
  check_grid(init, ds);

  UnrolledConfig uc;
  uc.n_unrolls = c.integer("unrolls");
  uc.prox_kind = prox_kind_from_string(c.str("prox"));
  uc.channels = c.integer("channels");
  uc.n_resblocks = c.integer("resblocks");
  uc.step_init = c.real("step_init");
  uc.tau_init = c.real("tau_init");
  uc.tied_weights = c.flag("tied_weights");
  const ReconModel recon = ReconModel::init(uc, c.seed("model_seed"));

  TrainConfig tc;
  tc.lr_phi = c.real("lr_phi");
  tc.lr_theta = c.real("lr_theta");
  tc.beta1 = c.real("beta1");
  tc.beta2 = c.real("beta2");
  tc.adam_eps = c.real("adam_eps");
  tc.epochs = c.integer("epochs");
  tc.sigma = c.real("sigma");
  tc.loss_kind = loss_kind_from_string(c.str("loss"));
  tc.freeze_phi = c.flag("freeze_phi");
  tc.freeze_calib = c.flag("freeze_calib");
  tc.seed = c.seed("seed");
  tc.select = select_rule_from_string(c.str("select"));
  tc.keep_snapshots = false;
  tc.kb = c.kb();

  TrainHooks hooks;
  hooks.on_epoch = [](const EpochStats& s) {
    std::cout << "epoch " << s.epoch << " loss " << s.train_loss << " val_psnr " << s.val_psnr << " val_ssim " << s.val_ssim
              << '\n';
  };
  const TrainResult r = train_joint(ds, init, recon, tc, hooks);

  save_pattern(c.out / "init_pattern.csv", init);
  write_history_csv((c.out / "history.csv").string(), r.history);
  const Checkpoint& best = r.best_checkpoint();
  save_recon(c.out / "best" / "model.json", best.theta, ojson{{"epoch", best.epoch}, {"val_psnr", best.val_psnr}});
  save_pattern(c.out / "best" / "pattern.csv", best.phi);

  const std::uint64_t test_seed = c.seed("test_seed");
  ojson summary = {{"best_epoch", best.epoch},
                   {"val_psnr", best.val_psnr},
                   {"val_ssim", best.val_ssim},
                   {"select", to_string(tc.select)},
                   {"init_mean_free_radius", mean_free_radius(init)},
                   {"best_mean_free_radius", mean_free_radius(best.phi)},
                   {"diverged", r.diverged}};
  const auto test = ds.subset(ds.split.test);
  if (!test.empty()) {
    const MetricTable t = evaluate(test, best.phi, unrolled_decoder(best.theta), tc.sigma, test_seed, tc.kb);
    write_metrics_csv((c.out / "test_metrics.csv").string(), t);
    summary["test"] = table_summary(t);
  }
  if (r.diverged) summary["message"] = r.message;
  write_json(c.out / "summary.json", summary);
  if (r.diverged) {
    std::cerr << "error: training diverged: " << r.message << " (last good checkpoint kept)\n";
    return 3;
  }
  return 0;
}

inline int run_gradcheck(RunContext& c) {
  const std::string op = c.str("op");
  const bool all = c.flag("all");
  if (op.empty() == !all) throw ValidationError("gradcheck needs exactly one of --op or --all");
  const std::vector<std::string> ops = all ? grad_check_ops() : std::vector<std::string>{op};
  const std::uint64_t seed = c.seed("seed");
  const double h = c.real("fd_step"), tol = c.real("tol");
  ojson reports = ojson::array();
  bool pass = true;
  for (const auto& name : ops) {
    const GradCheckReport rep = grad_check(name, seed, h, tol);
    reports.push_back(to_json(rep));
    pass = pass && rep.pass();
    std::cout << (rep.pass() ? "PASS " : "FAIL ") << name << " max_rel_err=" << rep.max_rel_err() << '\n';
  }
  write_json(c.out / "report.json", {{"seed", seed}, {"h", h}, {"tol", tol}, {"pass", pass}, {"ops", reports}});
  return pass ? 0 : 3;
}

inline const std::vector<std::string>& command_names() {
  static const std::vector<std::string> names{"gen-pattern", "analyze-pattern", "simulate", "reconstruct",
                                              "train",       "evaluate",        "gradcheck"};
  return names;
}

/// Runs `command` into `out` and writes the manifest. Returns the exit code.
inline int execute(const std::string& command, const ojson& cfg, const fs::path& out, int threads) {
  RunContext c{command, cfg, out, {}};
  c.manifest.command = command;
  c.manifest.config = cfg;
  c.manifest.seeds = ojson::object();
  c.manifest.started = utc_now();
  c.manifest.threads = threads;
  fs::create_directories(out);
  // Stale files from an earlier run would pollute the output hashes.
  for (const auto& rel : list_files(out)) fs::remove(out / rel);

  const auto t0 = std::chrono::steady_clock::now();
  int code = 0;
  if (command == "gen-pattern") code = run_gen_pattern(c);
  else if (command == "analyze-pattern") code = run_analyze_pattern(c);
  else if (command == "simulate") code = run_simulate(c);
  else if (command == "reconstruct") code = run_recon_or_eval(c, true);
  else if (command == "evaluate") code = run_recon_or_eval(c, false);
  else if (command == "train") code = run_train(c);
  else if (command == "gradcheck") code = run_gradcheck(c);
  else throw ValidationError("unknown command '" + command + "'");
  c.manifest.wall_seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  c.manifest.exit_code = code;
  c.manifest.outputs = hash_tree(out, {kManifestName});
  c.manifest.write(out);
  return code;
}

/// Re-runs a manifest into `out` and compares output hashes file by file.
inline int run_replay(const fs::path& manifest_path, const fs::path& out, int threads) {
  const RunManifest m = read_manifest(manifest_path);
  for (const auto& in : m.inputs) {
    const fs::path p = in.at("path").get<std::string>();
    const ojson now = hash_input(p);
    // Key order differs between a fresh hash and one read back from disk.
    if (nlohmann::json::parse(now.at("files").dump()) != nlohmann::json::parse(in.at("files").dump())) {
      std::cerr << "error: input " << p << " changed since the recorded run\n";
      return 1;
    }
  }
  if (fs::exists(out) && fs::equivalent(out, manifest_path.parent_path()))
    throw ValidationError("replay output directory must differ from the recorded run");
  // Config values are in schema order already; re-coerce to catch a tampered file.
  ojson cfg = profile_defaults(m.command, "desk");
  apply_config(m.command, cfg, nlohmann::json::parse(m.config.dump()));
  const int code = execute(m.command, cfg, out, threads);
  const RunManifest fresh = read_manifest(out / kManifestName);

  int mismatches = 0;
  for (const auto& [file, hash] : m.outputs.items()) {
    const bool same = fresh.outputs.contains(file) && fresh.outputs[file] == hash;
    if (!same) ++mismatches;
    std::cout << (same ? "match    " : "MISMATCH ") << file << '\n';
  }
  for (const auto& [file, hash] : fresh.outputs.items())
    if (!m.outputs.contains(file)) {
      ++mismatches;
      std::cout << "EXTRA    " << file << '\n';
    }
  if (code != m.exit_code) {
    std::cout << "exit code " << code << " differs from recorded " << m.exit_code << '\n';
    ++mismatches;
  }
  std::cout << (mismatches == 0 ? "replay: identical" : "replay: " + std::to_string(mismatches) + " difference(s)") << '\n';
  return mismatches == 0 ? 0 : 1;
}

}  // namespace autosamp::cli
