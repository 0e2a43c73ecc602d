#pragma once

// Sampling-pattern generators (uniform disc, variable-density Gaussian,
// variable-density Poisson disc), Cartesian calibration blocks, coordinate
// projection, discretization, and the CSV + JSON sidecar pattern files.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <map>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "autosamp/nufft.hpp"
#include "autosamp/numerics.hpp"
#include "json.hpp"

namespace autosamp {

struct GridSize {
  int height = 64;
  int width = 64;
  int pixels() const { return height * width; }
  bool operator==(const GridSize&) const = default;
};

/// Parses "64x64" (height x width) or a single "64".
inline GridSize parse_grid(const std::string& s) {
  GridSize g;
  const auto x = s.find('x');
  try {
    if (x == std::string::npos) {
      g.height = g.width = std::stoi(s);
    } else {
      g.height = std::stoi(s.substr(0, x));
      g.width = std::stoi(s.substr(x + 1));
    }
  } catch (const std::exception&) {
    throw ValidationError("invalid grid '" + s + "' (expected HxW)");
  }
  if (g.height < 1 || g.width < 1) throw ValidationError("invalid grid '" + s + "'");
  return g;
}

/// A list of k-space samples plus the metadata needed to interpret it.
/// Calibration points always occupy the first `n_calib` entries.
struct SamplingPattern {
  std::vector<SamplePoint> points;
  std::vector<std::uint8_t> frozen;      // 1 = excluded from coordinate optimization
  std::vector<int> multiplicity;         // empty means every sample counts once
  double accel = 1.0;
  int calib = 0;
  int n_calib = 0;
  bool corner_cut = false;
  GridSize grid;
  std::uint64_t seed = 0;
  std::string kind;
  std::optional<double> slope;           // fitted Poisson-disc slope, if any

  std::size_t size() const { return points.size(); }
  bool is_calibration(std::size_t i) const { return i < static_cast<std::size_t>(n_calib); }
  int weight(std::size_t i) const { return multiplicity.empty() ? 1 : multiplicity[i]; }

  /// Total sample count with repeats, i.e. M.
  std::size_t sample_count() const {
    if (multiplicity.empty()) return points.size();
    std::size_t n = 0;
    for (int m : multiplicity) n += static_cast<std::size_t>(m);
    return n;
  }

  bool operator==(const SamplingPattern&) const = default;
};

/// Mean |k| over points that are not calibration samples.
inline double mean_free_radius(const SamplingPattern& p) {
  double s = 0.0;
  std::size_t n = 0;
  for (std::size_t i = 0; i < p.points.size(); ++i) {
    if (p.is_calibration(i)) continue;
    s += std::hypot(p.points[i].kx, p.points[i].ky);
    ++n;
  }
  return n ? s / static_cast<double>(n) : 0.0;
}

/// Largest representable coordinate after projection.
inline constexpr double kCoordMax = 0.5 - 0x1.0p-20;

inline SamplePoint project(SamplePoint p) {
  return {std::clamp(p.kx, -0.5, kCoordMax), std::clamp(p.ky, -0.5, kCoordMax)};
}

inline std::vector<SamplePoint> project(std::vector<SamplePoint> pts) {
  for (auto& p : pts) p = project(p);
  return pts;
}

/// Number of samples for acceleration R on a grid: round(N / R).
inline int target_sample_count(GridSize grid, double accel) {
  if (!(accel >= 1.0)) throw ValidationError("acceleration must be >= 1");
  return static_cast<int>(std::lround(grid.pixels() / accel));
}

/// calib x calib Cartesian block centered on DC, row-major from the most
/// negative offset. Offsets run over [-calib/2, calib - calib/2 - 1].
inline std::vector<SamplePoint> calibration_block(GridSize grid, int calib) {
  if (calib < 0) throw ValidationError("calibration size must be >= 0");
  if (calib > grid.height || calib > grid.width) throw ValidationError("calibration block larger than grid");
  std::vector<SamplePoint> out;
  out.reserve(static_cast<std::size_t>(calib) * calib);
  for (int i = 0; i < calib; ++i) {
    for (int j = 0; j < calib; ++j) {
      out.push_back({static_cast<double>(j - calib / 2) / grid.width, static_cast<double>(i - calib / 2) / grid.height});
    }
  }
  return out;
}

namespace detail {

inline SamplingPattern start_pattern(const std::string& kind, GridSize grid, double accel, int calib, bool corner_cut,
                                     std::uint64_t seed, bool freeze_calib) {
  SamplingPattern p;
  p.kind = kind;
  p.grid = grid;
  p.accel = accel;
  p.calib = calib;
  p.corner_cut = corner_cut;
  p.seed = seed;
  p.points = calibration_block(grid, calib);
  p.n_calib = static_cast<int>(p.points.size());
  p.frozen.assign(p.points.size(), freeze_calib ? 1 : 0);
  return p;
}

inline int free_sample_count(GridSize grid, double accel, int calib) {
  const int m = target_sample_count(grid, accel);
  if (m < calib * calib)
    throw ValidationError("acceleration leaves M = " + std::to_string(m) + " samples, fewer than the " +
                          std::to_string(calib * calib) + "-point calibration block");
  return m - calib * calib;
}

inline void append_free(SamplingPattern& p, const std::vector<SamplePoint>& pts) {
  for (const auto& q : pts) {
    p.points.push_back(project(q));
    p.frozen.push_back(0);
  }
}

}  // namespace detail

struct PatternOptions {
  int calib = 20;
  bool corner_cut = false;
  bool freeze_calib = false;
};

/// i.i.d. uniform samples on the disc of radius 0.5 * radius_frac (corner_cut)
/// or the square of half-width 0.5 * radius_frac, plus the calibration block.
inline SamplingPattern gen_uniform(RngStream rng, GridSize grid, double accel, double radius_frac,
                                   const PatternOptions& opt = {}) {
  if (!(radius_frac > 0.0 && radius_frac <= 1.0)) throw ValidationError("radius_frac must be in (0, 1]");
  const int n_free = detail::free_sample_count(grid, accel, opt.calib);
  auto p = detail::start_pattern(radius_frac < 1.0 ? "uniform-small" : "uniform", grid, accel, opt.calib, opt.corner_cut,
                                 rng.seed(), opt.freeze_calib);
  const double extent = 0.5 * radius_frac;
  std::vector<SamplePoint> pts;
  pts.reserve(static_cast<std::size_t>(n_free));
  for (int i = 0; i < n_free; ++i) {
    if (opt.corner_cut) {
      const double r = extent * std::sqrt(rng.uniform());
      const double t = 2.0 * std::numbers::pi * rng.uniform();
      pts.push_back({r * std::cos(t), r * std::sin(t)});
    } else {
      pts.push_back({rng.uniform(-extent, extent), rng.uniform(-extent, extent)});
    }
  }
  detail::append_free(p, pts);
  return p;
}

/// Isotropic Gaussian samples (std = std_frac of the k-space width), rejected
/// and redrawn until inside the square and, with corner_cut, the inscribed disc.
inline SamplingPattern gen_vd_gaussian(RngStream rng, GridSize grid, double accel, double std_frac = 0.25,
                                       const PatternOptions& opt = {}) {
  if (!(std_frac > 0.0)) throw ValidationError("std_frac must be > 0");
  const int n_free = detail::free_sample_count(grid, accel, opt.calib);
  auto p = detail::start_pattern("vd-gaussian", grid, accel, opt.calib, opt.corner_cut, rng.seed(), opt.freeze_calib);
  constexpr long kMaxDraws = 1'000'000;
  std::vector<SamplePoint> pts;
  pts.reserve(static_cast<std::size_t>(n_free));
  for (int i = 0; i < n_free; ++i) {
    long draws = 0;
    for (;;) {
      if (++draws > kMaxDraws) throw NumericalError("gen_vd_gaussian: rejection sampling exceeded 1e6 draws for one point");
      const SamplePoint q{std_frac * rng.normal(), std_frac * rng.normal()};
      if (q.kx < -0.5 || q.kx >= 0.5 || q.ky < -0.5 || q.ky >= 0.5) continue;
      if (opt.corner_cut && q.kx * q.kx + q.ky * q.ky >= 0.25) continue;
      pts.push_back(q);
      break;
    }
  }
  detail::append_free(p, pts);
  return p;
}

namespace detail {

/// Variable-radius Bridson sampler. Distances are measured in Cartesian grid
/// cells; the exclusion radius at k is 1 + slope * |k| / 0.5 cells, and a
/// candidate is rejected when closer to an existing sample than the larger of
/// the two samples' radii.
class PoissonDisc {
 public:
  PoissonDisc(GridSize grid, double slope, bool corner_cut) : grid_(grid), slope_(slope), corner_cut_(corner_cut) {
    rmax_ = radius_at(0.5 * grid.width, 0.5 * grid.height);
    cols_ = grid.width + 1;
    rows_ = grid.height + 1;
    buckets_.assign(static_cast<std::size_t>(cols_) * rows_, {});
    // |p - q| < max(r(p), r(q)) implies |p - q| < r(q) / (1 - lip) when the
    // radius is lip-Lipschitz with lip < 1; otherwise fall back to rmax.
    lip_ = 2.0 * slope_ / std::max(grid.width, grid.height);
  }

  /// Radius in cells at grid-unit position (x, y), origin at DC.
  double radius_at(double x, double y) const {
    const double kr = std::hypot(x / grid_.width, y / grid_.height);
    return 1.0 + slope_ * kr / 0.5;
  }

  std::vector<SamplePoint> run(RngStream& rng, int attempts = 30) {
    const double hw = 0.5 * grid_.width;
    const double hh = 0.5 * grid_.height;
    std::vector<std::size_t> active;
    auto first = random_inside(rng);
    add(first);
    active.push_back(0);
    while (!active.empty()) {
      const std::size_t pick = static_cast<std::size_t>(rng.below(active.size()));
      const auto [px, py] = pts_[active[pick]];
      const double r = radius_at(px, py);
      bool placed = false;
      for (int a = 0; a < attempts; ++a) {
        const double rho = r * std::sqrt(1.0 + 3.0 * rng.uniform());  // area-uniform in [r, 2r]
        const double t = 2.0 * std::numbers::pi * rng.uniform();
        const double qx = px + rho * std::cos(t);
        const double qy = py + rho * std::sin(t);
        if (qx < -hw || qx >= hw || qy < -hh || qy >= hh) continue;
        if (!inside(qx, qy)) continue;
        if (conflicts(qx, qy)) continue;
        add({qx, qy});
        active.push_back(pts_.size() - 1);
        placed = true;
        break;
      }
      if (!placed) {
        active[pick] = active.back();
        active.pop_back();
      }
    }
    std::vector<SamplePoint> out;
    out.reserve(pts_.size());
    for (auto [x, y] : pts_) out.push_back({x / grid_.width, y / grid_.height});
    return out;
  }

 private:
  bool inside(double x, double y) const {
    if (!corner_cut_) return true;
    const double u = x / grid_.width;
    const double v = y / grid_.height;
    return u * u + v * v < 0.25;
  }

  std::pair<double, double> random_inside(RngStream& rng) const {
    for (;;) {
      const double x = rng.uniform(-0.5, 0.5) * grid_.width;
      const double y = rng.uniform(-0.5, 0.5) * grid_.height;
      if (inside(x, y)) return {x, y};
    }
  }

  std::size_t bucket(double x, double y) const {
    const int c = std::clamp(static_cast<int>(std::floor(x + 0.5 * grid_.width)), 0, cols_ - 1);
    const int r = std::clamp(static_cast<int>(std::floor(y + 0.5 * grid_.height)), 0, rows_ - 1);
    return static_cast<std::size_t>(r) * cols_ + c;
  }

  void add(std::pair<double, double> p) {
    pts_.push_back(p);
    buckets_[bucket(p.first, p.second)].push_back(pts_.size() - 1);
  }

  bool conflicts(double x, double y) const {
    const double rq = radius_at(x, y);
    const double reach = lip_ < 0.9 ? std::min(rmax_, rq / (1.0 - lip_)) : rmax_;
    const int span = static_cast<int>(std::ceil(reach)) + 1;
    const int c0 = static_cast<int>(std::floor(x + 0.5 * grid_.width));
    const int r0 = static_cast<int>(std::floor(y + 0.5 * grid_.height));
    for (int r = std::max(0, r0 - span); r <= std::min(rows_ - 1, r0 + span); ++r) {
      for (int c = std::max(0, c0 - span); c <= std::min(cols_ - 1, c0 + span); ++c) {
        for (std::size_t idx : buckets_[static_cast<std::size_t>(r) * cols_ + c]) {
          const auto [px, py] = pts_[idx];
          const double d = std::hypot(px - x, py - y);
          if (d < std::max(rq, radius_at(px, py))) return true;
        }
      }
    }
    return false;
  }

  GridSize grid_;
  double slope_;
  bool corner_cut_;
  double rmax_ = 1.0;
  double lip_ = 0.0;
  int cols_ = 0;
  int rows_ = 0;
  std::vector<std::pair<double, double>> pts_;
  std::vector<std::vector<std::size_t>> buckets_;
};

/// True when k lies in the square covered by the calibration block (padded by
/// half a cell on each side).
inline bool in_calibration_region(SamplePoint k, GridSize grid, int calib) {
  if (calib <= 0) return false;
  const double x = k.kx * grid.width;
  const double y = k.ky * grid.height;
  const double lo = -calib / 2 - 0.5;
  const double hi = calib - calib / 2 - 0.5;
  return x >= lo && x < hi && y >= lo && y < hi;
}

inline std::vector<SamplePoint> poisson_outside_calibration(GridSize grid, double slope, const PatternOptions& opt,
                                                            std::uint64_t seed) {
  RngStream rng(seed);
  auto pts = PoissonDisc(grid, slope, opt.corner_cut).run(rng);
  std::erase_if(pts, [&](SamplePoint k) { return in_calibration_region(k, grid, opt.calib); });
  return pts;
}

}  // namespace detail

/// Variable-density Poisson-disc pattern with density falling as 1/(1 + s|r|).
/// The slope s is bisected until the total sample count (calibration included)
/// is within tol of round(N / R). Every evaluation reuses the same seed, so
/// the count is a near-monotone function of s.
inline SamplingPattern gen_vd_poisson(RngStream rng, GridSize grid, double accel, double tol = 0.02,
                                      const PatternOptions& opt = {}) {
  if (!(tol > 0.0)) throw ValidationError("tol must be > 0");
  const int target = target_sample_count(grid, accel);
  detail::free_sample_count(grid, accel, opt.calib);
  const int calib_pts = opt.calib * opt.calib;
  const std::uint64_t seed = rng.next_u64();
  auto count = [&](double s) { return static_cast<int>(detail::poisson_outside_calibration(grid, s, opt, seed).size()) + calib_pts; };
  auto within = [&](int m, double t) { return std::abs(m - target) <= t * target; };
  // Aim for half the tolerance; keep the closest count seen.
  const double aim = 0.5 * tol;
  double best = 0.0;
  int best_m = count(0.0);
  auto consider = [&](double s, int m) {
    if (std::abs(m - target) < std::abs(best_m - target)) {
      best = s;
      best_m = m;
    }
  };
  if (best_m < target && !within(best_m, tol))
    throw NumericalError("gen_vd_poisson: acceleration too low; even slope 0 gives only " + std::to_string(best_m) + " samples");

  constexpr int kMaxIter = 50;
  double lo = 0.0, hi = 1.0;
  int m_hi = count(hi);
  consider(hi, m_hi);
  for (int i = 0; m_hi > target && !within(best_m, aim); ++i) {
    if (i >= kMaxIter) throw NumericalError("gen_vd_poisson: could not bracket the slope");
    lo = hi;
    hi *= 2.0;
    m_hi = count(hi);
    consider(hi, m_hi);
  }
  for (int i = 0; i < kMaxIter && !within(best_m, aim); ++i) {
    const double mid = 0.5 * (lo + hi);
    const int m = count(mid);
    consider(mid, m);
    (m > target ? lo : hi) = mid;
  }
  if (!within(best_m, tol))
    throw NumericalError("gen_vd_poisson: closest count " + std::to_string(best_m) + " is outside tol of target " +
                         std::to_string(target) + " (grid too small for this tolerance?)");

  auto p = detail::start_pattern("vd-poisson", grid, accel, opt.calib, opt.corner_cut, rng.seed(), opt.freeze_calib);
  detail::append_free(p, detail::poisson_outside_calibration(grid, best, opt, seed));
  p.slope = best;
  return p;
}

/// Fully sampled Cartesian grid (every pixel frequency once).
inline SamplingPattern gen_cartesian(GridSize grid) {
  SamplingPattern p;
  p.kind = "cartesian";
  p.grid = grid;
  p.accel = 1.0;
  for (int i = 0; i < grid.height; ++i)
    for (int j = 0; j < grid.width; ++j)
      p.points.push_back({static_cast<double>(j - grid.width / 2) / grid.width, static_cast<double>(i - grid.height / 2) / grid.height});
  p.frozen.assign(p.points.size(), 0);
  return p;
}

/// Snaps each coordinate to the nearest Cartesian frequency j / n. A sample
/// that rounds to +0.5 wraps to -0.5, the same DFT frequency. Coincident
/// samples collapse into one entry whose multiplicity is the number merged.
inline SamplingPattern discretize(const SamplingPattern& pattern) {
  const GridSize grid = pattern.grid;
  auto snap = [](double k, int n) {
    long j = std::lround(k * n);
    if (j >= n - n / 2) j -= n;  // wrap into [-n/2, n - n/2)
    if (j < -(n / 2)) j += n;
    return static_cast<double>(j) / n;
  };
  SamplingPattern out = pattern;
  out.points.clear();
  out.frozen.clear();
  out.multiplicity.clear();
  std::map<std::pair<double, double>, std::size_t> seen;
  int calib_kept = 0;
  for (std::size_t i = 0; i < pattern.points.size(); ++i) {
    const SamplePoint q{snap(pattern.points[i].kx, grid.width), snap(pattern.points[i].ky, grid.height)};
    const auto key = std::make_pair(q.kx, q.ky);
    const int w = pattern.weight(i);
    if (auto it = seen.find(key); it != seen.end()) {
      out.multiplicity[it->second] += w;
      out.frozen[it->second] = static_cast<std::uint8_t>(out.frozen[it->second] | pattern.frozen[i]);
      continue;
    }
    seen.emplace(key, out.points.size());
    out.points.push_back(q);
    out.frozen.push_back(pattern.frozen[i]);
    out.multiplicity.push_back(w);
    if (pattern.is_calibration(i)) ++calib_kept;
  }
  out.n_calib = calib_kept;
  out.kind = pattern.kind.empty() ? "discretized" : pattern.kind + "+discretized";
  return out;
}

// ---------------------------------------------------------------------------
// Pattern files: CSV `kx,ky,frozen` plus a JSON sidecar.

inline nlohmann::ordered_json pattern_sidecar(const SamplingPattern& p) {
  nlohmann::ordered_json j;
  j["R"] = p.accel;
  j["calib"] = p.calib;
  j["corner_cut"] = p.corner_cut;
  j["grid_h"] = p.grid.height;
  j["grid_w"] = p.grid.width;
  j["seed"] = p.seed;
  j["kind"] = p.kind;
  j["n_calib"] = p.n_calib;
  j["M"] = p.sample_count();
  if (p.slope) j["slope"] = *p.slope;
  if (!p.multiplicity.empty()) j["multiplicity"] = p.multiplicity;
  return j;
}

inline std::filesystem::path sidecar_path(const std::filesystem::path& csv) {
  auto s = csv;
  return s.replace_extension(".json");
}

inline void save_pattern(const std::filesystem::path& csv_path, const SamplingPattern& p) {
  if (csv_path.has_parent_path()) std::filesystem::create_directories(csv_path.parent_path());
  std::ofstream csv(csv_path, std::ios::trunc);
  if (!csv) throw IoError("cannot write " + csv_path.string());
  csv << "kx,ky,frozen\n";
  char buf[96];
  for (std::size_t i = 0; i < p.points.size(); ++i) {
    std::snprintf(buf, sizeof buf, "%.17g,%.17g,%d\n", p.points[i].kx, p.points[i].ky, p.frozen[i] ? 1 : 0);
    csv << buf;
  }
  std::ofstream js(sidecar_path(csv_path), std::ios::trunc);
  if (!js) throw IoError("cannot write " + sidecar_path(csv_path).string());
  js << pattern_sidecar(p).dump(2) << '\n';
}

inline SamplingPattern load_pattern(const std::filesystem::path& csv_path) {
  std::ifstream csv(csv_path);
  if (!csv) throw IoError("cannot open pattern " + csv_path.string());
  std::ifstream js(sidecar_path(csv_path));
  if (!js) throw IoError("missing pattern sidecar " + sidecar_path(csv_path).string());

  SamplingPattern p;
  try {
    const auto j = nlohmann::json::parse(js);
    p.accel = j.at("R").get<double>();
    p.calib = j.at("calib").get<int>();
    p.corner_cut = j.at("corner_cut").get<bool>();
    p.grid = {j.at("grid_h").get<int>(), j.at("grid_w").get<int>()};
    p.seed = j.at("seed").get<std::uint64_t>();
    p.kind = j.value("kind", std::string{});
    p.n_calib = j.value("n_calib", p.calib * p.calib);
    if (j.contains("slope")) p.slope = j["slope"].get<double>();
    if (j.contains("multiplicity")) p.multiplicity = j["multiplicity"].get<std::vector<int>>();
  } catch (const nlohmann::json::exception& e) {
    throw IoError("malformed pattern sidecar: " + std::string(e.what()));
  }

  std::string line;
  if (!std::getline(csv, line) || line != "kx,ky,frozen") throw IoError("pattern CSV must start with 'kx,ky,frozen'");
  std::size_t lineno = 1;
  while (std::getline(csv, line)) {
    ++lineno;
    if (line.empty()) continue;
    double kx = 0, ky = 0;
    int fr = 0;
    if (std::sscanf(line.c_str(), "%lf,%lf,%d", &kx, &ky, &fr) != 3)
      throw IoError("pattern CSV line " + std::to_string(lineno) + " is malformed");
    p.points.push_back({kx, ky});
    p.frozen.push_back(fr ? 1 : 0);
  }
  if (!p.multiplicity.empty() && p.multiplicity.size() != p.points.size())
    throw IoError("pattern sidecar multiplicity length does not match CSV");
  return p;
}

}  // namespace autosamp
