#pragma once

// Pattern characterization: point spread functions, rasterized Voronoi
// cell areas and a log-log radial density fit.

#include <cmath>
#include <cstdint>
#include <fstream>
#include <limits>
#include <string>
#include <vector>

#include "autosamp/metrics.hpp"
#include "autosamp/nufft.hpp"
#include "autosamp/numerics.hpp"
#include "autosamp/patterns.hpp"

namespace autosamp {

struct PsfResult {
  ComplexImage psf;
  std::vector<double> profile;  // |psf| along the row through the origin
  int main_lobe_halfwidth = 0;
  double peak_sidelobe_db = 0.0;
};

/// Magnitude floor used when a PSF has no sidelobe energy at all.
inline constexpr double kSidelobeFloorDb = -400.0;

/// Adjoint of the all-ones measurement (repeated samples count with their
/// multiplicity), scaled to unit peak magnitude.
inline PsfResult psf(const SamplingPattern& pattern, GridSize grid, const KbParams& kb = KbParams::analysis()) {
  if (pattern.points.empty()) throw ValidationError("psf: empty pattern");
  CxVec ones(pattern.points.size());
  for (std::size_t i = 0; i < ones.size(); ++i) ones[i] = static_cast<double>(pattern.weight(i));
  PsfResult out;
  out.psf = nufft_adjoint(ones, pattern.points, kb, grid.height, grid.width);
  double peak = 0.0;
  for (const auto& v : out.psf.data) peak = std::max(peak, std::abs(v));
  if (!(peak > 0.0)) throw NumericalError("psf: vanishing response");
  out.psf *= cx(1.0 / peak, 0.0);

  const int cr = grid.height / 2, cc = grid.width / 2;
  for (int c = 0; c < grid.width; ++c) out.profile.push_back(std::abs(out.psf(cr, c)));

  // Main lobe ends at the first local minimum right of the center.
  int hw = 1;
  while (cc + hw + 1 < grid.width && out.profile[static_cast<std::size_t>(cc + hw + 1)] < out.profile[static_cast<std::size_t>(cc + hw)]) ++hw;
  out.main_lobe_halfwidth = hw;
  double side = 0.0;
  for (int r = 0; r < grid.height; ++r)
    for (int c = 0; c < grid.width; ++c) {
      const int dr = r - cr, dc = c - cc;
      if (dr * dr + dc * dc < hw * hw) continue;
      side = std::max(side, std::abs(out.psf(r, c)));
    }
  out.peak_sidelobe_db = side > 0.0 ? std::max(20.0 * std::log10(side), kSidelobeFloorDb) : kSidelobeFloorDb;
  return out;
}

struct VoronoiSummary {
  std::vector<double> area;
  std::vector<double> radius;
  std::vector<std::uint8_t> calibration;
  double domain_area = 0.0;  // rasterized area of the clipped domain
  int raster_dim = 0;
};

inline constexpr int kDefaultRasterDim = 1024;

/// Nearest-sample assignment of a raster_dim^2 grid over [-0.5, 0.5)^2,
/// clipped to the inscribed disc when the pattern is corner-cut. Ties go to
/// the lowest index.
inline VoronoiSummary voronoi_areas(const SamplingPattern& pattern, int raster_dim = kDefaultRasterDim) {
  const auto& pts = pattern.points;
  if (raster_dim < 1) throw ValidationError("voronoi_areas: raster_dim must be >= 1");
  if (pts.size() < 2) throw ValidationError("voronoi_areas: need at least 2 points");
  bool distinct = false;
  for (const auto& p : pts)
    if (!(p == pts.front())) distinct = true;
  if (!distinct) throw ValidationError("voronoi_areas: need at least 2 distinct points");

  // Bucket grid over the unit square.
  const int nb = std::max(1, static_cast<int>(std::sqrt(static_cast<double>(pts.size()))));
  auto bucket_of = [nb](double k) { return std::clamp(static_cast<int>(std::floor((k + 0.5) * nb)), 0, nb - 1); };
  std::vector<std::vector<int>> buckets(static_cast<std::size_t>(nb) * nb);
  for (std::size_t i = 0; i < pts.size(); ++i)
    buckets[static_cast<std::size_t>(bucket_of(pts[i].ky)) * nb + bucket_of(pts[i].kx)].push_back(static_cast<int>(i));
  const double bw = 1.0 / nb;

  const int d = raster_dim;
  const double cell = 1.0 / d;
  std::vector<int> owner(static_cast<std::size_t>(d) * d, -1);
  parallel_for(static_cast<std::size_t>(d), [&](std::size_t row) {
    const double y = (static_cast<double>(row) + 0.5) * cell - 0.5;
    for (int col = 0; col < d; ++col) {
      const double x = (col + 0.5) * cell - 0.5;
      if (pattern.corner_cut && x * x + y * y > 0.25) continue;
      const int bx = bucket_of(x), by = bucket_of(y);
      int best = -1;
      double best_d = std::numeric_limits<double>::infinity();
      for (int ring = 0; ring <= nb; ++ring) {
        // Everything beyond this ring is at least (ring - 1) bucket widths away.
        if (best >= 0) {
          const double reach = (ring - 1) * bw;
          if (reach > 0.0 && reach * reach > best_d) break;
        }
        for (int j = by - ring; j <= by + ring; ++j) {
          if (j < 0 || j >= nb) continue;
          for (int i = bx - ring; i <= bx + ring; ++i) {
            if (i < 0 || i >= nb) continue;
            if (std::max(std::abs(i - bx), std::abs(j - by)) != ring) continue;
            for (int idx : buckets[static_cast<std::size_t>(j) * nb + i]) {
              const double dx = pts[static_cast<std::size_t>(idx)].kx - x;
              const double dy = pts[static_cast<std::size_t>(idx)].ky - y;
              const double dd = dx * dx + dy * dy;
              if (dd < best_d || (dd == best_d && idx < best)) {
                best_d = dd;
                best = idx;
              }
            }
          }
        }
      }
      owner[row * d + static_cast<std::size_t>(col)] = best;
    }
  });

  VoronoiSummary vs;
  vs.raster_dim = d;
  vs.area.assign(pts.size(), 0.0);
  std::size_t inside = 0;
  for (int o : owner) {
    if (o < 0) continue;
    vs.area[static_cast<std::size_t>(o)] += cell * cell;
    ++inside;
  }
  vs.domain_area = static_cast<double>(inside) * cell * cell;
  for (std::size_t i = 0; i < pts.size(); ++i) {
    vs.radius.push_back(std::hypot(pts[i].kx, pts[i].ky));
    vs.calibration.push_back(pattern.is_calibration(i) ? 1 : 0);
  }
  return vs;
}

/// Least-squares slope of log(area) against log(k_r) over non-calibration
/// points with nonzero radius and area.
inline double radial_density_fit(const VoronoiSummary& vs) {
  std::vector<double> lx, ly;
  for (std::size_t i = 0; i < vs.area.size(); ++i) {
    const bool calib = i < vs.calibration.size() && vs.calibration[i];
    if (calib || !(vs.radius[i] > 0.0) || !(vs.area[i] > 0.0)) continue;
    lx.push_back(std::log(vs.radius[i]));
    ly.push_back(std::log(vs.area[i]));
  }
  if (lx.size() < 10) throw ValidationError("radial_density_fit: need at least 10 points outside the calibration region");
  const double n = static_cast<double>(lx.size());
  double mx = 0.0, my = 0.0;
  for (std::size_t i = 0; i < lx.size(); ++i) {
    mx += lx[i];
    my += ly[i];
  }
  mx /= n;
  my /= n;
  double sxx = 0.0, sxy = 0.0;
  for (std::size_t i = 0; i < lx.size(); ++i) {
    sxx += (lx[i] - mx) * (lx[i] - mx);
    sxy += (lx[i] - mx) * (ly[i] - my);
  }
  if (!(sxx > 1e-300)) throw ValidationError("radial_density_fit: all radii identical");
  return sxy / sxx;
}

// ---------------------------------------------------------------------------
// Writers.

inline void write_psf_profile_csv(const std::string& path, const PsfResult& r) {
  std::ofstream out(path);
  if (!out) throw IoError("cannot write " + path);
  out << "offset,magnitude,power\n";
  const int c0 = static_cast<int>(r.profile.size()) / 2;
  char buf[96];
  for (std::size_t c = 0; c < r.profile.size(); ++c) {
    std::snprintf(buf, sizeof buf, "%d,%.17g,%.17g\n", static_cast<int>(c) - c0, r.profile[c], r.profile[c] * r.profile[c]);
    out << buf;
  }
}

inline void write_voronoi_csv(const std::string& path, const SamplingPattern& p, const VoronoiSummary& vs) {
  std::ofstream out(path);
  if (!out) throw IoError("cannot write " + path);
  out << "index,kx,ky,k_r,area,calibration\n";
  char buf[160];
  for (std::size_t i = 0; i < vs.area.size(); ++i) {
    std::snprintf(buf, sizeof buf, "%zu,%.17g,%.17g,%.17g,%.17g,%d\n", i, p.points[i].kx, p.points[i].ky, vs.radius[i], vs.area[i],
                  static_cast<int>(vs.calibration[i]));
    out << buf;
  }
}

/// Binary 16-bit PGM (P5, big-endian samples), scaled so the maximum maps to
/// 65535.
inline void write_pgm16(const std::string& path, const RealImage& img) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot write " + path);
  double peak = 0.0;
  for (double v : img.data) peak = std::max(peak, v);
  out << "P5\n" << img.width << " " << img.height << "\n65535\n";
  for (double v : img.data) {
    const double s = peak > 0.0 ? std::clamp(v / peak, 0.0, 1.0) : 0.0;
    const auto q = static_cast<std::uint16_t>(std::lround(s * 65535.0));
    const char bytes[2] = {static_cast<char>(q >> 8), static_cast<char>(q & 0xff)};
    out.write(bytes, 2);
  }
}

struct Pgm16 {
  int width = 0;
  int height = 0;
  std::vector<std::uint16_t> data;
};

inline Pgm16 read_pgm16(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot read " + path);
  std::string magic;
  int maxval = 0;
  Pgm16 img;
  in >> magic >> img.width >> img.height >> maxval;
  if (magic != "P5" || maxval != 65535 || img.width <= 0 || img.height <= 0) throw IoError("not a 16-bit PGM: " + path);
  in.get();
  img.data.resize(static_cast<std::size_t>(img.width) * img.height);
  for (auto& v : img.data) {
    unsigned char b[2];
    if (!in.read(reinterpret_cast<char*>(b), 2)) throw IoError("truncated PGM: " + path);
    v = static_cast<std::uint16_t>((b[0] << 8) | b[1]);
  }
  return img;
}

}  // namespace autosamp
