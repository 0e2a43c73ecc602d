#pragma once

// PSNR on complex images and SSIM on magnitude images.

#include <cmath>
#include <fstream>
#include <string>
#include <vector>

#include "autosamp/numerics.hpp"

namespace autosamp {

inline constexpr double kPsnrCap = 99.0;

/// 10 log10(peak^2 / MSE) with the peak taken from |x_ref|. Returns the cap
/// when MSE < peak^2 * 10^-9.9.
inline double psnr(const ComplexImage& x_hat, const ComplexImage& x_ref) {
  x_hat.require_same(x_ref);
  double peak = 0.0;
  for (const auto& v : x_ref.data) peak = std::max(peak, std::abs(v));
  if (!(peak > 0.0)) throw ValidationError("psnr: reference image is identically zero");
  double mse = 0.0;
  for (std::size_t p = 0; p < x_hat.size(); ++p) mse += std::norm(x_hat.data[p] - x_ref.data[p]);
  mse /= static_cast<double>(x_hat.size());
  const double peak2 = peak * peak;
  if (mse < peak2 * std::pow(10.0, -kPsnrCap / 10.0)) return kPsnrCap;
  return 10.0 * std::log10(peak2 / mse);
}

/// Real-valued image for SSIM.
struct RealImage {
  int height = 0;
  int width = 0;
  std::vector<double> data;

  RealImage() = default;
  RealImage(int h, int w, double fill = 0.0) : height(h), width(w), data(static_cast<std::size_t>(h) * w, fill) {}
  double operator()(int r, int c) const { return data[static_cast<std::size_t>(r) * width + c]; }
  double& operator()(int r, int c) { return data[static_cast<std::size_t>(r) * width + c]; }
};

inline RealImage magnitude(const ComplexImage& x) {
  RealImage out(x.height, x.width);
  for (std::size_t p = 0; p < x.size(); ++p) out.data[p] = std::abs(x.data[p]);
  return out;
}

struct SsimParams {
  int window = 11;
  double sigma = 1.5;
  double k1 = 0.01;
  double k2 = 0.03;
};

/// Mean SSIM over all window positions that fit inside the image. The
/// dynamic range is the maximum of the reference.
inline double ssim(const RealImage& x, const RealImage& ref, const SsimParams& sp = {}) {
  if (x.height != ref.height || x.width != ref.width) throw ValidationError("ssim: shape mismatch");
  if (x.height < sp.window || x.width < sp.window) throw ValidationError("ssim: image smaller than the window");
  for (std::size_t p = 0; p < x.data.size(); ++p)
    if (x.data[p] < 0.0 || ref.data[p] < 0.0) throw ValidationError("ssim: inputs must be nonnegative");
  double range = 0.0;
  for (double v : ref.data) range = std::max(range, v);
  if (!(range > 0.0)) throw ValidationError("ssim: reference image is identically zero");

  const int k = sp.window;
  std::vector<double> g(static_cast<std::size_t>(k));
  double gs = 0.0;
  for (int i = 0; i < k; ++i) {
    const double d = i - (k - 1) / 2.0;
    g[static_cast<std::size_t>(i)] = std::exp(-d * d / (2.0 * sp.sigma * sp.sigma));
    gs += g[static_cast<std::size_t>(i)];
  }
  for (auto& v : g) v /= gs;

  const double c1 = (sp.k1 * range) * (sp.k1 * range);
  const double c2 = (sp.k2 * range) * (sp.k2 * range);
  const int oh = x.height - k + 1, ow = x.width - k + 1;

  // Separable valid-mode filtering of x, y, x^2, y^2, xy.
  auto filter = [&](auto&& pixel) {
    RealImage rows(x.height, ow);
    for (int r = 0; r < x.height; ++r)
      for (int c = 0; c < ow; ++c) {
        double s = 0.0;
        for (int j = 0; j < k; ++j) s += g[static_cast<std::size_t>(j)] * pixel(r, c + j);
        rows(r, c) = s;
      }
    RealImage out(oh, ow);
    for (int r = 0; r < oh; ++r)
      for (int c = 0; c < ow; ++c) {
        double s = 0.0;
        for (int j = 0; j < k; ++j) s += g[static_cast<std::size_t>(j)] * rows(r + j, c);
        out(r, c) = s;
      }
    return out;
  };
  const RealImage mx = filter([&](int r, int c) { return x(r, c); });
  const RealImage my = filter([&](int r, int c) { return ref(r, c); });
  const RealImage mxx = filter([&](int r, int c) { return x(r, c) * x(r, c); });
  const RealImage myy = filter([&](int r, int c) { return ref(r, c) * ref(r, c); });
  const RealImage mxy = filter([&](int r, int c) { return x(r, c) * ref(r, c); });

  double total = 0.0;
  for (std::size_t p = 0; p < mx.data.size(); ++p) {
    const double ux = mx.data[p], uy = my.data[p];
    const double vx = mxx.data[p] - ux * ux;
    const double vy = myy.data[p] - uy * uy;
    const double cxy = mxy.data[p] - ux * uy;
    total += ((2.0 * ux * uy + c1) * (2.0 * cxy + c2)) / ((ux * ux + uy * uy + c1) * (vx + vy + c2));
  }
  return total / static_cast<double>(mx.data.size());
}

inline double ssim(const ComplexImage& x_hat, const ComplexImage& x_ref, const SsimParams& sp = {}) {
  return ssim(magnitude(x_hat), magnitude(x_ref), sp);
}

struct MetricRow {
  std::string id;
  double psnr = 0.0;
  double ssim = 0.0;
  bool operator==(const MetricRow&) const = default;
};

struct MetricTable {
  std::vector<MetricRow> rows;

  double mean_psnr() const {
    double s = 0.0;
    for (const auto& r : rows) s += r.psnr;
    return rows.empty() ? 0.0 : s / static_cast<double>(rows.size());
  }
  double mean_ssim() const {
    double s = 0.0;
    for (const auto& r : rows) s += r.ssim;
    return rows.empty() ? 0.0 : s / static_cast<double>(rows.size());
  }
  bool operator==(const MetricTable&) const = default;
};

inline void write_metrics_csv(const std::string& path, const MetricTable& t) {
  std::ofstream out(path);
  if (!out) throw IoError("cannot write " + path);
  out << "id,psnr,ssim\n";
  char buf[128];
  for (const auto& r : t.rows) {
    std::snprintf(buf, sizeof buf, ",%.17g,%.17g\n", r.psnr, r.ssim);
    out << r.id << buf;
  }
  std::snprintf(buf, sizeof buf, ",%.17g,%.17g\n", t.mean_psnr(), t.mean_ssim());
  out << "mean" << buf;
}

}  // namespace autosamp
