#pragma once

// Independent reference implementations used only by the tests. They are
// deliberately naive: direct summations with no shared code paths beyond
// the ComplexImage container.

#include <cmath>
#include <complex>
#include <numbers>
#include <vector>

#include "autosamp/numerics.hpp"
#include "autosamp/nufft.hpp"

namespace oracle {

using autosamp::ComplexImage;
using autosamp::cx;
using autosamp::CxVec;
using autosamp::SamplePoint;

inline constexpr double kTwoPi = 2.0 * std::numbers::pi;

/// y_m = (1/sqrt(N)) sum_r x_r exp(-i 2 pi (kx * col + ky * row)), with
/// pixel offsets measured from the center index n/2.
inline CxVec nudft(const ComplexImage& x, const std::vector<SamplePoint>& pts) {
  const double scale = 1.0 / std::sqrt(static_cast<double>(x.size()));
  CxVec y(pts.size());
  for (std::size_t m = 0; m < pts.size(); ++m) {
    cx acc{};
    for (int r = 0; r < x.height; ++r)
      for (int c = 0; c < x.width; ++c) {
        const double ph = -kTwoPi * (pts[m].kx * (c - x.width / 2) + pts[m].ky * (r - x.height / 2));
        acc += x(r, c) * std::polar(1.0, ph);
      }
    y[m] = acc * scale;
  }
  return y;
}

inline ComplexImage nudft_adjoint(const CxVec& y, const std::vector<SamplePoint>& pts, int h, int w) {
  const double scale = 1.0 / std::sqrt(static_cast<double>(h) * w);
  ComplexImage x(h, w);
  for (int r = 0; r < h; ++r)
    for (int c = 0; c < w; ++c) {
      cx acc{};
      for (std::size_t m = 0; m < pts.size(); ++m) {
        const double ph = kTwoPi * (pts[m].kx * (c - w / 2) + pts[m].ky * (r - h / 2));
        acc += y[m] * std::polar(1.0, ph);
      }
      x(r, c) = acc * scale;
    }
  return x;
}

/// Centered unitary DFT by direct summation: frequency index u maps to
/// k = (u - n/2) / n.
inline ComplexImage dft2c(const ComplexImage& x, int sign = -1) {
  const int h = x.height, w = x.width;
  ComplexImage out(h, w);
  const double scale = 1.0 / std::sqrt(static_cast<double>(h) * w);
  for (int u = 0; u < h; ++u)
    for (int v = 0; v < w; ++v) {
      cx acc{};
      for (int r = 0; r < h; ++r)
        for (int c = 0; c < w; ++c) {
          const double ph = sign * kTwoPi *
                            (static_cast<double>(u - h / 2) * (r - h / 2) / h + static_cast<double>(v - w / 2) * (c - w / 2) / w);
          acc += x(r, c) * std::polar(1.0, ph);
        }
      out(u, v) = acc * scale;
    }
  return out;
}

/// Max-normalized sum_m exp(+i 2 pi k_m . r).
inline ComplexImage psf(const std::vector<SamplePoint>& pts, int h, int w) {
  ComplexImage out(h, w);
  double peak = 0.0;
  for (int r = 0; r < h; ++r)
    for (int c = 0; c < w; ++c) {
      cx acc{};
      for (const auto& p : pts) acc += std::polar(1.0, kTwoPi * (p.kx * (c - w / 2) + p.ky * (r - h / 2)));
      out(r, c) = acc;
      peak = std::max(peak, std::abs(acc));
    }
  for (auto& v : out.data) v /= peak;
  return out;
}

inline double max_abs_diff(const CxVec& a, const CxVec& b) {
  double m = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) m = std::max(m, std::abs(a[i] - b[i]));
  return m;
}

inline double max_abs(const CxVec& a) {
  double m = 0.0;
  for (const auto& v : a) m = std::max(m, std::abs(v));
  return m;
}

/// ||a - b|| / ||b||
inline double rel_l2(const CxVec& a, const CxVec& b) {
  double num = 0.0, den = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    num += std::norm(a[i] - b[i]);
    den += std::norm(b[i]);
  }
  return std::sqrt(num / den);
}

/// Two-pass PSNR: first the peak, then the mean squared error.
inline double psnr(const ComplexImage& x, const ComplexImage& ref) {
  double peak = 0.0;
  for (const auto& v : ref.data) peak = std::max(peak, std::abs(v));
  long double sum = 0.0L;
  for (std::size_t i = 0; i < x.size(); ++i) sum += std::norm(x.data[i] - ref.data[i]);
  const double mse = static_cast<double>(sum / static_cast<long double>(x.size()));
  return 10.0 * std::log10(peak * peak / mse);
}

/// Plain SSIM with an explicit 2-D window loop.
inline double ssim(const std::vector<double>& x, const std::vector<double>& y, int h, int w, double range) {
  const int k = 11;
  const double sigma = 1.5;
  std::vector<double> win(k * k);
  double s = 0.0;
  for (int i = 0; i < k; ++i)
    for (int j = 0; j < k; ++j) {
      const double di = i - 5.0, dj = j - 5.0;
      win[i * k + j] = std::exp(-(di * di + dj * dj) / (2.0 * sigma * sigma));
      s += win[i * k + j];
    }
  for (auto& v : win) v /= s;
  const double c1 = std::pow(0.01 * range, 2), c2 = std::pow(0.03 * range, 2);
  double total = 0.0;
  int count = 0;
  for (int r = 0; r + k <= h; ++r)
    for (int c = 0; c + k <= w; ++c) {
      double mx = 0, my = 0;
      for (int i = 0; i < k; ++i)
        for (int j = 0; j < k; ++j) {
          mx += win[i * k + j] * x[(r + i) * w + c + j];
          my += win[i * k + j] * y[(r + i) * w + c + j];
        }
      double vx = 0, vy = 0, cxy = 0;
      for (int i = 0; i < k; ++i)
        for (int j = 0; j < k; ++j) {
          const double a = x[(r + i) * w + c + j] - mx, b = y[(r + i) * w + c + j] - my;
          vx += win[i * k + j] * a * a;
          vy += win[i * k + j] * b * b;
          cxy += win[i * k + j] * a * b;
        }
      total += (2 * mx * my + c1) * (2 * cxy + c2) / ((mx * mx + my * my + c1) * (vx + vy + c2));
      ++count;
    }
  return total / count;
}

}  // namespace oracle
