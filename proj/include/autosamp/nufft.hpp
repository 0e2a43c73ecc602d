#pragma once

// Kaiser-Bessel gridding nuFFT on a 2-D image grid.
//
// Sample coordinates k = (kx, ky) are in cycles per pixel, each in [-0.5, 0.5).
// The operator approximates the unitary-scaled non-uniform DFT
//
//   y(k) = 1/sqrt(N) * sum_r x_r exp(-i 2 pi k . r),   r = pixel offset from (h/2, w/2)
//
// by deapodizing the image, zero-padding onto an oversampled grid of size G,
// taking an FFT and interpolating with the KB kernel. The kernel is evaluated
// directly at every tap (no lookup tables), so its derivative is exact and
// the coordinate gradients follow analytically.

#include <cmath>
#include <map>
#include <mutex>
#include <span>
#include <tuple>
#include <vector>

#include "autosamp/numerics.hpp"

namespace autosamp {

struct SamplePoint {
  double kx = 0.0;
  double ky = 0.0;
  bool operator==(const SamplePoint&) const = default;
};

/// Gradient of a real scalar with respect to one sample's coordinates.
struct PointGrad {
  double dkx = 0.0;
  double dky = 0.0;
};

/// Closed-form shape parameter for a KB kernel of width `width` on a grid
/// oversampled by `oversampling` (Beatty, Nishimura & Pauly, 2005).
inline double beatty_beta(double width, double oversampling) {
  const double a = width / oversampling * (oversampling - 0.5);
  const double arg = a * a - 0.8;
  if (!(arg > 0.0)) throw ValidationError("beatty_beta: width/oversampling too small for the closed form");
  return std::numbers::pi * std::sqrt(arg);
}

struct KbParams {
  double width = 4.0;
  double oversampling = 1.25;
  double beta = beatty_beta(4.0, 1.25);

  static KbParams make(double width, double oversampling) {
    KbParams p{width, oversampling, beatty_beta(width, oversampling)};
    p.validate();
    return p;
  }

  /// Settings used to train and evaluate the encoder.
  static KbParams paper() { return make(4.0, 1.25); }

  /// Higher-accuracy settings for pattern characterization (PSFs).
  static KbParams analysis() { return make(10.0, 2.0); }

  void validate() const {
    if (!(width >= 2.0)) throw ValidationError("KbParams: width must be >= 2");
    if (!(oversampling > 1.0)) throw ValidationError("KbParams: oversampling must be > 1");
    if (!(beta > 0.0)) throw ValidationError("KbParams: beta must be > 0");
  }

  bool operator==(const KbParams&) const = default;
};

/// I0(beta sqrt(1 - (2u/W)^2)) / I0(beta) on |u| <= W/2, zero outside.
inline double kb_eval(double u, const KbParams& p) {
  const double t = 2.0 * u / p.width;
  const double s2 = 1.0 - t * t;
  if (s2 < 0.0) return 0.0;
  return std::cyl_bessel_i(0.0, p.beta * std::sqrt(s2)) / std::cyl_bessel_i(0.0, p.beta);
}

/// d kb_eval / du. Zero outside the support.
inline double kb_deriv(double u, const KbParams& p) {
  const double t = 2.0 * u / p.width;
  const double s2 = 1.0 - t * t;
  if (s2 < 0.0) return 0.0;
  const double s = std::sqrt(s2);
  // I1(beta s) / s -> beta / 2 as s -> 0.
  const double i1_over_s = s > 1e-8 ? std::cyl_bessel_i(1.0, p.beta * s) / s : 0.5 * p.beta;
  return -p.beta * i1_over_s * (4.0 * u / (p.width * p.width)) / std::cyl_bessel_i(0.0, p.beta);
}

/// round(os * n), bumped up to the next even integer.
inline int oversampled_size(int n, double oversampling) {
  int g = static_cast<int>(std::lround(oversampling * n));
  if (g % 2 != 0) ++g;
  return std::max(g, 2);
}

namespace detail {

/// Deapodization factors c(r) for pixel offsets r = i - n/2, i in [0, n): the
/// DFT of the kernel sampled at integer grid offsets. Cached per shape.
inline const std::vector<double>& apodization(int n, int grid, const KbParams& p) {
  static std::mutex mutex;
  static std::map<std::tuple<int, int, double, double>, std::vector<double>> cache;
  std::lock_guard lock(mutex);
  auto key = std::make_tuple(n, grid, p.width, p.beta);
  if (auto it = cache.find(key); it != cache.end()) return it->second;

  const int reach = static_cast<int>(std::floor(p.width / 2.0));
  std::vector<double> c(static_cast<std::size_t>(n));
  for (int i = 0; i < n; ++i) {
    const double r = i - n / 2;
    double sum = 0.0;
    for (int u = -reach; u <= reach; ++u) sum += kb_eval(u, p) * std::cos(2.0 * std::numbers::pi * u * r / grid);
    if (!(std::abs(sum) > 1e-12)) throw NumericalError("apodization factor vanishes; kernel too narrow for grid");
    c[static_cast<std::size_t>(i)] = sum;
  }
  return cache.emplace(key, std::move(c)).first->second;
}

inline int wrap(int j, int n) {
  j %= n;
  return j < 0 ? j + n : j;
}

}  // namespace detail

/// Gridding operator bound to one image shape and one set of sample points.
/// Interpolation weights and their derivatives are computed once at
/// construction; forward, adjoint and coord_vjp are then const and pure.
class Nufft {
 public:
  Nufft(int height, int width, std::span<const SamplePoint> points, const KbParams& params = {})
      : height_(height), width_(width), params_(params), points_(points.begin(), points.end()) {
    if (height < 1 || width < 1) throw ValidationError("Nufft: image dimensions must be >= 1");
    params_.validate();
    grid_h_ = oversampled_size(height, params_.oversampling);
    grid_w_ = oversampled_size(width, params_.oversampling);
    apod_y_ = &detail::apodization(height, grid_h_, params_);
    apod_x_ = &detail::apodization(width, grid_w_, params_);
    taps_ = static_cast<int>(std::floor(params_.width)) + 1;
    scale_ = 1.0 / std::sqrt(static_cast<double>(height) * width);

    const std::size_t m = points_.size();
    const std::size_t t = static_cast<std::size_t>(taps_);
    start_y_.resize(m);
    start_x_.resize(m);
    wy_.resize(m * t);
    wx_.resize(m * t);
    dwy_.resize(m * t);
    dwx_.resize(m * t);
    for (std::size_t i = 0; i < m; ++i) {
      const auto& pt = points_[i];
      if (!(pt.kx >= -0.5 && pt.kx < 0.5 && pt.ky >= -0.5 && pt.ky < 0.5))
        throw ValidationError("Nufft: out-of-range coordinate at index " + std::to_string(i));
      fill_taps(pt.ky * grid_h_, grid_h_, start_y_[i], &wy_[i * t], &dwy_[i * t]);
      fill_taps(pt.kx * grid_w_, grid_w_, start_x_[i], &wx_[i * t], &dwx_[i * t]);
    }
  }

  int height() const { return height_; }
  int width() const { return width_; }
  int grid_height() const { return grid_h_; }
  int grid_width() const { return grid_w_; }
  std::size_t size() const { return points_.size(); }
  const std::vector<SamplePoint>& points() const { return points_; }
  const KbParams& params() const { return params_; }

  CxVec forward(const ComplexImage& img) const {
    const CxVec spectrum = oversampled_spectrum(img);
    CxVec out(points_.size());
    for (std::size_t i = 0; i < points_.size(); ++i) out[i] = scale_ * interpolate(spectrum, i, wy_, wx_);
    return out;
  }

  ComplexImage adjoint(std::span<const cx> values) const {
    if (values.size() != points_.size()) throw ValidationError("Nufft::adjoint: length mismatch");
    const std::size_t t = static_cast<std::size_t>(taps_);
    CxVec grid(static_cast<std::size_t>(grid_h_) * grid_w_);
    for (std::size_t i = 0; i < points_.size(); ++i) {
      const cx v = scale_ * values[i];
      if (v == cx{}) continue;
      for (std::size_t a = 0; a < t; ++a) {
        const double wy = wy_[i * t + a];
        if (wy == 0.0) continue;
        const std::size_t row = static_cast<std::size_t>(detail::wrap(start_y_[i] + static_cast<int>(a), grid_h_)) * grid_w_;
        for (std::size_t b = 0; b < t; ++b) {
          const double w = wy * wx_[i * t + b];
          grid[row + detail::wrap(start_x_[i] + static_cast<int>(b), grid_w_)] += w * v;
        }
      }
    }
    CxVec spatial(grid.size());
    fft2_raw(grid, spatial, grid_h_, grid_w_, FFTW_BACKWARD);
    ComplexImage out(height_, width_);
    for (int r = 0; r < height_; ++r) {
      const std::size_t row = static_cast<std::size_t>(detail::wrap(r - height_ / 2, grid_h_)) * grid_w_;
      for (int c = 0; c < width_; ++c) {
        out(r, c) = spatial[row + detail::wrap(c - width_ / 2, grid_w_)] / ((*apod_y_)[r] * (*apod_x_)[c]);
      }
    }
    return out;
  }

  /// Gradient of Re(sum_m conj(upstream_m) * forward(img)_m) with respect to
  /// every sample coordinate.
  std::vector<PointGrad> coord_vjp(const ComplexImage& img, std::span<const cx> upstream) const {
    if (upstream.size() != points_.size()) throw ValidationError("Nufft::coord_vjp: upstream length mismatch");
    const CxVec spectrum = oversampled_spectrum(img);
    std::vector<PointGrad> out(points_.size());
    for (std::size_t i = 0; i < points_.size(); ++i) {
      if (upstream[i] == cx{}) continue;
      const cx dx = scale_ * interpolate(spectrum, i, wy_, dwx_);
      const cx dy = scale_ * interpolate(spectrum, i, dwy_, wx_);
      const cx u = std::conj(upstream[i]);
      out[i].dkx = (u * dx).real();
      out[i].dky = (u * dy).real();
    }
    return out;
  }

 private:
  // Taps j = start .. start + taps - 1 around grid coordinate g (in
  // oversampled-grid units, relative to DC). Weights are kb(g - j); their
  // derivatives are taken with respect to k, hence the factor of `grid`.
  void fill_taps(double g, int grid, int& start, double* w, double* dw) const {
    start = static_cast<int>(std::ceil(g - params_.width / 2.0));
    for (int a = 0; a < taps_; ++a) {
      const double u = g - (start + a);
      w[a] = kb_eval(u, params_);
      dw[a] = kb_deriv(u, params_) * grid;
    }
  }

  CxVec oversampled_spectrum(const ComplexImage& img) const {
    if (img.height != height_ || img.width != width_) throw ValidationError("Nufft: image shape mismatch");
    CxVec grid(static_cast<std::size_t>(grid_h_) * grid_w_);
    for (int r = 0; r < height_; ++r) {
      const std::size_t row = static_cast<std::size_t>(detail::wrap(r - height_ / 2, grid_h_)) * grid_w_;
      for (int c = 0; c < width_; ++c) {
        grid[row + detail::wrap(c - width_ / 2, grid_w_)] = img(r, c) / ((*apod_y_)[r] * (*apod_x_)[c]);
      }
    }
    CxVec spectrum(grid.size());
    fft2_raw(grid, spectrum, grid_h_, grid_w_, FFTW_FORWARD);
    return spectrum;
  }

  cx interpolate(const CxVec& spectrum, std::size_t i, const std::vector<double>& wy,
                 const std::vector<double>& wx) const {
    const std::size_t t = static_cast<std::size_t>(taps_);
    cx acc{};
    for (std::size_t a = 0; a < t; ++a) {
      const double y = wy[i * t + a];
      if (y == 0.0) continue;
      const std::size_t row = static_cast<std::size_t>(detail::wrap(start_y_[i] + static_cast<int>(a), grid_h_)) * grid_w_;
      cx line{};
      for (std::size_t b = 0; b < t; ++b) line += wx[i * t + b] * spectrum[row + detail::wrap(start_x_[i] + static_cast<int>(b), grid_w_)];
      acc += y * line;
    }
    return acc;
  }

  int height_;
  int width_;
  KbParams params_;
  std::vector<SamplePoint> points_;
  int grid_h_ = 0;
  int grid_w_ = 0;
  const std::vector<double>* apod_y_ = nullptr;
  const std::vector<double>* apod_x_ = nullptr;
  int taps_ = 0;
  double scale_ = 1.0;
  std::vector<int> start_y_, start_x_;
  std::vector<double> wy_, wx_, dwy_, dwx_;
};

inline CxVec nufft_forward(const ComplexImage& img, std::span<const SamplePoint> pts, const KbParams& p = {}) {
  return Nufft(img.height, img.width, pts, p).forward(img);
}

inline ComplexImage nufft_adjoint(std::span<const cx> values, std::span<const SamplePoint> pts, const KbParams& p,
                                  int height, int width) {
  if (values.size() != pts.size()) throw ValidationError("nufft_adjoint: length mismatch");
  return Nufft(height, width, pts, p).adjoint(values);
}

inline std::vector<PointGrad> nufft_coord_vjp(const ComplexImage& img, std::span<const SamplePoint> pts,
                                              const KbParams& p, std::span<const cx> upstream) {
  return Nufft(img.height, img.width, pts, p).coord_vjp(img, upstream);
}

}  // namespace autosamp
