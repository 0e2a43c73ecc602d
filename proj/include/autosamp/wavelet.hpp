#pragma once

// Orthonormal 2-D Haar transform (Mallat layout) and complex soft
// thresholding of its detail bands.

#include <cmath>
#include <algorithm>
#include <numbers>
#include <utility>

#include "autosamp/numerics.hpp"

namespace autosamp {

inline constexpr int kHaarLevels = 3;

namespace detail {

inline int haar_levels(int height, int width, int requested) {
  int levels = 0;
  while (levels < requested && (std::min(height, width) >> (levels + 1)) >= 1) ++levels;
  return levels;
}

inline int pad_to(int n, int levels) {
  const int q = 1 << levels;
  return (n + q - 1) / q * q;
}

// One analysis step along rows then columns on the top-left h x w block.
inline void haar_step(ComplexImage& a, int h, int w) {
  const double s = 1.0 / std::numbers::sqrt2;
  CxVec tmp(static_cast<std::size_t>(std::max(h, w)));
  for (int r = 0; r < h; ++r) {
    for (int c = 0; c < w / 2; ++c) {
      tmp[c] = (a(r, 2 * c) + a(r, 2 * c + 1)) * s;
      tmp[w / 2 + c] = (a(r, 2 * c) - a(r, 2 * c + 1)) * s;
    }
    for (int c = 0; c < w; ++c) a(r, c) = tmp[c];
  }
  for (int c = 0; c < w; ++c) {
    for (int r = 0; r < h / 2; ++r) {
      tmp[r] = (a(2 * r, c) + a(2 * r + 1, c)) * s;
      tmp[h / 2 + r] = (a(2 * r, c) - a(2 * r + 1, c)) * s;
    }
    for (int r = 0; r < h; ++r) a(r, c) = tmp[r];
  }
}

inline void haar_unstep(ComplexImage& a, int h, int w) {
  const double s = 1.0 / std::numbers::sqrt2;
  CxVec tmp(static_cast<std::size_t>(std::max(h, w)));
  for (int c = 0; c < w; ++c) {
    for (int r = 0; r < h / 2; ++r) {
      tmp[2 * r] = (a(r, c) + a(h / 2 + r, c)) * s;
      tmp[2 * r + 1] = (a(r, c) - a(h / 2 + r, c)) * s;
    }
    for (int r = 0; r < h; ++r) a(r, c) = tmp[r];
  }
  for (int r = 0; r < h; ++r) {
    for (int c = 0; c < w / 2; ++c) {
      tmp[2 * c] = (a(r, c) + a(r, w / 2 + c)) * s;
      tmp[2 * c + 1] = (a(r, c) - a(r, w / 2 + c)) * s;
    }
    for (int c = 0; c < w; ++c) a(r, c) = tmp[c];
  }
}

}  // namespace detail

/// Haar analysis of `x` zero-padded to a multiple of 2^levels. The coarse
/// approximation lands in the top-left (ph >> L) x (pw >> L) block.
class Haar {
 public:
  Haar(int height, int width, int levels = kHaarLevels)
      : height_(height), width_(width), levels_(detail::haar_levels(height, width, levels)) {
    padded_h_ = detail::pad_to(height, levels_);
    padded_w_ = detail::pad_to(width, levels_);
  }

  int levels() const { return levels_; }
  int padded_height() const { return padded_h_; }
  int padded_width() const { return padded_w_; }

  ComplexImage forward(const ComplexImage& x) const {
    if (x.height != height_ || x.width != width_) throw ValidationError("Haar: shape mismatch");
    ComplexImage a(padded_h_, padded_w_);
    for (int r = 0; r < height_; ++r)
      for (int c = 0; c < width_; ++c) a(r, c) = x(r, c);
    int h = padded_h_, w = padded_w_;
    for (int l = 0; l < levels_; ++l, h /= 2, w /= 2) detail::haar_step(a, h, w);
    return a;
  }

  /// Inverse transform followed by cropping to the original shape; this is
  /// also the adjoint of forward().
  ComplexImage inverse(ComplexImage a) const {
    if (a.height != padded_h_ || a.width != padded_w_) throw ValidationError("Haar: coefficient shape mismatch");
    int h = padded_h_ >> (levels_ - 1 < 0 ? 0 : levels_ - 1);
    int w = padded_w_ >> (levels_ - 1 < 0 ? 0 : levels_ - 1);
    for (int l = 0; l < levels_; ++l, h *= 2, w *= 2) detail::haar_unstep(a, h, w);
    ComplexImage x(height_, width_);
    for (int r = 0; r < height_; ++r)
      for (int c = 0; c < width_; ++c) x(r, c) = a(r, c);
    return x;
  }

  bool is_detail(int r, int c) const { return r >= (padded_h_ >> levels_) || c >= (padded_w_ >> levels_); }

 private:
  int height_, width_, levels_;
  int padded_h_ = 0, padded_w_ = 0;
};

/// Shrinks |c| by tau keeping the phase; zero when |c| <= tau.
inline cx soft_threshold(cx c, double tau) {
  const double m = std::abs(c);
  if (m <= tau) return {};
  return c * ((m - tau) / m);
}

/// Which coefficients a wavelet penalty touches. The unrolled prox leaves
/// the coarse band alone; the CS baseline penalizes every coefficient.
enum class WaveletBands { detail, all };

/// Haar soft thresholding: W^T soft(W x, tau) over the selected bands.
inline ComplexImage prox_wavelet(const ComplexImage& x, double tau, WaveletBands bands = WaveletBands::detail,
                                 int levels = kHaarLevels) {
  if (!(tau >= 0.0)) throw ValidationError("prox_wavelet: tau must be >= 0");
  const Haar haar(x.height, x.width, levels);
  ComplexImage a = haar.forward(x);
  for (int r = 0; r < a.height; ++r)
    for (int c = 0; c < a.width; ++c)
      if (bands == WaveletBands::all || haar.is_detail(r, c)) a(r, c) = soft_threshold(a(r, c), tau);
  return haar.inverse(std::move(a));
}

/// Sum of |coefficients| over the selected bands.
inline double wavelet_l1(const ComplexImage& x, WaveletBands bands = WaveletBands::detail, int levels = kHaarLevels) {
  const Haar haar(x.height, x.width, levels);
  const ComplexImage a = haar.forward(x);
  double s = 0.0;
  for (int r = 0; r < a.height; ++r)
    for (int c = 0; c < a.width; ++c)
      if (bands == WaveletBands::all || haar.is_detail(r, c)) s += std::abs(a(r, c));
  return s;
}

/// Vector-Jacobian product of prox_wavelet. Returns (dL/dx, dL/dtau) given
/// dL/d(output) under the real-gradient convention.
inline std::pair<ComplexImage, double> prox_wavelet_vjp(const ComplexImage& x, double tau, const ComplexImage& grad_out,
                                                        int levels = kHaarLevels) {
  const Haar haar(x.height, x.width, levels);
  const ComplexImage a = haar.forward(x);
  // The adjoint of the crop-after-inverse is pad-then-forward.
  ComplexImage g = haar.forward(grad_out);
  double dtau = 0.0;
  for (int r = 0; r < a.height; ++r) {
    for (int c = 0; c < a.width; ++c) {
      if (!haar.is_detail(r, c)) continue;
      const cx v = a(r, c);
      const double m = std::abs(v);
      if (m <= tau) {
        g(r, c) = {};
        continue;
      }
      const cx gv = g(r, c);
      const double proj = (std::conj(gv) * v).real();
      dtau -= proj / m;
      g(r, c) = gv * (1.0 - tau / m) + v * (tau * proj / (m * m * m));
    }
  }
  return {haar.inverse(std::move(g)), dtau};
}

}  // namespace autosamp
