#pragma once

// Multi-coil encoder A = [F S_1; ...; F S_C] with additive complex Gaussian
// noise, its adjoint, and the coordinate gradients used for training.

#include <cmath>
#include <string>
#include <vector>

#include "autosamp/dataset.hpp"
#include "autosamp/nufft.hpp"
#include "autosamp/numerics.hpp"
#include "autosamp/patterns.hpp"

namespace autosamp {

/// M x C measurements, stored coil-major: sample m of coil c is at c * M + m.
struct KspaceData {
  int samples = 0;
  int coils = 0;
  CxVec values;
  double sigma_used = 0.0;
  std::string pattern_ref;

  KspaceData() = default;
  KspaceData(int m, int c) : samples(m), coils(c), values(static_cast<std::size_t>(m) * c) {}

  std::span<cx> coil(int c) { return std::span<cx>(values).subspan(static_cast<std::size_t>(c) * samples, samples); }
  std::span<const cx> coil(int c) const {
    return std::span<const cx>(values).subspan(static_cast<std::size_t>(c) * samples, samples);
  }

  bool same_shape(const KspaceData& o) const { return samples == o.samples && coils == o.coils; }

  KspaceData& operator+=(const KspaceData& o) {
    if (!same_shape(o)) throw ValidationError("KspaceData: shape mismatch");
    for (std::size_t i = 0; i < values.size(); ++i) values[i] += o.values[i];
    return *this;
  }
  KspaceData& operator-=(const KspaceData& o) {
    if (!same_shape(o)) throw ValidationError("KspaceData: shape mismatch");
    for (std::size_t i = 0; i < values.size(); ++i) values[i] -= o.values[i];
    return *this;
  }
  KspaceData& operator*=(cx s) {
    for (auto& v : values) v *= s;
    return *this;
  }
};

class AcquisitionModel {
 public:
  AcquisitionModel(const SamplingPattern& pattern, CoilSet coils, double sigma, const KbParams& kb = {})
      : pattern_(pattern),
        coils_(std::move(coils)),
        sigma_(sigma),
        nufft_(pattern.grid.height, pattern.grid.width, pattern.points, kb) {
    if (!(sigma >= 0.0)) throw ValidationError("AcquisitionModel: sigma must be >= 0");
    if (coils_.count() < 1) throw ValidationError("AcquisitionModel: need at least one coil");
    for (const auto& m : coils_.maps)
      if (m.height != pattern.grid.height || m.width != pattern.grid.width)
        throw ValidationError("AcquisitionModel: coil map dimensions differ from pattern grid");
    if (!pattern.multiplicity.empty()) {
      if (pattern.multiplicity.size() != pattern.points.size())
        throw ValidationError("AcquisitionModel: multiplicity length mismatch");
      // A sample of multiplicity w acts like w repeated acquisitions:
      // sqrt(w) on both sides keeps A^H A = F^H W F and A^H exact.
      weights_.reserve(pattern.points.size());
      for (int w : pattern.multiplicity) weights_.push_back(std::sqrt(static_cast<double>(w)));
    }
  }

  const SamplingPattern& pattern() const { return pattern_; }
  const CoilSet& coils() const { return coils_; }
  const Nufft& nufft() const { return nufft_; }
  double sigma() const { return sigma_; }
  int coil_count() const { return coils_.count(); }
  int samples() const { return static_cast<int>(nufft_.size()); }
  int height() const { return pattern_.grid.height; }
  int width() const { return pattern_.grid.width; }

  /// Noiseless A x.
  KspaceData forward(const ComplexImage& img) const {
    check_image(img);
    KspaceData out(samples(), coil_count());
    for (int c = 0; c < coil_count(); ++c) {
      const CxVec y = nufft_.forward(modulate(img, c));
      auto dst = out.coil(c);
      for (std::size_t m = 0; m < y.size(); ++m) dst[m] = y[m] * weight(m);
    }
    return out;
  }

  /// A x + noise, with a fresh noise draw taken from `rng`.
  KspaceData measure(const ComplexImage& img, RngStream& rng) const {
    KspaceData z = forward(img);
    z += noise(rng);
    z.sigma_used = sigma_;
    return z;
  }

  /// One draw of the noise vector for this model's shape.
  KspaceData noise(RngStream& rng) const {
    KspaceData e(samples(), coil_count());
    e.values = cgauss(rng, e.values.size(), sigma_);
    e.sigma_used = sigma_;
    return e;
  }

  /// A^H y = sum_c conj(S_c) F^H y_c, accumulated in coil order.
  ComplexImage adjoint(const KspaceData& data) const {
    check_data(data);
    ComplexImage out(height(), width());
    CxVec col(static_cast<std::size_t>(samples()));
    for (int c = 0; c < coil_count(); ++c) {
      const auto src = data.coil(c);
      for (std::size_t m = 0; m < col.size(); ++m) col[m] = src[m] * weight(m);
      const ComplexImage back = nufft_.adjoint(col);
      const auto& s = coils_.maps[static_cast<std::size_t>(c)];
      for (std::size_t p = 0; p < out.size(); ++p) out.data[p] += std::conj(s.data[p]) * back.data[p];
    }
    return out;
  }

  ComplexImage normal(const ComplexImage& img) const { return adjoint(forward(img)); }

  /// Coordinate gradient of Re<upstream, A x> (x held fixed).
  std::vector<PointGrad> forward_coord_vjp(const ComplexImage& img, const KspaceData& upstream) const {
    check_image(img);
    check_data(upstream);
    std::vector<PointGrad> out(static_cast<std::size_t>(samples()));
    CxVec u(static_cast<std::size_t>(samples()));
    for (int c = 0; c < coil_count(); ++c) {
      const auto src = upstream.coil(c);
      for (std::size_t m = 0; m < u.size(); ++m) u[m] = src[m] * weight(m);
      const auto g = nufft_.coord_vjp(modulate(img, c), u);
      for (std::size_t m = 0; m < out.size(); ++m) {
        out[m].dkx += g[m].dkx;
        out[m].dky += g[m].dky;
      }
    }
    return out;
  }

  /// Coordinate gradient of Re<upstream, A^H y> (y held fixed). Uses
  /// Re<g, A^H y> = Re<A g, y>, so it is forward_coord_vjp(g, y).
  std::vector<PointGrad> adjoint_coord_vjp(const ComplexImage& upstream, const KspaceData& data) const {
    return forward_coord_vjp(upstream, data);
  }

  /// Largest singular value of A by power iteration on A^H A.
  double operator_norm(int iterations = 20, std::uint64_t seed = 0) const {
    RngStream rng(seed);
    ComplexImage x(height(), width());
    x.data = cgauss(rng, x.size(), 1.0);
    double lambda = 0.0;
    for (int i = 0; i < iterations; ++i) {
      const double n = norm2(x);
      if (n == 0.0) return 0.0;
      x *= 1.0 / n;
      ComplexImage y = normal(x);
      lambda = inner(y, x).real();
      x = std::move(y);
    }
    return std::sqrt(std::max(lambda, 0.0));
  }

 private:
  double weight(std::size_t m) const { return weights_.empty() ? 1.0 : weights_[m]; }

  ComplexImage modulate(const ComplexImage& img, int c) const {
    const auto& s = coils_.maps[static_cast<std::size_t>(c)];
    ComplexImage out(img.height, img.width);
    for (std::size_t p = 0; p < img.size(); ++p) out.data[p] = s.data[p] * img.data[p];
    return out;
  }

  void check_image(const ComplexImage& img) const {
    if (img.height != height() || img.width != width()) throw ValidationError("AcquisitionModel: image shape mismatch");
  }
  void check_data(const KspaceData& d) const {
    if (d.samples != samples() || d.coils != coil_count()) throw ValidationError("AcquisitionModel: k-space shape mismatch");
  }

  SamplingPattern pattern_;
  CoilSet coils_;
  double sigma_;
  Nufft nufft_;
  std::vector<double> weights_;
};

/// Container array of shape [M, C] (sample-major) for a KspaceData.
inline Array kspace_to_array(const KspaceData& d) {
  CxVec v(d.values.size());
  for (int c = 0; c < d.coils; ++c)
    for (int m = 0; m < d.samples; ++m)
      v[static_cast<std::size_t>(m) * d.coils + c] = d.values[static_cast<std::size_t>(c) * d.samples + m];
  return Array::complex({d.samples, d.coils}, std::move(v));
}

inline KspaceData kspace_from_array(const Array& a) {
  if (a.shape.size() != 2) throw IoError("k-space array must be 2-D [M, C]");
  KspaceData d(static_cast<int>(a.shape[0]), static_cast<int>(a.shape[1]));
  const auto v = a.as_complex();
  for (int c = 0; c < d.coils; ++c)
    for (int m = 0; m < d.samples; ++m)
      d.values[static_cast<std::size_t>(c) * d.samples + m] = v[static_cast<std::size_t>(m) * d.coils + c];
  return d;
}

}  // namespace autosamp
