#pragma once

// Complex-array primitives shared by every other module: the image type,
// centered unitary 2-D FFTs, inner products and a counter-based RNG.

#include <fftw3.h>

#include <algorithm>
#include <cmath>
#include <complex>
#include <cstdint>
#include <exception>
#include <functional>
#include <map>
#include <mutex>
#include <numbers>
#include <span>
#include <stdexcept>
#include <string>
#include <thread>
#include <tuple>
#include <vector>

namespace autosamp {

using cx = std::complex<double>;
using CxVec = std::vector<cx>;

/// Base for all library errors.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Bad arguments, shapes or configuration. The CLI maps this to exit code 2.
class ValidationError : public Error {
 public:
  using Error::Error;
};

/// Non-finite values, failed convergence. The CLI maps this to exit code 3.
class NumericalError : public Error {
 public:
  using Error::Error;
};

class IoError : public Error {
 public:
  using Error::Error;
};

/// Row-major complex image. `(row, col)` addresses pixel `row * width + col`.
struct ComplexImage {
  int height = 0;
  int width = 0;
  CxVec data;

  ComplexImage() = default;
  ComplexImage(int h, int w, cx fill = {}) : height(h), width(w) {
    if (h < 0 || w < 0) throw ValidationError("ComplexImage: negative dimensions");
    data.assign(static_cast<std::size_t>(h) * static_cast<std::size_t>(w), fill);
  }

  std::size_t size() const { return data.size(); }
  bool empty() const { return data.empty(); }
  bool same_shape(const ComplexImage& o) const { return height == o.height && width == o.width; }

  cx& operator()(int row, int col) { return data[static_cast<std::size_t>(row) * width + col]; }
  const cx& operator()(int row, int col) const { return data[static_cast<std::size_t>(row) * width + col]; }

  std::span<cx> span() { return data; }
  std::span<const cx> span() const { return data; }

  ComplexImage& operator+=(const ComplexImage& o) {
    require_same(o);
    for (std::size_t i = 0; i < data.size(); ++i) data[i] += o.data[i];
    return *this;
  }
  ComplexImage& operator-=(const ComplexImage& o) {
    require_same(o);
    for (std::size_t i = 0; i < data.size(); ++i) data[i] -= o.data[i];
    return *this;
  }
  ComplexImage& operator*=(cx s) {
    for (auto& v : data) v *= s;
    return *this;
  }
  friend ComplexImage operator+(ComplexImage a, const ComplexImage& b) { return a += b; }
  friend ComplexImage operator-(ComplexImage a, const ComplexImage& b) { return a -= b; }
  friend ComplexImage operator*(cx s, ComplexImage a) { return a *= s; }

  bool operator==(const ComplexImage&) const = default;

  bool all_finite() const {
    return std::all_of(data.begin(), data.end(),
                       [](cx v) { return std::isfinite(v.real()) && std::isfinite(v.imag()); });
  }

  void require_same(const ComplexImage& o) const {
    if (!same_shape(o)) throw ValidationError("ComplexImage: shape mismatch");
  }
};

inline double norm2(std::span<const cx> v) {
  double s = 0.0;
  for (const auto& x : v) s += std::norm(x);
  return std::sqrt(s);
}

inline double norm2(const ComplexImage& img) { return norm2(img.span()); }

/// Sum of a[k] * conj(b[k]).
inline cx inner(std::span<const cx> a, std::span<const cx> b) {
  if (a.size() != b.size()) throw ValidationError("inner: length mismatch");
  cx s{};
  for (std::size_t k = 0; k < a.size(); ++k) s += a[k] * std::conj(b[k]);
  return s;
}

inline cx inner(const ComplexImage& a, const ComplexImage& b) { return inner(a.span(), b.span()); }

// ---------------------------------------------------------------------------
// FFT

namespace detail {

/// Process-wide cache of FFTW plans. The FFTW planner is not thread-safe, so
/// plan creation is serialized; execution through the new-array interface is.
class FftPlanCache {
 public:
  static FftPlanCache& instance() {
    static FftPlanCache cache;
    return cache;
  }

  fftw_plan get(int rows, int cols, int sign) {
    std::lock_guard lock(mutex_);
    auto key = std::make_tuple(rows, cols, sign);
    if (auto it = plans_.find(key); it != plans_.end()) return it->second;
    const std::size_t n = static_cast<std::size_t>(rows) * cols;
    auto* in = fftw_alloc_complex(n);
    auto* out = fftw_alloc_complex(n);
    fftw_plan plan = fftw_plan_dft_2d(rows, cols, in, out, sign, FFTW_ESTIMATE | FFTW_UNALIGNED);
    fftw_free(in);
    fftw_free(out);
    if (!plan) throw NumericalError("FFTW failed to create a plan");
    plans_.emplace(key, plan);
    return plan;
  }

  FftPlanCache(const FftPlanCache&) = delete;
  FftPlanCache& operator=(const FftPlanCache&) = delete;

 private:
  FftPlanCache() = default;
  ~FftPlanCache() {
    for (auto& [key, plan] : plans_) fftw_destroy_plan(plan);
  }
  std::mutex mutex_;
  std::map<std::tuple<int, int, int>, fftw_plan> plans_;
};

}  // namespace detail

/// Unnormalized, uncentered 2-D DFT of a rows x cols row-major buffer.
/// `sign` is FFTW_FORWARD (-1) or FFTW_BACKWARD (+1).
inline void fft2_raw(std::span<const cx> in, std::span<cx> out, int rows, int cols, int sign) {
  const std::size_t n = static_cast<std::size_t>(rows) * cols;
  if (in.size() != n || out.size() != n) throw ValidationError("fft2_raw: buffer size mismatch");
  if (in.data() == out.data()) throw ValidationError("fft2_raw: in-place transform not supported");
  fftw_plan plan = detail::FftPlanCache::instance().get(rows, cols, sign);
  // std::complex<double> is layout-compatible with fftw_complex.
  fftw_execute_dft(plan, reinterpret_cast<fftw_complex*>(const_cast<cx*>(in.data())),
                   reinterpret_cast<fftw_complex*>(out.data()));
}

namespace detail {

inline ComplexImage centered_fft(const ComplexImage& img, int sign) {
  if (img.height < 1 || img.width < 1) throw ValidationError("fft2c: zero-sized input");
  const int h = img.height;
  const int w = img.width;
  // ifftshift: pixel (h/2, w/2) moves to index (0, 0).
  ComplexImage shifted(h, w);
  for (int r = 0; r < h; ++r) {
    const int rr = ((r - h / 2) % h + h) % h;
    for (int c = 0; c < w; ++c) {
      const int cc = ((c - w / 2) % w + w) % w;
      shifted(rr, cc) = img(r, c);
    }
  }
  ComplexImage freq(h, w);
  fft2_raw(shifted.span(), freq.span(), h, w, sign);
  // fftshift: index 0 moves to (h/2, w/2).
  ComplexImage out(h, w);
  const double scale = 1.0 / std::sqrt(static_cast<double>(h) * w);
  for (int r = 0; r < h; ++r) {
    const int rr = (r + h / 2) % h;
    for (int c = 0; c < w; ++c) {
      const int cc = (c + w / 2) % w;
      out(rr, cc) = freq(r, c) * scale;
    }
  }
  return out;
}

}  // namespace detail

/// Centered unitary 2-D DFT: DC lands on pixel (h/2, w/2).
inline ComplexImage fft2c(const ComplexImage& img) { return detail::centered_fft(img, FFTW_FORWARD); }

/// Inverse of fft2c (also its adjoint).
inline ComplexImage ifft2c(const ComplexImage& img) { return detail::centered_fft(img, FFTW_BACKWARD); }

// ---------------------------------------------------------------------------
// Random numbers

/// Counter-based generator: draw k of a stream is a pure hash of (seed, k),
/// so results never depend on thread scheduling or platform RNG details.
class RngStream {
 public:
  explicit RngStream(std::uint64_t seed = 0, std::uint64_t counter = 0) : seed_(seed), counter_(counter) {}

  std::uint64_t seed() const { return seed_; }
  std::uint64_t counter() const { return counter_; }

  std::uint64_t next_u64() { return hash(seed_, counter_++); }

  /// Uniform on [0, 1) with 53 random bits.
  double uniform() { return static_cast<double>(next_u64() >> 11) * 0x1.0p-53; }

  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

  /// Uniform integer in [0, n).
  std::uint64_t below(std::uint64_t n) {
    if (n == 0) throw ValidationError("RngStream::below: empty range");
    // Rejection keeps the draw unbiased.
    const std::uint64_t limit = ~std::uint64_t{0} - (~std::uint64_t{0} % n);
    for (;;) {
      const std::uint64_t v = next_u64();
      if (v < limit) return v % n;
    }
  }

  /// Standard normal via Box-Muller (two uniforms per draw).
  double normal() {
    const double u1 = 1.0 - uniform();  // (0, 1]
    const double u2 = uniform();
    return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * std::numbers::pi * u2);
  }

  /// Independent child stream; `stream_id` selects which one.
  RngStream split(std::uint64_t stream_id) const {
    return RngStream(hash(seed_ ^ 0xA0761D6478BD642FULL, stream_id + 0x632BE59BD9B4E019ULL));
  }

  static std::uint64_t hash(std::uint64_t seed, std::uint64_t counter) {
    std::uint64_t z = mix(seed + 0x9E3779B97F4A7C15ULL);
    z = mix(z ^ (counter * 0xD1B54A32D192ED03ULL + 0x8CB92BA72F3D8DD7ULL));
    return z;
  }

 private:
  static std::uint64_t mix(std::uint64_t z) {
    z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
    z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
    return z ^ (z >> 31);
  }

  std::uint64_t seed_;
  std::uint64_t counter_;
};

/// Circular complex Gaussian samples with variance sigma^2 per entry.
inline CxVec cgauss(RngStream& rng, std::size_t n, double sigma) {
  if (!(sigma >= 0.0)) throw ValidationError("cgauss: sigma must be non-negative");
  CxVec out(n);
  if (sigma == 0.0) return out;
  const double s = sigma / std::numbers::sqrt2;
  for (auto& v : out) {
    const double re = rng.normal();
    const double im = rng.normal();
    v = cx(s * re, s * im);
  }
  return out;
}

// ---------------------------------------------------------------------------
// Threading

namespace detail {
inline int& max_threads_ref() {
  static int n = 1;
  return n;
}
}  // namespace detail

/// Caps the worker count used by parallel_for. Values < 1 mean hardware concurrency.
inline void set_max_threads(int n) {
  detail::max_threads_ref() = n < 1 ? static_cast<int>(std::max(1u, std::thread::hardware_concurrency())) : n;
}

inline int max_threads() { return detail::max_threads_ref(); }

/// Runs body(i) for i in [0, n) over contiguous chunks. Bodies must write to
/// disjoint outputs; results are then independent of the worker count.
inline void parallel_for(std::size_t n, const std::function<void(std::size_t)>& body) {
  const std::size_t workers = std::min<std::size_t>(static_cast<std::size_t>(max_threads()), n);
  if (workers <= 1) {
    for (std::size_t i = 0; i < n; ++i) body(i);
    return;
  }
  std::vector<std::exception_ptr> errors(workers);
  {
    std::vector<std::jthread> pool;
    const std::size_t chunk = (n + workers - 1) / workers;
    for (std::size_t w = 0; w < workers; ++w) {
      const std::size_t lo = w * chunk;
      const std::size_t hi = std::min(n, lo + chunk);
      if (lo >= hi) break;
      pool.emplace_back([lo, hi, w, &body, &errors] {
        try {
          for (std::size_t i = lo; i < hi; ++i) body(i);
        } catch (...) {
          errors[w] = std::current_exception();
        }
      });
    }
  }
  for (auto& e : errors)
    if (e) std::rethrow_exception(e);
}

}  // namespace autosamp
