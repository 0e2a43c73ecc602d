#pragma once

// Residual CNN used as the learned proximal operator.
//
//   x (complex) -> [Re x, Im x] -> conv_in -> B x resblock -> conv_out -> + x
//   resblock(s) = s + IN(conv(ReLU(IN(conv(s)))))
//
// All convolutions are 3x3, stride 1, zero padded. Tensors are channel-major
// planes of doubles. backward() is the exact vector-Jacobian product of
// forward() for the tape it recorded.

#include <cmath>
#include <cstddef>
#include <span>
#include <string>
#include <vector>

#include "autosamp/numerics.hpp"

namespace autosamp {

inline constexpr double kInstanceNormEps = 1e-10;

/// Named slice of the flat parameter vector.
struct ParamBlock {
  std::string name;
  std::size_t offset = 0;
  std::vector<int> shape;

  std::size_t size() const {
    std::size_t n = 1;
    for (int d : shape) n *= static_cast<std::size_t>(d);
    return n;
  }
  bool operator==(const ParamBlock&) const = default;
};

namespace detail {

using Tensor = std::vector<double>;

/// out[o] = b[o] + sum_i w[o][i] (*) in[i]
inline void conv3x3(const double* in, int cin, int h, int w, const double* weight, const double* bias, int cout, double* out) {
  const std::size_t plane = static_cast<std::size_t>(h) * w;
  for (int o = 0; o < cout; ++o) {
    double* dst = out + o * plane;
    const double b = bias[o];
    for (std::size_t p = 0; p < plane; ++p) dst[p] = b;
    for (int i = 0; i < cin; ++i) {
      const double* src = in + i * plane;
      const double* k = weight + (static_cast<std::size_t>(o) * cin + i) * 9;
      for (int dy = -1; dy <= 1; ++dy) {
        const int r0 = std::max(0, -dy);
        const int r1 = std::min(h, h - dy);
        for (int dx = -1; dx <= 1; ++dx) {
          const double kv = k[(dy + 1) * 3 + (dx + 1)];
          if (kv == 0.0) continue;
          const int c0 = std::max(0, -dx);
          const int c1 = std::min(w, w - dx);
          for (int r = r0; r < r1; ++r) {
            double* d = dst + static_cast<std::size_t>(r) * w;
            const double* s = src + static_cast<std::size_t>(r + dy) * w + dx;
            for (int c = c0; c < c1; ++c) d[c] += kv * s[c];
          }
        }
      }
    }
  }
}

/// Accumulates grad_in, grad_weight and grad_bias for conv3x3.
inline void conv3x3_backward(const double* in, int cin, int h, int w, const double* weight, int cout, const double* grad_out,
                             double* grad_in, double* grad_weight, double* grad_bias) {
  const std::size_t plane = static_cast<std::size_t>(h) * w;
  for (int o = 0; o < cout; ++o) {
    const double* g = grad_out + o * plane;
    double gb = 0.0;
    for (std::size_t p = 0; p < plane; ++p) gb += g[p];
    grad_bias[o] += gb;
    for (int i = 0; i < cin; ++i) {
      const double* src = in + i * plane;
      double* gin = grad_in ? grad_in + i * plane : nullptr;
      const double* k = weight + (static_cast<std::size_t>(o) * cin + i) * 9;
      double* gk = grad_weight + (static_cast<std::size_t>(o) * cin + i) * 9;
      for (int dy = -1; dy <= 1; ++dy) {
        const int r0 = std::max(0, -dy);
        const int r1 = std::min(h, h - dy);
        for (int dx = -1; dx <= 1; ++dx) {
          const int tap = (dy + 1) * 3 + (dx + 1);
          const double kv = k[tap];
          const int c0 = std::max(0, -dx);
          const int c1 = std::min(w, w - dx);
          double acc = 0.0;
          for (int r = r0; r < r1; ++r) {
            const double* gr = g + static_cast<std::size_t>(r) * w;
            const double* s = src + static_cast<std::size_t>(r + dy) * w + dx;
            for (int c = c0; c < c1; ++c) acc += gr[c] * s[c];
            if (gin && kv != 0.0) {
              double* gi = gin + static_cast<std::size_t>(r + dy) * w + dx;
              for (int c = c0; c < c1; ++c) gi[c] += kv * gr[c];
            }
          }
          gk[tap] += acc;
        }
      }
    }
  }
}

/// Per-channel normalization; records x_hat and 1/std for the backward pass.
inline void instance_norm(const double* in, int channels, std::size_t plane, const double* gamma, const double* beta,
                          double* xhat, double* inv_std, double* out) {
  for (int ch = 0; ch < channels; ++ch) {
    const double* x = in + ch * plane;
    double mean = 0.0;
    for (std::size_t p = 0; p < plane; ++p) mean += x[p];
    mean /= static_cast<double>(plane);
    double var = 0.0;
    for (std::size_t p = 0; p < plane; ++p) var += (x[p] - mean) * (x[p] - mean);
    var /= static_cast<double>(plane);
    const double is = 1.0 / std::sqrt(var + kInstanceNormEps);
    inv_std[ch] = is;
    double* xh = xhat + ch * plane;
    double* y = out + ch * plane;
    for (std::size_t p = 0; p < plane; ++p) {
      xh[p] = (x[p] - mean) * is;
      y[p] = gamma[ch] * xh[p] + beta[ch];
    }
  }
}

inline void instance_norm_backward(const double* xhat, const double* inv_std, int channels, std::size_t plane,
                                   const double* gamma, const double* grad_out, double* grad_in, double* grad_gamma,
                                   double* grad_beta) {
  const double n = static_cast<double>(plane);
  for (int ch = 0; ch < channels; ++ch) {
    const double* xh = xhat + ch * plane;
    const double* g = grad_out + ch * plane;
    double sum_g = 0.0, sum_gx = 0.0;
    for (std::size_t p = 0; p < plane; ++p) {
      sum_g += g[p];
      sum_gx += g[p] * xh[p];
    }
    grad_gamma[ch] += sum_gx;
    grad_beta[ch] += sum_g;
    const double k = gamma[ch] * inv_std[ch] / n;
    double* gi = grad_in + ch * plane;
    for (std::size_t p = 0; p < plane; ++p) gi[p] += k * (n * g[p] - sum_g - xh[p] * sum_gx);
  }
}

}  // namespace detail

/// Everything forward() needs to keep for backward().
struct CnnTape {
  int height = 0;
  int width = 0;
  detail::Tensor input;                     // 2 channels
  std::vector<detail::Tensor> stream;       // residual stream entering each block, plus the final one
  std::vector<detail::Tensor> xhat1, xhat2; // normalized conv outputs per block
  std::vector<detail::Tensor> inv_std1, inv_std2;
  std::vector<detail::Tensor> relu_out;     // input of the second conv per block
};

class CnnProx {
 public:
  CnnProx(int channels, int n_resblocks) : channels_(channels), blocks_(n_resblocks) {
    if (channels < 1) throw ValidationError("CnnProx: channels must be >= 1");
    if (n_resblocks < 0) throw ValidationError("CnnProx: n_resblocks must be >= 0");
  }

  int channels() const { return channels_; }
  int blocks() const { return blocks_; }

  static std::size_t param_count(int channels, int n_resblocks) {
    const std::size_t c = static_cast<std::size_t>(channels);
    const std::size_t conv_in = 2 * c * 9 + c;
    const std::size_t block = 2 * (c * c * 9 + c) + 4 * c;
    const std::size_t conv_out = c * 2 * 9 + 2;
    return conv_in + static_cast<std::size_t>(n_resblocks) * block + conv_out;
  }
  std::size_t param_count() const { return param_count(channels_, blocks_); }

  /// Parameter blocks in storage order, offsets starting at `base`.
  std::vector<ParamBlock> layout(const std::string& prefix, std::size_t base) const {
    std::vector<ParamBlock> out;
    std::size_t off = base;
    auto add = [&](std::string name, std::vector<int> shape) {
      ParamBlock b{prefix + std::move(name), off, std::move(shape)};
      off += b.size();
      out.push_back(std::move(b));
    };
    const int c = channels_;
    add("conv_in/weight", {c, 2, 3, 3});
    add("conv_in/bias", {c});
    for (int b = 0; b < blocks_; ++b) {
      const std::string p = "res" + std::to_string(b) + "/";
      add(p + "conv1/weight", {c, c, 3, 3});
      add(p + "conv1/bias", {c});
      add(p + "norm1/gamma", {c});
      add(p + "norm1/beta", {c});
      add(p + "conv2/weight", {c, c, 3, 3});
      add(p + "conv2/bias", {c});
      add(p + "norm2/gamma", {c});
      add(p + "norm2/beta", {c});
    }
    add("conv_out/weight", {2, c, 3, 3});
    add("conv_out/bias", {2});
    return out;
  }

  /// He-normal weights; the convs that feed a residual sum are scaled by 0.1
  /// so the initial network stays close to the identity.
  void init(std::span<double> theta, RngStream& rng) const {
    check(theta.size());
    Offsets o(channels_, blocks_);
    const std::size_t c = static_cast<std::size_t>(channels_);
    auto he = [&](std::size_t off, std::size_t n, std::size_t fan_in, double scale) {
      const double sd = scale * std::sqrt(2.0 / static_cast<double>(fan_in));
      for (std::size_t i = 0; i < n; ++i) theta[off + i] = sd * rng.normal();
    };
    std::fill(theta.begin(), theta.end(), 0.0);
    he(o.conv_in_w, 2 * c * 9, 2 * 9, 1.0);
    for (int b = 0; b < blocks_; ++b) {
      he(o.conv1_w(b), c * c * 9, c * 9, 1.0);
      he(o.conv2_w(b), c * c * 9, c * 9, 0.1);
      for (std::size_t k = 0; k < c; ++k) {
        theta[o.norm1_g(b) + k] = 1.0;
        theta[o.norm2_g(b) + k] = 1.0;
      }
    }
    he(o.conv_out_w, 2 * c * 9, c * 9, 0.1);
  }

  ComplexImage forward(std::span<const double> theta, const ComplexImage& x, CnnTape* tape = nullptr) const {
    check(theta.size());
    const int h = x.height, w = x.width;
    const std::size_t plane = x.size();
    const std::size_t c = static_cast<std::size_t>(channels_);
    const Offsets o(channels_, blocks_);
    const double* t = theta.data();

    detail::Tensor input(2 * plane);
    for (std::size_t p = 0; p < plane; ++p) {
      input[p] = x.data[p].real();
      input[plane + p] = x.data[p].imag();
    }
    detail::Tensor s(c * plane);
    detail::conv3x3(input.data(), 2, h, w, t + o.conv_in_w, t + o.conv_in_b, channels_, s.data());

    if (tape) {
      *tape = CnnTape{};
      tape->height = h;
      tape->width = w;
      tape->input = input;
    }
    detail::Tensor a(c * plane), xh1(c * plane), xh2(c * plane), r(c * plane), branch(c * plane);
    detail::Tensor is1(c), is2(c);
    for (int b = 0; b < blocks_; ++b) {
      if (tape) tape->stream.push_back(s);
      detail::conv3x3(s.data(), channels_, h, w, t + o.conv1_w(b), t + o.conv1_b(b), channels_, a.data());
      detail::instance_norm(a.data(), channels_, plane, t + o.norm1_g(b), t + o.norm1_b(b), xh1.data(), is1.data(), r.data());
      for (auto& v : r) v = v > 0.0 ? v : 0.0;
      detail::conv3x3(r.data(), channels_, h, w, t + o.conv2_w(b), t + o.conv2_b(b), channels_, a.data());
      detail::instance_norm(a.data(), channels_, plane, t + o.norm2_g(b), t + o.norm2_b(b), xh2.data(), is2.data(), branch.data());
      for (std::size_t p = 0; p < s.size(); ++p) s[p] += branch[p];
      if (tape) {
        tape->xhat1.push_back(xh1);
        tape->xhat2.push_back(xh2);
        tape->inv_std1.push_back(is1);
        tape->inv_std2.push_back(is2);
        tape->relu_out.push_back(r);
      }
    }
    if (tape) tape->stream.push_back(s);

    detail::Tensor out2(2 * plane);
    detail::conv3x3(s.data(), channels_, h, w, t + o.conv_out_w, t + o.conv_out_b, 2, out2.data());
    ComplexImage out(h, w);
    for (std::size_t p = 0; p < plane; ++p) out.data[p] = x.data[p] + cx(out2[p], out2[plane + p]);
    return out;
  }

  /// Accumulates dL/dtheta into grad_theta and returns dL/dx.
  ComplexImage backward(std::span<const double> theta, const CnnTape& tape, const ComplexImage& grad_out,
                        std::span<double> grad_theta) const {
    check(theta.size());
    check(grad_theta.size());
    const int h = tape.height, w = tape.width;
    if (grad_out.height != h || grad_out.width != w) throw ValidationError("CnnProx::backward: shape mismatch");
    const std::size_t plane = grad_out.size();
    const std::size_t c = static_cast<std::size_t>(channels_);
    const Offsets o(channels_, blocks_);
    const double* t = theta.data();
    double* gt = grad_theta.data();

    detail::Tensor g2(2 * plane);
    for (std::size_t p = 0; p < plane; ++p) {
      g2[p] = grad_out.data[p].real();
      g2[plane + p] = grad_out.data[p].imag();
    }
    detail::Tensor gs(c * plane, 0.0);
    detail::conv3x3_backward(tape.stream.back().data(), channels_, h, w, t + o.conv_out_w, 2, g2.data(), gs.data(),
                             gt + o.conv_out_w, gt + o.conv_out_b);

    detail::Tensor ga(c * plane), gr(c * plane), gn(c * plane);
    for (int b = blocks_ - 1; b >= 0; --b) {
      const auto bi = static_cast<std::size_t>(b);
      // branch = IN2(conv2(relu)); d branch = gs
      std::fill(ga.begin(), ga.end(), 0.0);
      detail::instance_norm_backward(tape.xhat2[bi].data(), tape.inv_std2[bi].data(), channels_, plane, t + o.norm2_g(b),
                                     gs.data(), ga.data(), gt + o.norm2_g(b), gt + o.norm2_b(b));
      std::fill(gr.begin(), gr.end(), 0.0);
      detail::conv3x3_backward(tape.relu_out[bi].data(), channels_, h, w, t + o.conv2_w(b), channels_, ga.data(), gr.data(),
                               gt + o.conv2_w(b), gt + o.conv2_b(b));
      for (std::size_t p = 0; p < gr.size(); ++p)
        if (!(tape.relu_out[bi][p] > 0.0)) gr[p] = 0.0;
      std::fill(gn.begin(), gn.end(), 0.0);
      detail::instance_norm_backward(tape.xhat1[bi].data(), tape.inv_std1[bi].data(), channels_, plane, t + o.norm1_g(b),
                                     gr.data(), gn.data(), gt + o.norm1_g(b), gt + o.norm1_b(b));
      // Skip connection: gs flows through unchanged, plus the conv1 path.
      detail::conv3x3_backward(tape.stream[bi].data(), channels_, h, w, t + o.conv1_w(b), channels_, gn.data(), gs.data(),
                               gt + o.conv1_w(b), gt + o.conv1_b(b));
    }

    detail::Tensor gin(2 * plane, 0.0);
    detail::conv3x3_backward(tape.input.data(), 2, h, w, t + o.conv_in_w, channels_, gs.data(), gin.data(), gt + o.conv_in_w,
                             gt + o.conv_in_b);
    ComplexImage gx = grad_out;
    for (std::size_t p = 0; p < plane; ++p) gx.data[p] += cx(gin[p], gin[plane + p]);
    return gx;
  }

 private:
  struct Offsets {
    std::size_t c, conv_in_w, conv_in_b, first_block, block, conv_out_w, conv_out_b;
    Offsets(int channels, int blocks) : c(static_cast<std::size_t>(channels)) {
      conv_in_w = 0;
      conv_in_b = 2 * c * 9;
      first_block = conv_in_b + c;
      block = 2 * (c * c * 9 + c) + 4 * c;
      conv_out_w = first_block + static_cast<std::size_t>(blocks) * block;
      conv_out_b = conv_out_w + 2 * c * 9;
    }
    std::size_t base(int b) const { return first_block + static_cast<std::size_t>(b) * block; }
    std::size_t conv1_w(int b) const { return base(b); }
    std::size_t conv1_b(int b) const { return conv1_w(b) + c * c * 9; }
    std::size_t norm1_g(int b) const { return conv1_b(b) + c; }
    std::size_t norm1_b(int b) const { return norm1_g(b) + c; }
    std::size_t conv2_w(int b) const { return norm1_b(b) + c; }
    std::size_t conv2_b(int b) const { return conv2_w(b) + c * c * 9; }
    std::size_t norm2_g(int b) const { return conv2_b(b) + c; }
    std::size_t norm2_b(int b) const { return norm2_g(b) + c; }
  };

  void check(std::size_t n) const {
    if (n != param_count()) throw ValidationError("CnnProx: weight-layout mismatch (got " + std::to_string(n) +
                                                  " parameters, expected " + std::to_string(param_count()) + ")");
  }

  int channels_;
  int blocks_;
};

}  // namespace autosamp
