#pragma once

#include <cstdint>
#include <stdexcept>
#include <string>
#include <vector>

#include "ucf/tensor.hpp"

namespace ucf {

inline std::int64_t ceil_div(std::int64_t a, std::int64_t b) {
  return a >= 0 ? (a + b - 1) / b : -((-a) / b);
}
inline std::int64_t floor_div(std::int64_t a, std::int64_t b) {
  return a >= 0 ? a / b : -((-a + b - 1) / b);
}

/// floor((n + 2 pad - k) / s) + 1.
inline std::int64_t conv_out_side(std::int64_t n, std::int64_t k,
                                  std::int64_t s, std::int64_t pad) {
  if (n < 1 || k < 1 || s < 1 || pad < 0)
    throw std::invalid_argument("conv_out_side: bad parameters");
  if (n + 2 * pad < k)
    throw std::invalid_argument("conv_out_side: kernel larger than padded input");
  return (n + 2 * pad - k) / s + 1;
}

/// s (n - 1) + k - 2 pad + t. t relaxes the output-size ambiguity of the
/// forward formula; transposed ops pass ConvSpec::out_pad here.
inline std::int64_t deconv_out_side(std::int64_t n, std::int64_t k,
                                    std::int64_t s, std::int64_t pad,
                                    std::int64_t t = 0) {
  if (n < 1 || k < 1 || s < 1 || pad < 0 || t < 0 || t >= s)
    throw std::invalid_argument("deconv_out_side: bad parameters");
  const std::int64_t o = s * (n - 1) + k - 2 * pad + t;
  if (o < 1)
    throw std::invalid_argument("deconv_out_side: empty output for n=" +
                                std::to_string(n) + " k=" + std::to_string(k) +
                                " s=" + std::to_string(s) +
                                " pad=" + std::to_string(pad));
  return o;
}

struct ConvSpec {
  std::int64_t in_channels = 0;
  std::int64_t out_channels = 0;
  std::int64_t kernel = 0;
  std::int64_t stride = 1;
  std::int64_t pad = 0;
  std::int64_t out_pad = 0;  // transposed paths only: extra trailing rows/cols

  void validate() const {
    if (in_channels < 1 || out_channels < 1 || kernel < 1 || stride < 1 ||
        pad < 0)
      throw std::invalid_argument("ConvSpec: bad parameters");
    if (out_pad < 0 || out_pad >= stride)
      throw std::invalid_argument("ConvSpec: out_pad must be in [0, stride)");
  }
};

/// Weights are (out_channels, in_channels, k, k) for the convolution and the
/// transposed convolution alike; the transposed op scatters, so no channel
/// transpose is involved.
struct ConvParams {
  Tensor4 weight;
  std::vector<double> bias;
};

inline ConvParams init_conv_params(const ConvSpec& spec, RngStream& rng) {
  spec.validate();
  const double fan_in = double(spec.in_channels) * spec.kernel * spec.kernel;
  const double bound = std::sqrt(6.0 / fan_in);
  ConvParams p;
  p.weight = Tensor4::uniform(
      Shape4{spec.out_channels, spec.in_channels, spec.kernel, spec.kernel},
      -bound, bound, rng);
  p.bias.assign(static_cast<std::size_t>(spec.out_channels), 0.0);
  return p;
}

inline void check_conv_args(const Tensor4& x, const ConvParams& p,
                            const ConvSpec& spec, const char* what) {
  spec.validate();
  if (x.shape().c != spec.in_channels)
    throw std::invalid_argument(std::string(what) + ": input has " +
                                std::to_string(x.shape().c) +
                                " channels, spec expects " +
                                std::to_string(spec.in_channels));
  const Shape4 want{spec.out_channels, spec.in_channels, spec.kernel,
                    spec.kernel};
  if (!(p.weight.shape() == want))
    throw std::invalid_argument(std::string(what) + ": weight shape " +
                                p.weight.shape().str() + ", spec expects " +
                                want.str());
  if (std::int64_t(p.bias.size()) != spec.out_channels)
    throw std::invalid_argument(std::string(what) + ": bias size mismatch");
}

struct ConvGrads {
  Tensor4 grad_x;
  Tensor4 grad_w;
  std::vector<double> grad_b;
};

namespace detail {

inline double dot_strided(const double* a, std::int64_t ainc, const double* b,
                          std::int64_t binc, std::int64_t n) {
  double s0 = 0, s1 = 0, s2 = 0, s3 = 0;
  std::int64_t i = 0;
  for (; i + 4 <= n; i += 4) {
    s0 += a[(i + 0) * ainc] * b[(i + 0) * binc];
    s1 += a[(i + 1) * ainc] * b[(i + 1) * binc];
    s2 += a[(i + 2) * ainc] * b[(i + 2) * binc];
    s3 += a[(i + 3) * ainc] * b[(i + 3) * binc];
  }
  for (; i < n; ++i) s0 += a[i * ainc] * b[i * binc];
  return (s0 + s1) + (s2 + s3);
}

inline double sum_all(const double* a, std::int64_t n) {
  double s0 = 0, s1 = 0, s2 = 0, s3 = 0;
  std::int64_t i = 0;
  for (; i + 4 <= n; i += 4) {
    s0 += a[i + 0];
    s1 += a[i + 1];
    s2 += a[i + 2];
    s3 += a[i + 3];
  }
  for (; i < n; ++i) s0 += a[i];
  return (s0 + s1) + (s2 + s3);
}

}  // namespace detail

inline Tensor4 conv2d_forward(const Tensor4& x, const ConvParams& p,
                              const ConvSpec& spec) {
  check_conv_args(x, p, spec, "conv2d_forward");
  if (spec.out_pad != 0)
    throw std::invalid_argument(
        "conv2d_forward: out_pad only applies to transposed convolution");
  const Shape4 xs = x.shape();
  const std::int64_t k = spec.kernel, s = spec.stride, pad = spec.pad;
  const std::int64_t OH = conv_out_side(xs.h, k, s, pad);
  const std::int64_t OW = conv_out_side(xs.w, k, s, pad);
  Tensor4 out(Shape4{xs.n, spec.out_channels, OH, OW});
  for (std::int64_t n = 0; n < xs.n; ++n) {
    for (std::int64_t oc = 0; oc < spec.out_channels; ++oc) {
      double* op = out.plane(n, oc);
      const double b = p.bias[static_cast<std::size_t>(oc)];
      for (std::int64_t i = 0; i < OH * OW; ++i) op[i] = b;
      for (std::int64_t ic = 0; ic < spec.in_channels; ++ic) {
        const double* xp = x.plane(n, ic);
        for (std::int64_t kr = 0; kr < k; ++kr) {
          for (std::int64_t kc = 0; kc < k; ++kc) {
            const double w = p.weight.at(oc, ic, kr, kc);
            const std::int64_t ow_lo =
                std::max<std::int64_t>(0, ceil_div(pad - kc, s));
            const std::int64_t ow_hi = std::min<std::int64_t>(
                OW, floor_div(xs.w - 1 - kc + pad, s) + 1);
            if (ow_lo >= ow_hi) continue;
            for (std::int64_t oh = 0; oh < OH; ++oh) {
              const std::int64_t ih = oh * s + kr - pad;
              if (ih < 0 || ih >= xs.h) continue;
              const double* xrow = xp + ih * xs.w + (kc - pad);
              double* orow = op + oh * OW;
              if (s == 1) {
                for (std::int64_t ow = ow_lo; ow < ow_hi; ++ow)
                  orow[ow] += w * xrow[ow];
              } else {
                for (std::int64_t ow = ow_lo; ow < ow_hi; ++ow)
                  orow[ow] += w * xrow[ow * s];
              }
            }
          }
        }
      }
    }
  }
  return out;
}

inline ConvGrads conv2d_backward(const Tensor4& x, const ConvParams& p,
                                 const ConvSpec& spec,
                                 const Tensor4& grad_out) {
  check_conv_args(x, p, spec, "conv2d_backward");
  if (spec.out_pad != 0)
    throw std::invalid_argument(
        "conv2d_backward: out_pad only applies to transposed convolution");
  const Shape4 xs = x.shape();
  const std::int64_t k = spec.kernel, s = spec.stride, pad = spec.pad;
  const std::int64_t OH = conv_out_side(xs.h, k, s, pad);
  const std::int64_t OW = conv_out_side(xs.w, k, s, pad);
  if (!(grad_out.shape() == Shape4{xs.n, spec.out_channels, OH, OW}))
    throw std::invalid_argument("conv2d_backward: grad_out shape mismatch");

  ConvGrads g;
  g.grad_x = Tensor4::zeros(xs);
  g.grad_w = Tensor4::zeros(p.weight.shape());
  g.grad_b.assign(p.bias.size(), 0.0);

  for (std::int64_t n = 0; n < xs.n; ++n) {
    for (std::int64_t oc = 0; oc < spec.out_channels; ++oc) {
      const double* gp = grad_out.plane(n, oc);
      g.grad_b[static_cast<std::size_t>(oc)] += detail::sum_all(gp, OH * OW);
      for (std::int64_t ic = 0; ic < spec.in_channels; ++ic) {
        const double* xp = x.plane(n, ic);
        double* gxp = g.grad_x.plane(n, ic);
        for (std::int64_t kr = 0; kr < k; ++kr) {
          for (std::int64_t kc = 0; kc < k; ++kc) {
            const double w = p.weight.at(oc, ic, kr, kc);
            double acc = 0.0;
            const std::int64_t ow_lo =
                std::max<std::int64_t>(0, ceil_div(pad - kc, s));
            const std::int64_t ow_hi = std::min<std::int64_t>(
                OW, floor_div(xs.w - 1 - kc + pad, s) + 1);
            if (ow_lo >= ow_hi) continue;
            for (std::int64_t oh = 0; oh < OH; ++oh) {
              const std::int64_t ih = oh * s + kr - pad;
              if (ih < 0 || ih >= xs.h) continue;
              const double* xrow = xp + ih * xs.w + (kc - pad) + ow_lo * s;
              const double* grow = gp + oh * OW + ow_lo;
              double* gxrow = gxp + ih * xs.w + (kc - pad);
              acc += detail::dot_strided(grow, 1, xrow, s, ow_hi - ow_lo);
              if (s == 1) {
                for (std::int64_t ow = ow_lo; ow < ow_hi; ++ow)
                  gxrow[ow] += w * grow[ow - ow_lo];
              } else {
                for (std::int64_t ow = ow_lo; ow < ow_hi; ++ow)
                  gxrow[ow * s] += w * grow[ow - ow_lo];
              }
            }
            g.grad_w.at(oc, ic, kr, kc) += acc;
          }
        }
      }
    }
  }
  return g;
}

/// Transposed convolution as an explicit scatter. For every input cell the
/// k x k stamp lands at (ih s + kr - pad, iw s + kc - pad); writes falling
/// outside the s (n-1) + k - 2 pad output are dropped. Accumulation order
/// per output cell is (ic, ih, iw) ascending, which the zero-insertion
/// path reproduces exactly.
inline Tensor4 deconv2d_forward(const Tensor4& x, const ConvParams& p,
                                const ConvSpec& spec) {
  check_conv_args(x, p, spec, "deconv2d_forward");
  const Shape4 xs = x.shape();
  const std::int64_t k = spec.kernel, s = spec.stride, pad = spec.pad;
  const std::int64_t OH = deconv_out_side(xs.h, k, s, pad, spec.out_pad);
  const std::int64_t OW = deconv_out_side(xs.w, k, s, pad, spec.out_pad);
  Tensor4 out(Shape4{xs.n, spec.out_channels, OH, OW});
  for (std::int64_t n = 0; n < xs.n; ++n) {
    for (std::int64_t oc = 0; oc < spec.out_channels; ++oc) {
      double* op = out.plane(n, oc);
      const double b = p.bias[static_cast<std::size_t>(oc)];
      for (std::int64_t i = 0; i < OH * OW; ++i) op[i] = b;
      for (std::int64_t ic = 0; ic < spec.in_channels; ++ic) {
        const double* xp = x.plane(n, ic);
        const double* wbase = p.weight.plane(oc, ic);
        for (std::int64_t ih = 0; ih < xs.h; ++ih) {
          for (std::int64_t iw = 0; iw < xs.w; ++iw) {
            const double xv = xp[ih * xs.w + iw];
            const std::int64_t oy0 = ih * s - pad;
            const std::int64_t ox0 = iw * s - pad;
            for (std::int64_t kr = 0; kr < k; ++kr) {
              const std::int64_t oy = oy0 + kr;
              if (oy < 0 || oy >= OH) continue;
              const double* wrow = wbase + kr * k;
              double* orow = op + oy * OW;
              const std::int64_t kc_lo = std::max<std::int64_t>(0, -ox0);
              const std::int64_t kc_hi = std::min<std::int64_t>(k, OW - ox0);
              for (std::int64_t kc = kc_lo; kc < kc_hi; ++kc)
                orow[ox0 + kc] += xv * wrow[kc];
            }
          }
        }
      }
    }
  }
  return out;
}

inline ConvGrads deconv2d_backward(const Tensor4& x, const ConvParams& p,
                                   const ConvSpec& spec,
                                   const Tensor4& grad_out) {
  check_conv_args(x, p, spec, "deconv2d_backward");
  const Shape4 xs = x.shape();
  const std::int64_t k = spec.kernel, s = spec.stride, pad = spec.pad;
  const std::int64_t OH = deconv_out_side(xs.h, k, s, pad, spec.out_pad);
  const std::int64_t OW = deconv_out_side(xs.w, k, s, pad, spec.out_pad);
  if (!(grad_out.shape() == Shape4{xs.n, spec.out_channels, OH, OW}))
    throw std::invalid_argument("deconv2d_backward: grad_out shape mismatch");

  ConvGrads g;
  g.grad_x = Tensor4::zeros(xs);
  g.grad_w = Tensor4::zeros(p.weight.shape());
  g.grad_b.assign(p.bias.size(), 0.0);

  for (std::int64_t n = 0; n < xs.n; ++n) {
    for (std::int64_t oc = 0; oc < spec.out_channels; ++oc) {
      const double* gp = grad_out.plane(n, oc);
      g.grad_b[static_cast<std::size_t>(oc)] += detail::sum_all(gp, OH * OW);
      for (std::int64_t ic = 0; ic < spec.in_channels; ++ic) {
        const double* xp = x.plane(n, ic);
        double* gxp = g.grad_x.plane(n, ic);
        for (std::int64_t kr = 0; kr < k; ++kr) {
          for (std::int64_t kc = 0; kc < k; ++kc) {
            const double w = p.weight.at(oc, ic, kr, kc);
            double acc = 0.0;
            for (std::int64_t ih = 0; ih < xs.h; ++ih) {
              const std::int64_t oy = ih * s + kr - pad;
              if (oy < 0 || oy >= OH) continue;
              const std::int64_t iw_lo =
                  std::max<std::int64_t>(0, ceil_div(pad - kc, s));
              const std::int64_t iw_hi = std::min<std::int64_t>(
                  xs.w, floor_div(OW - 1 - kc + pad, s) + 1);
              if (iw_lo >= iw_hi) continue;
              const double* grow = gp + oy * OW + (kc - pad) + iw_lo * s;
              const double* xrow = xp + ih * xs.w + iw_lo;
              double* gxrow = gxp + ih * xs.w;
              acc += detail::dot_strided(xrow, 1, grow, s, iw_hi - iw_lo);
              for (std::int64_t iw = iw_lo; iw < iw_hi; ++iw)
                gxrow[iw] += w * grow[(iw - iw_lo) * s];
            }
            g.grad_w.at(oc, ic, kr, kc) += acc;
          }
        }
      }
    }
  }
  return g;
}

/// The gather formulation of the transposed convolution: insert s-1 zeros
/// between input samples, pad by k - pad - 1, run a stride-1 convolution
/// with the spatially flipped kernel. Produces outputs bitwise identical
/// to deconv2d_forward because every output cell accumulates the same
/// products in the same order (zero stuffing only contributes exact-zero
/// terms, which round-to-nearest addition ignores).
inline Tensor4 deconv_as_zero_insertion(const Tensor4& x, const ConvParams& p,
                                        const ConvSpec& spec) {
  check_conv_args(x, p, spec, "deconv_as_zero_insertion");
  const Shape4 xs = x.shape();
  const std::int64_t k = spec.kernel, s = spec.stride, pad = spec.pad;
  const std::int64_t pad2 = k - pad - 1;
  if (pad2 < 0)
    throw std::invalid_argument(
        "deconv_as_zero_insertion: requires pad <= kernel - 1");
  const std::int64_t OH = deconv_out_side(xs.h, k, s, pad, spec.out_pad);
  const std::int64_t OW = deconv_out_side(xs.w, k, s, pad, spec.out_pad);
  // out_pad appends zero rows/cols after the last stretched sample, so the
  // stride-1 convolution emits the extra trailing outputs.
  const std::int64_t SH = xs.h + (xs.h - 1) * (s - 1) + 2 * pad2 + spec.out_pad;
  const std::int64_t SW = xs.w + (xs.w - 1) * (s - 1) + 2 * pad2 + spec.out_pad;

  Tensor4 stretched(Shape4{xs.n, xs.c, SH, SW});
  for (std::int64_t n = 0; n < xs.n; ++n)
    for (std::int64_t c = 0; c < xs.c; ++c) {
      const double* xp = x.plane(n, c);
      double* sp = stretched.plane(n, c);
      for (std::int64_t ih = 0; ih < xs.h; ++ih)
        for (std::int64_t iw = 0; iw < xs.w; ++iw)
          sp[(pad2 + ih * s) * SW + (pad2 + iw * s)] = xp[ih * xs.w + iw];
    }

  Tensor4 flipped(p.weight.shape());
  for (std::int64_t oc = 0; oc < spec.out_channels; ++oc)
    for (std::int64_t ic = 0; ic < spec.in_channels; ++ic)
      for (std::int64_t kr = 0; kr < k; ++kr)
        for (std::int64_t kc = 0; kc < k; ++kc)
          flipped.at(oc, ic, kr, kc) = p.weight.at(oc, ic, k - 1 - kr, k - 1 - kc);

  Tensor4 out(Shape4{xs.n, spec.out_channels, OH, OW});
  for (std::int64_t n = 0; n < xs.n; ++n) {
    for (std::int64_t oc = 0; oc < spec.out_channels; ++oc) {
      double* op = out.plane(n, oc);
      const double b = p.bias[static_cast<std::size_t>(oc)];
      for (std::int64_t oy = 0; oy < OH; ++oy) {
        for (std::int64_t ox = 0; ox < OW; ++ox) {
          double acc = b;
          for (std::int64_t ic = 0; ic < spec.in_channels; ++ic) {
            const double* sp = stretched.plane(n, ic);
            const double* wbase = flipped.plane(oc, ic);
            for (std::int64_t kr = 0; kr < k; ++kr) {
              const double* srow = sp + (oy + kr) * SW + ox;
              const double* wrow = wbase + kr * k;
              for (std::int64_t kc = 0; kc < k; ++kc)
                acc += srow[kc] * wrow[kc];
            }
          }
          op[oy * OW + ox] = acc;
        }
      }
    }
  }
  return out;
}

}  // namespace ucf
