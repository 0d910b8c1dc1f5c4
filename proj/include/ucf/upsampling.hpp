#pragma once

#include <cstdint>
#include <cstdio>
#include <fstream>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

#include "ucf/conv.hpp"
#include "ucf/interpolate.hpp"
#include "ucf/parallel.hpp"
#include "ucf/rng.hpp"
#include "ucf/tensor.hpp"

namespace ucf {

/// Size bookkeeping for a transposed convolution in one dimension.
struct DeconvArith {
  std::int64_t input_side = 0;
  std::int64_t kernel = 0;
  std::int64_t stride = 1;
  std::int64_t pad = 0;
  std::int64_t t = 0;
  std::int64_t stretched_side = 0;  // zeros inserted, before padding
  std::int64_t out_side = 0;
  bool overlap = false;  // kernel stamps collide iff k mod s != 0
};

inline DeconvArith arith_report(std::int64_t n, std::int64_t k, std::int64_t s,
                                std::int64_t pad, std::int64_t t = 0) {
  DeconvArith a;
  a.input_side = n;
  a.kernel = k;
  a.stride = s;
  a.pad = pad;
  a.t = t;
  a.out_side = deconv_out_side(n, k, s, pad, t);  // validates everything
  a.stretched_side = n + (n - 1) * (s - 1);
  a.overlap = (k % s) != 0;
  return a;
}

enum class UpsampleMode { deconv_naive, deconv_restricted, interp_conv, hybrid };

inline const char* upsample_mode_name(UpsampleMode m) {
  switch (m) {
    case UpsampleMode::deconv_naive: return "deconv_naive";
    case UpsampleMode::deconv_restricted: return "deconv_restricted";
    case UpsampleMode::interp_conv: return "interp_conv";
    case UpsampleMode::hybrid: return "hybrid";
  }
  return "?";
}

inline UpsampleMode parse_upsample_mode(std::string_view s) {
  if (s == "deconv_naive") return UpsampleMode::deconv_naive;
  if (s == "deconv_restricted") return UpsampleMode::deconv_restricted;
  if (s == "interp_conv" || s == "interp") return UpsampleMode::interp_conv;
  if (s == "hybrid") return UpsampleMode::hybrid;
  throw std::invalid_argument("unknown upsample mode: " + std::string(s));
}

struct UpsampleSpec {
  UpsampleMode mode = UpsampleMode::deconv_restricted;
  std::int64_t in_channels = 0;
  std::int64_t out_channels = 0;
  std::int64_t kernel = 4;
  std::int64_t stride = 2;
  std::int64_t pad = -1;  // -1 resolves to (k-s)/2 when that is integral
  std::int64_t out_pad = 0;
  InterpMode interp = InterpMode::bilinear;

  std::int64_t resolved_pad() const {
    if (pad >= 0) return pad;
    if (kernel >= stride && (kernel - stride) % 2 == 0)
      return (kernel - stride) / 2;
    return 0;
  }

  bool has_deconv() const { return mode != UpsampleMode::interp_conv; }
  bool has_interp() const {
    return mode == UpsampleMode::interp_conv || mode == UpsampleMode::hybrid;
  }

  void validate() const {
    if (in_channels < 1 || out_channels < 1 || kernel < 1 || stride < 1)
      throw std::invalid_argument("UpsampleSpec: bad parameters");
    if (out_pad < 0 || out_pad >= stride)
      throw std::invalid_argument("UpsampleSpec: out_pad must be in [0, stride)");
    if ((mode == UpsampleMode::deconv_restricted ||
         mode == UpsampleMode::hybrid) &&
        kernel % stride != 0)
      throw std::invalid_argument(
          "UpsampleSpec: restricted filters need kernel to be a multiple of "
          "the stride; got k=" +
          std::to_string(kernel) + " s=" + std::to_string(stride));
  }

  ConvSpec deconv_spec() const {
    return ConvSpec{in_channels, out_channels, kernel,
                    stride,      resolved_pad(), out_pad};
  }
  ConvSpec proj_spec() const {
    return ConvSpec{in_channels, out_channels, 1, 1, 0};
  }

  std::int64_t out_side(std::int64_t in_side) const {
    if (mode == UpsampleMode::interp_conv) return stride * in_side;
    return deconv_out_side(in_side, kernel, stride, resolved_pad(), out_pad);
  }
};

struct UpsamplerParams {
  ConvParams deconv;  // empty unless the mode has a deconv branch
  ConvParams proj;    // empty unless the mode has an interp branch
};

inline UpsamplerParams init_upsampler(const UpsampleSpec& spec,
                                      RngStream& rng) {
  spec.validate();
  UpsamplerParams p;
  if (spec.has_deconv()) p.deconv = init_conv_params(spec.deconv_spec(), rng);
  if (spec.has_interp()) p.proj = init_conv_params(spec.proj_spec(), rng);
  return p;
}

/// One upsampling block. deconv_naive and deconv_restricted are a plain
/// transposed convolution (restricted only differs by the validated kernel
/// constraint); interp_conv resizes then projects with a 1x1 convolution;
/// hybrid sums a restricted deconv branch and an interp branch resized to
/// the deconv branch's output size.
inline Tensor4 upsampler_forward(const Tensor4& x, const UpsampleSpec& spec,
                                 const UpsamplerParams& p) {
  spec.validate();
  const Shape4 xs = x.shape();
  switch (spec.mode) {
    case UpsampleMode::deconv_naive:
    case UpsampleMode::deconv_restricted:
      return deconv2d_forward(x, p.deconv, spec.deconv_spec());
    case UpsampleMode::interp_conv: {
      Tensor4 up = interpolate(x, spec.stride * xs.h, spec.stride * xs.w,
                               spec.interp);
      return conv2d_forward(up, p.proj, spec.proj_spec());
    }
    case UpsampleMode::hybrid: {
      Tensor4 d = deconv2d_forward(x, p.deconv, spec.deconv_spec());
      Tensor4 up =
          interpolate(x, d.shape().h, d.shape().w, spec.interp);
      return add(d, conv2d_forward(up, p.proj, spec.proj_spec()));
    }
  }
  throw std::logic_error("upsampler_forward: bad mode");
}

struct UpsamplerGrads {
  Tensor4 grad_x;
  ConvGrads deconv;
  ConvGrads proj;
};

inline UpsamplerGrads upsampler_backward(const Tensor4& x,
                                         const UpsampleSpec& spec,
                                         const UpsamplerParams& p,
                                         const Tensor4& grad_out) {
  spec.validate();
  const Shape4 xs = x.shape();
  UpsamplerGrads g;
  switch (spec.mode) {
    case UpsampleMode::deconv_naive:
    case UpsampleMode::deconv_restricted:
      g.deconv = deconv2d_backward(x, p.deconv, spec.deconv_spec(), grad_out);
      g.grad_x = std::move(g.deconv.grad_x);
      g.deconv.grad_x = Tensor4();
      return g;
    case UpsampleMode::interp_conv: {
      Tensor4 up = interpolate(x, spec.stride * xs.h, spec.stride * xs.w,
                               spec.interp);
      g.proj = conv2d_backward(up, p.proj, spec.proj_spec(), grad_out);
      g.grad_x = interpolate_backward(g.proj.grad_x, xs, spec.interp);
      g.proj.grad_x = Tensor4();
      return g;
    }
    case UpsampleMode::hybrid: {
      g.deconv = deconv2d_backward(x, p.deconv, spec.deconv_spec(), grad_out);
      const std::int64_t oh = grad_out.shape().h, ow = grad_out.shape().w;
      Tensor4 up = interpolate(x, oh, ow, spec.interp);
      g.proj = conv2d_backward(up, p.proj, spec.proj_spec(), grad_out);
      g.grad_x = add(g.deconv.grad_x,
                     interpolate_backward(g.proj.grad_x, xs, spec.interp));
      g.deconv.grad_x = Tensor4();
      g.proj.grad_x = Tensor4();
      return g;
    }
  }
  throw std::logic_error("upsampler_backward: bad mode");
}

/// How many kernel taps each output pixel of a scatter-add transposed
/// convolution receives (all-ones kernel and input, zero pad, input long
/// enough that only the left border is truncated). Uniform interior at
/// (k/s)^2 iff k mod s = 0.
inline Tensor4 contribution_count_map(std::int64_t k, std::int64_t s,
                                      std::int64_t out_side) {
  if (k < 1 || s < 1 || out_side < 1)
    throw std::invalid_argument("contribution_count_map: bad parameters");
  std::vector<double> line(static_cast<std::size_t>(out_side), 0.0);
  const std::int64_t i_max = (out_side - 1) / s;
  for (std::int64_t i = 0; i <= i_max; ++i)
    for (std::int64_t kr = 0; kr < k; ++kr) {
      const std::int64_t pos = i * s + kr;
      if (pos < out_side) line[static_cast<std::size_t>(pos)] += 1.0;
    }
  Tensor4 map(Shape4{1, 1, out_side, out_side});
  for (std::int64_t r = 0; r < out_side; ++r)
    for (std::int64_t c = 0; c < out_side; ++c)
      map.at(0, 0, r, c) =
          line[static_cast<std::size_t>(r)] * line[static_cast<std::size_t>(c)];
  return map;
}

/// Stride-periodic artifact strength. The interior (after trimming `trim`
/// pixels of border, normally the kernel size) is split into s*s phase
/// classes by (row mod s, col mod s); the score is the variance of the
/// class means over the variance of the interior plus a small epsilon.
/// Shift and positive-scale invariant; 0 means no periodic structure.
inline double checkerboard_score(const Tensor4& y, std::int64_t s,
                                 std::int64_t trim) {
  if (s < 1 || trim < 0)
    throw std::invalid_argument("checkerboard_score: bad parameters");
  const Shape4 ys = y.shape();
  const std::int64_t lo_r = trim, hi_r = ys.h - trim;
  const std::int64_t lo_c = trim, hi_c = ys.w - trim;
  if (hi_r - lo_r < s || hi_c - lo_c < s)
    throw std::invalid_argument(
        "checkerboard_score: interior smaller than one period after trim");

  double total = 0.0;
  for (std::int64_t n = 0; n < ys.n; ++n) {
    for (std::int64_t c = 0; c < ys.c; ++c) {
      const double* yp = y.plane(n, c);
      std::vector<double> class_sum(static_cast<std::size_t>(s * s), 0.0);
      std::vector<double> class_cnt(static_cast<std::size_t>(s * s), 0.0);
      double sum = 0.0, count = 0.0;
      for (std::int64_t r = lo_r; r < hi_r; ++r)
        for (std::int64_t q = lo_c; q < hi_c; ++q) {
          const double v = yp[r * ys.w + q];
          const std::size_t cls =
              static_cast<std::size_t>((r % s) * s + (q % s));
          class_sum[cls] += v;
          class_cnt[cls] += 1.0;
          sum += v;
          count += 1.0;
        }
      const double mean = sum / count;
      double var = 0.0;
      for (std::int64_t r = lo_r; r < hi_r; ++r)
        for (std::int64_t q = lo_c; q < hi_c; ++q) {
          const double d = yp[r * ys.w + q] - mean;
          var += d * d;
        }
      var /= count;
      double class_var = 0.0;
      double nclasses = 0.0;
      for (std::size_t cls = 0; cls < class_sum.size(); ++cls) {
        if (class_cnt[cls] == 0.0) continue;
        const double cm = class_sum[cls] / class_cnt[cls];
        class_var += (cm - mean) * (cm - mean);
        nclasses += 1.0;
      }
      class_var /= nclasses;
      total += class_var / (var + 1e-12);
    }
  }
  return total / double(ys.n * ys.c);
}

struct SweepRow {
  UpsampleMode mode;
  std::int64_t k = 0;
  std::int64_t s = 0;
  std::int64_t trial = 0;
  double score = 0.0;
};

/// Random-weight, random-input artifact sweep. Every trial derives its own
/// stream from (seed, mode/k/s key, trial), so rows are independent of
/// evaluation order and bit-identical across reruns.
inline std::vector<SweepRow> upsampler_sweep(
    const std::vector<UpsampleSpec>& specs, std::int64_t size,
    std::int64_t trials, std::uint64_t seed) {
  if (size < 2 || trials < 1)
    throw std::invalid_argument("upsampler_sweep: bad size or trials");
  std::vector<SweepRow> rows(static_cast<std::size_t>(trials) * specs.size());
  for (std::size_t si = 0; si < specs.size(); ++si) {
    const UpsampleSpec& spec = specs[si];
    spec.validate();
    const std::int64_t out = spec.out_side(size);
    if (out - 2 * spec.kernel < spec.stride)
      throw std::invalid_argument(
          "upsampler_sweep: size " + std::to_string(size) +
          " leaves no interior after trimming k=" + std::to_string(spec.kernel));
    const std::uint64_t spec_key =
        (std::uint64_t(spec.mode) << 32) | std::uint64_t(spec.kernel << 8) |
        std::uint64_t(spec.stride);
    SweepRow* base = rows.data() + si * static_cast<std::size_t>(trials);
    parallel_for(trials, [&, base](std::int64_t trial) {
      RngStream rng = RngStream::derive(seed, StreamDomain::sweep, spec_key,
                                        std::uint64_t(trial));
      UpsamplerParams p = init_upsampler(spec, rng);
      for (double& b : p.deconv.bias) b = rng.next_uniform(-0.1, 0.1);
      Tensor4 x = Tensor4::uniform(
          Shape4{1, spec.in_channels, size, size}, 0.0, 1.0, rng);
      Tensor4 y = upsampler_forward(x, spec, p);
      base[trial] = SweepRow{spec.mode, spec.kernel, spec.stride, trial,
                             checkerboard_score(y, spec.stride, spec.kernel)};
    });
  }
  return rows;
}

inline double sweep_mean_score(const std::vector<SweepRow>& rows,
                               UpsampleMode mode) {
  double sum = 0.0;
  std::int64_t n = 0;
  for (const SweepRow& r : rows)
    if (r.mode == mode) {
      sum += r.score;
      ++n;
    }
  if (n == 0) throw std::invalid_argument("sweep_mean_score: no rows");
  return sum / double(n);
}

inline void write_sweep_csv(const std::string& path,
                            const std::vector<SweepRow>& rows) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot open " + path);
  out << "mode,k,s,trial,score\n";
  char buf[64];
  for (const SweepRow& r : rows) {
    std::snprintf(buf, sizeof buf, "%.17g", r.score);
    out << upsample_mode_name(r.mode) << ',' << r.k << ',' << r.s << ','
        << r.trial << ',' << buf << '\n';
  }
  if (!out) throw std::runtime_error("failed writing " + path);
}

}  // namespace ucf
