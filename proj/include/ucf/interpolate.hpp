#pragma once

#include <cmath>
#include <cstdint>
#include <stdexcept>

#include "ucf/tensor.hpp"

namespace ucf {

enum class InterpMode { bilinear, nearest };

namespace detail {

/// Align-corners source coordinate: endpoints map to endpoints exactly.
inline double src_coord(std::int64_t dst, std::int64_t in_n,
                        std::int64_t out_n) {
  if (out_n <= 1 || in_n <= 1) return 0.0;
  return double(dst) * double(in_n - 1) / double(out_n - 1);
}

}  // namespace detail

inline Tensor4 interpolate(const Tensor4& x, std::int64_t out_h,
                           std::int64_t out_w, InterpMode mode) {
  if (out_h < 1 || out_w < 1)
    throw std::invalid_argument("interpolate: output sides must be positive");
  const Shape4 xs = x.shape();
  Tensor4 out(Shape4{xs.n, xs.c, out_h, out_w});
  for (std::int64_t n = 0; n < xs.n; ++n) {
    for (std::int64_t c = 0; c < xs.c; ++c) {
      const double* xp = x.plane(n, c);
      double* op = out.plane(n, c);
      for (std::int64_t oy = 0; oy < out_h; ++oy) {
        const double sy = detail::src_coord(oy, xs.h, out_h);
        for (std::int64_t ox = 0; ox < out_w; ++ox) {
          const double sx = detail::src_coord(ox, xs.w, out_w);
          if (mode == InterpMode::nearest) {
            const std::int64_t iy = std::min<std::int64_t>(
                xs.h - 1, std::int64_t(std::floor(sy + 0.5)));
            const std::int64_t ix = std::min<std::int64_t>(
                xs.w - 1, std::int64_t(std::floor(sx + 0.5)));
            op[oy * out_w + ox] = xp[iy * xs.w + ix];
          } else {
            const std::int64_t y0 = std::int64_t(std::floor(sy));
            const std::int64_t x0 = std::int64_t(std::floor(sx));
            const std::int64_t y1 = std::min(y0 + 1, xs.h - 1);
            const std::int64_t x1 = std::min(x0 + 1, xs.w - 1);
            const double fy = sy - double(y0);
            const double fx = sx - double(x0);
            const double v00 = xp[y0 * xs.w + x0];
            const double v01 = xp[y0 * xs.w + x1];
            const double v10 = xp[y1 * xs.w + x0];
            const double v11 = xp[y1 * xs.w + x1];
            op[oy * out_w + ox] = (1 - fy) * ((1 - fx) * v00 + fx * v01) +
                                  fy * ((1 - fx) * v10 + fx * v11);
          }
        }
      }
    }
  }
  return out;
}

/// Exact transpose of the forward map: each output gradient is routed back
/// to the source cells with the same interpolation weights.
inline Tensor4 interpolate_backward(const Tensor4& grad_out, Shape4 in_shape,
                                    InterpMode mode) {
  const Shape4 gs = grad_out.shape();
  if (gs.n != in_shape.n || gs.c != in_shape.c)
    throw std::invalid_argument("interpolate_backward: shape mismatch");
  Tensor4 grad_x = Tensor4::zeros(in_shape);
  for (std::int64_t n = 0; n < gs.n; ++n) {
    for (std::int64_t c = 0; c < gs.c; ++c) {
      const double* gp = grad_out.plane(n, c);
      double* op = grad_x.plane(n, c);
      for (std::int64_t oy = 0; oy < gs.h; ++oy) {
        const double sy = detail::src_coord(oy, in_shape.h, gs.h);
        for (std::int64_t ox = 0; ox < gs.w; ++ox) {
          const double sx = detail::src_coord(ox, in_shape.w, gs.w);
          const double g = gp[oy * gs.w + ox];
          if (mode == InterpMode::nearest) {
            const std::int64_t iy = std::min<std::int64_t>(
                in_shape.h - 1, std::int64_t(std::floor(sy + 0.5)));
            const std::int64_t ix = std::min<std::int64_t>(
                in_shape.w - 1, std::int64_t(std::floor(sx + 0.5)));
            op[iy * in_shape.w + ix] += g;
          } else {
            const std::int64_t y0 = std::int64_t(std::floor(sy));
            const std::int64_t x0 = std::int64_t(std::floor(sx));
            const std::int64_t y1 = std::min(y0 + 1, in_shape.h - 1);
            const std::int64_t x1 = std::min(x0 + 1, in_shape.w - 1);
            const double fy = sy - double(y0);
            const double fx = sx - double(x0);
            op[y0 * in_shape.w + x0] += (1 - fy) * (1 - fx) * g;
            op[y0 * in_shape.w + x1] += (1 - fy) * fx * g;
            op[y1 * in_shape.w + x0] += fy * (1 - fx) * g;
            op[y1 * in_shape.w + x1] += fy * fx * g;
          }
        }
      }
    }
  }
  return grad_x;
}

}  // namespace ucf
