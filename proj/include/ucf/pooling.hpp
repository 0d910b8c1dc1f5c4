#pragma once

#include <cstdint>
#include <stdexcept>
#include <vector>

#include "ucf/tensor.hpp"

namespace ucf {

/// Non-overlapping max pooling (stride equals window). argmax holds, for
/// every output element, the flat index into the input of the winning cell;
/// ties go to the smallest flat index so routing is unambiguous.
struct MaxPoolResult {
  Tensor4 output;
  std::vector<std::int64_t> argmax;
  Shape4 input_shape;
};

inline MaxPoolResult maxpool_forward(const Tensor4& x, std::int64_t window) {
  if (window < 1) throw std::invalid_argument("maxpool_forward: window < 1");
  const Shape4 xs = x.shape();
  if (xs.h % window != 0 || xs.w % window != 0)
    throw std::invalid_argument(
        "maxpool_forward: input sides must be divisible by the window; got " +
        xs.str() + " window " + std::to_string(window));
  const std::int64_t OH = xs.h / window, OW = xs.w / window;
  MaxPoolResult res;
  res.output = Tensor4(Shape4{xs.n, xs.c, OH, OW});
  res.argmax.assign(static_cast<std::size_t>(res.output.size()), -1);
  res.input_shape = xs;
  std::int64_t oidx = 0;
  for (std::int64_t n = 0; n < xs.n; ++n) {
    for (std::int64_t c = 0; c < xs.c; ++c) {
      const double* xp = x.plane(n, c);
      const std::int64_t plane_base = (n * xs.c + c) * xs.h * xs.w;
      for (std::int64_t oh = 0; oh < OH; ++oh) {
        for (std::int64_t ow = 0; ow < OW; ++ow, ++oidx) {
          double best = xp[(oh * window) * xs.w + ow * window];
          std::int64_t best_at = (oh * window) * xs.w + ow * window;
          for (std::int64_t r = 0; r < window; ++r) {
            const std::int64_t row = (oh * window + r) * xs.w + ow * window;
            for (std::int64_t q = 0; q < window; ++q) {
              if (xp[row + q] > best) {
                best = xp[row + q];
                best_at = row + q;
              }
            }
          }
          res.output.data()[oidx] = best;
          res.argmax[static_cast<std::size_t>(oidx)] = plane_base + best_at;
        }
      }
    }
  }
  return res;
}

inline Tensor4 maxpool_backward(const Tensor4& grad_out,
                                const MaxPoolResult& fwd) {
  if (!(grad_out.shape() == fwd.output.shape()))
    throw std::invalid_argument("maxpool_backward: grad_out shape mismatch");
  Tensor4 grad_x = Tensor4::zeros(fwd.input_shape);
  for (std::int64_t i = 0; i < grad_out.size(); ++i)
    grad_x.data()[fwd.argmax[static_cast<std::size_t>(i)]] +=
        grad_out.data()[i];
  return grad_x;
}

}  // namespace ucf
