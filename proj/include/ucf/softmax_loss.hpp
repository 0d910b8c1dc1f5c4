#pragma once

#include <cmath>
#include <cstdint>
#include <stdexcept>

#include "ucf/tensor.hpp"

namespace ucf {

/// Channel softmax per (n, h, w) location, max-subtracted for stability.
inline Tensor4 softmax_channels(const Tensor4& x) {
  const Shape4 xs = x.shape();
  if (xs.c < 1) throw std::invalid_argument("softmax_channels: no channels");
  Tensor4 out(xs);
  const std::int64_t plane_sz = xs.h * xs.w;
  for (std::int64_t n = 0; n < xs.n; ++n) {
    for (std::int64_t i = 0; i < plane_sz; ++i) {
      double mx = x.plane(n, 0)[i];
      for (std::int64_t c = 1; c < xs.c; ++c)
        mx = std::max(mx, x.plane(n, c)[i]);
      double denom = 0.0;
      for (std::int64_t c = 0; c < xs.c; ++c)
        denom += std::exp(x.plane(n, c)[i] - mx);
      for (std::int64_t c = 0; c < xs.c; ++c)
        out.plane(n, c)[i] = std::exp(x.plane(n, c)[i] - mx) / denom;
    }
  }
  return out;
}

inline Tensor4 channel_slice(const Tensor4& x, std::int64_t c) {
  const Shape4 xs = x.shape();
  if (c < 0 || c >= xs.c)
    throw std::invalid_argument("channel_slice: channel out of range");
  Tensor4 out(Shape4{xs.n, 1, xs.h, xs.w});
  const std::int64_t plane_sz = xs.h * xs.w;
  for (std::int64_t n = 0; n < xs.n; ++n)
    for (std::int64_t i = 0; i < plane_sz; ++i)
      out.plane(n, 0)[i] = x.plane(n, c)[i];
  return out;
}

struct CrossEntropyResult {
  double sum = 0.0;       // summed over every pixel
  double mean = 0.0;      // sum / pixel count
  std::int64_t pixels = 0;
  Tensor4 grad_logits;    // (n, 2, h, w), gradient of the summed loss
};

/// Pixelwise two-class cross entropy. q is the foreground probability map
/// produced by a two-channel softmax (channel 1 foreground); the returned
/// gradient is taken with respect to the logits through that coupling, so
/// channel 1 gets q - label and channel 0 the negation. Probabilities are
/// clamped to [1e-12, 1 - 1e-12] inside the logs only.
inline CrossEntropyResult cross_entropy_loss(const Tensor4& q,
                                             const Tensor4& labels) {
  require_same_shape(q, labels, "cross_entropy_loss");
  const Shape4 qs = q.shape();
  if (qs.c != 1)
    throw std::invalid_argument("cross_entropy_loss: q must be (n,1,h,w)");
  CrossEntropyResult res;
  res.pixels = qs.n * qs.h * qs.w;
  res.grad_logits = Tensor4(Shape4{qs.n, 2, qs.h, qs.w});
  const std::int64_t plane_sz = qs.h * qs.w;
  double total = 0.0;
  for (std::int64_t n = 0; n < qs.n; ++n) {
    const double* qp = q.plane(n, 0);
    const double* lp = labels.plane(n, 0);
    double* g0 = res.grad_logits.plane(n, 0);
    double* g1 = res.grad_logits.plane(n, 1);
    for (std::int64_t i = 0; i < plane_sz; ++i) {
      const double label = lp[i];
      if (label != 0.0 && label != 1.0)
        throw std::invalid_argument("cross_entropy_loss: labels must be 0/1");
      // NaN-propagating clamp so a poisoned forward pass surfaces as a
      // non-finite loss instead of being silently pinned to a bound.
      const double qv = qp[i];
      const double qc = qv < 1e-12 ? 1e-12 : (qv > 1.0 - 1e-12 ? 1.0 - 1e-12 : qv);
      total -= label * std::log(qc) + (1.0 - label) * std::log(1.0 - qc);
      const double d = qp[i] - label;
      g1[i] = d;
      g0[i] = -d;
    }
  }
  res.sum = total;
  res.mean = total / double(res.pixels);
  return res;
}

struct SoftmaxLossResult {
  Tensor4 q;  // foreground probability (n,1,h,w)
  CrossEntropyResult ce;
};

/// Convenience fusion for two-channel logits.
inline SoftmaxLossResult softmax_cross_entropy(const Tensor4& logits,
                                               const Tensor4& labels) {
  if (logits.shape().c != 2)
    throw std::invalid_argument("softmax_cross_entropy: logits must be 2ch");
  SoftmaxLossResult res;
  res.q = channel_slice(softmax_channels(logits), 1);
  res.ce = cross_entropy_loss(res.q, labels);
  return res;
}

}  // namespace ucf
