#pragma once

#include <cmath>
#include <cstdint>
#include <stdexcept>
#include <vector>

#include "ucf/tensor.hpp"

namespace ucf {

struct BatchNormParams {
  std::vector<double> gamma;
  std::vector<double> beta;
  std::vector<double> running_mean;
  std::vector<double> running_var;
  double eps = 1e-5;
  double momentum = 0.9;  // weight kept on the old running value

  static BatchNormParams init(std::int64_t channels) {
    if (channels < 1) throw std::invalid_argument("BatchNormParams: channels");
    BatchNormParams p;
    p.gamma.assign(static_cast<std::size_t>(channels), 1.0);
    p.beta.assign(static_cast<std::size_t>(channels), 0.0);
    p.running_mean.assign(static_cast<std::size_t>(channels), 0.0);
    p.running_var.assign(static_cast<std::size_t>(channels), 1.0);
    return p;
  }

  std::int64_t channels() const { return std::int64_t(gamma.size()); }
};

struct BatchNormCache {
  Mode mode = Mode::train;
  std::vector<double> mean;     // statistics actually used by the pass
  std::vector<double> inv_std;
};

/// Train mode normalizes with biased batch statistics and folds them into
/// the running estimates; eval mode normalizes with the running estimates
/// and touches nothing.
inline Tensor4 batchnorm_forward(const Tensor4& x, BatchNormParams& params,
                                 Mode mode, BatchNormCache* cache = nullptr) {
  const Shape4 xs = x.shape();
  if (xs.c != params.channels())
    throw std::invalid_argument("batchnorm_forward: channel mismatch");
  const std::int64_t m = xs.n * xs.h * xs.w;
  if (mode == Mode::train && m < 2)
    throw std::invalid_argument(
        "batchnorm_forward: train mode needs at least 2 values per channel");

  std::vector<double> mean(static_cast<std::size_t>(xs.c), 0.0);
  std::vector<double> inv_std(static_cast<std::size_t>(xs.c), 0.0);
  const std::int64_t plane_sz = xs.h * xs.w;

  for (std::int64_t c = 0; c < xs.c; ++c) {
    double mu, var;
    if (mode == Mode::train) {
      double sum = 0.0;
      for (std::int64_t n = 0; n < xs.n; ++n) {
        const double* xp = x.plane(n, c);
        for (std::int64_t i = 0; i < plane_sz; ++i) sum += xp[i];
      }
      mu = sum / double(m);
      double sq = 0.0;
      for (std::int64_t n = 0; n < xs.n; ++n) {
        const double* xp = x.plane(n, c);
        for (std::int64_t i = 0; i < plane_sz; ++i) {
          const double d = xp[i] - mu;
          sq += d * d;
        }
      }
      var = sq / double(m);
      const std::size_t ci = static_cast<std::size_t>(c);
      params.running_mean[ci] =
          params.momentum * params.running_mean[ci] + (1.0 - params.momentum) * mu;
      params.running_var[ci] =
          params.momentum * params.running_var[ci] + (1.0 - params.momentum) * var;
    } else {
      mu = params.running_mean[static_cast<std::size_t>(c)];
      var = params.running_var[static_cast<std::size_t>(c)];
    }
    mean[static_cast<std::size_t>(c)] = mu;
    inv_std[static_cast<std::size_t>(c)] = 1.0 / std::sqrt(var + params.eps);
  }

  Tensor4 out(xs);
  for (std::int64_t n = 0; n < xs.n; ++n) {
    for (std::int64_t c = 0; c < xs.c; ++c) {
      const double mu = mean[static_cast<std::size_t>(c)];
      const double istd = inv_std[static_cast<std::size_t>(c)];
      const double gam = params.gamma[static_cast<std::size_t>(c)];
      const double bet = params.beta[static_cast<std::size_t>(c)];
      const double* xp = x.plane(n, c);
      double* op = out.plane(n, c);
      for (std::int64_t i = 0; i < plane_sz; ++i)
        op[i] = gam * ((xp[i] - mu) * istd) + bet;
    }
  }
  if (cache) {
    cache->mode = mode;
    cache->mean = std::move(mean);
    cache->inv_std = std::move(inv_std);
  }
  return out;
}

struct BatchNormGrads {
  Tensor4 grad_x;
  std::vector<double> grad_gamma;
  std::vector<double> grad_beta;
};

inline BatchNormGrads batchnorm_backward(const Tensor4& x,
                                         const BatchNormParams& params,
                                         const BatchNormCache& cache,
                                         const Tensor4& grad_out) {
  const Shape4 xs = x.shape();
  require_same_shape(x, grad_out, "batchnorm_backward");
  if (xs.c != params.channels())
    throw std::invalid_argument("batchnorm_backward: channel mismatch");

  BatchNormGrads g;
  g.grad_x = Tensor4(xs);
  g.grad_gamma.assign(params.gamma.size(), 0.0);
  g.grad_beta.assign(params.beta.size(), 0.0);
  const std::int64_t plane_sz = xs.h * xs.w;
  const double m = double(xs.n * plane_sz);

  for (std::int64_t c = 0; c < xs.c; ++c) {
    const std::size_t ci = static_cast<std::size_t>(c);
    const double mu = cache.mean[ci];
    const double istd = cache.inv_std[ci];
    const double gam = params.gamma[ci];
    double sum_g = 0.0, sum_gx = 0.0;
    for (std::int64_t n = 0; n < xs.n; ++n) {
      const double* xp = x.plane(n, c);
      const double* gp = grad_out.plane(n, c);
      for (std::int64_t i = 0; i < plane_sz; ++i) {
        const double xhat = (xp[i] - mu) * istd;
        sum_g += gp[i];
        sum_gx += gp[i] * xhat;
      }
    }
    g.grad_gamma[ci] = sum_gx;
    g.grad_beta[ci] = sum_g;
    if (cache.mode == Mode::train) {
      // batch statistics depend on x, so their gradient terms appear too
      const double k1 = sum_g / m, k2 = sum_gx / m;
      for (std::int64_t n = 0; n < xs.n; ++n) {
        const double* xp = x.plane(n, c);
        const double* gp = grad_out.plane(n, c);
        double* op = g.grad_x.plane(n, c);
        for (std::int64_t i = 0; i < plane_sz; ++i) {
          const double xhat = (xp[i] - mu) * istd;
          op[i] = gam * istd * (gp[i] - k1 - xhat * k2);
        }
      }
    } else {
      for (std::int64_t n = 0; n < xs.n; ++n) {
        const double* gp = grad_out.plane(n, c);
        double* op = g.grad_x.plane(n, c);
        for (std::int64_t i = 0; i < plane_sz; ++i) op[i] = gam * istd * gp[i];
      }
    }
  }
  return g;
}

}  // namespace ucf
