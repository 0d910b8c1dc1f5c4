#pragma once

#include <cmath>
#include <cstdint>
#include <map>
#include <stdexcept>
#include <utility>
#include <vector>

#include "ucf/pooling.hpp"
#include "ucf/rng.hpp"
#include "ucf/tensor.hpp"

namespace ucf {

using MaskTensor = Tensor4;

inline bool is_binary_mask(const MaskTensor& m) {
  for (std::int64_t i = 0; i < m.size(); ++i)
    if (m.data()[i] != 0.0 && m.data()[i] != 1.0) return false;
  return true;
}

enum class MaskKind { bernoulli, uniform01, custom };

/// Mask source. bernoulli draws 0/1 with retain probability `rate`;
/// uniform01 draws generalized masks in [0,1); custom cycles through a
/// user-supplied table in flat element order.
struct MaskGenerator {
  MaskKind kind = MaskKind::bernoulli;
  double rate = 0.5;
  std::vector<double> table;

  MaskTensor generate(const Shape4& shape, RngStream& rng) const {
    switch (kind) {
      case MaskKind::bernoulli:
        return Tensor4::bernoulli(shape, rate, rng);
      case MaskKind::uniform01: {
        Tensor4 m(shape);
        for (std::int64_t i = 0; i < m.size(); ++i)
          m.data()[i] = rng.next_double();
        return m;
      }
      case MaskKind::custom: {
        if (table.empty())
          throw std::invalid_argument("MaskGenerator: custom table is empty");
        Tensor4 m(shape);
        for (std::int64_t i = 0; i < m.size(); ++i)
          m.data()[i] = table[std::size_t(i) % table.size()];
        return m;
      }
    }
    throw std::logic_error("MaskGenerator: bad kind");
  }
};

/// Where the mask multiplies relative to the activation. pre_activation is
/// the uncertain-feature construction g(M * f); post_activation is classic
/// dropout M * g(f). For binary masks and any g with g(0) = 0 the two
/// coincide, which commutation_check verifies directly.
enum class DropoutPlacement { pre_activation, post_activation };

inline Tensor4 rdropout_forward(const Tensor4& f, const MaskTensor& mask,
                                const Activation& g,
                                DropoutPlacement placement, Mode mode,
                                double p) {
  if (!(p >= 0.0 && p <= 1.0))
    throw std::invalid_argument("rdropout_forward: p must be in [0,1]");
  if (mode == Mode::eval) return scale(apply(g, f), p);
  require_same_shape(f, mask, "rdropout_forward");
  if (placement == DropoutPlacement::pre_activation)
    return apply(g, mul(mask, f));
  return mul(mask, apply(g, f));
}

/// Gradient wrt f under a frozen mask.
inline Tensor4 rdropout_backward(const Tensor4& grad_out, const Tensor4& f,
                                 const MaskTensor& mask, const Activation& g,
                                 DropoutPlacement placement, Mode mode,
                                 double p) {
  Tensor4 grad(f.shape());
  if (mode == Mode::eval) {
    require_same_shape(f, grad_out, "rdropout_backward");
    for (std::int64_t i = 0; i < f.size(); ++i)
      grad.data()[i] = p * g.grad(f.data()[i]) * grad_out.data()[i];
    return grad;
  }
  require_same_shape(f, mask, "rdropout_backward");
  require_same_shape(f, grad_out, "rdropout_backward");
  if (placement == DropoutPlacement::pre_activation) {
    for (std::int64_t i = 0; i < f.size(); ++i) {
      const double m = mask.data()[i];
      grad.data()[i] = m * g.grad(m * f.data()[i]) * grad_out.data()[i];
    }
  } else {
    for (std::int64_t i = 0; i < f.size(); ++i)
      grad.data()[i] =
          mask.data()[i] * g.grad(f.data()[i]) * grad_out.data()[i];
  }
  return grad;
}

/// True when g(M * f) and M * g(f) agree elementwise. Exact equality on
/// purpose: for binary masks nothing is rounded differently between the
/// two orders.
template <typename G>
bool commutation_check(G&& g, const Tensor4& f, const MaskTensor& mask) {
  require_same_shape(f, mask, "commutation_check");
  if (!is_binary_mask(mask))
    throw std::invalid_argument("commutation_check: mask must be binary");
  for (std::int64_t i = 0; i < f.size(); ++i) {
    const double lhs = g(mask.data()[i] * f.data()[i]);
    const double rhs = mask.data()[i] * g(f.data()[i]);
    if (lhs != rhs) return false;
  }
  return true;
}

/// Distribution of max-pooling over a masked window of n distinct values
/// a_1 < ... < a_n (non-negative), each retained independently with
/// probability p. Index 0 is the all-dropped outcome (pooled value 0),
/// index i the outcome a_i:
///   P(0) = q^n,  P(a_i) = p q^(n-i),  q = 1 - p.
inline std::vector<double> pooled_activation_distribution(std::int64_t n,
                                                          double p) {
  if (n < 1)
    throw std::invalid_argument("pooled_activation_distribution: n < 1");
  if (!(p >= 0.0 && p <= 1.0))
    throw std::invalid_argument("pooled_activation_distribution: bad p");
  const double q = 1.0 - p;
  std::vector<double> probs(std::size_t(n) + 1, 0.0);
  probs[0] = std::pow(q, double(n));
  for (std::int64_t i = 1; i <= n; ++i)
    probs[std::size_t(i)] = p * std::pow(q, double(n - i));
  return probs;
}

/// Overload taking the window itself; validates it is sorted ascending and
/// non-negative before handing back the index law above.
inline std::vector<double> pooled_activation_distribution(
    const std::vector<double>& sorted_window, double p) {
  if (sorted_window.empty())
    throw std::invalid_argument("pooled_activation_distribution: empty window");
  for (std::size_t i = 0; i < sorted_window.size(); ++i) {
    if (sorted_window[i] < 0.0)
      throw std::invalid_argument(
          "pooled_activation_distribution: negative activation");
    if (i > 0 && sorted_window[i] < sorted_window[i - 1])
      throw std::invalid_argument(
          "pooled_activation_distribution: window not sorted");
  }
  return pooled_activation_distribution(std::int64_t(sorted_window.size()), p);
}

/// Brute-force oracle: walks all 2^n masks of a strictly ascending window
/// and accumulates the probability of each pooled outcome. Same layout as
/// the closed form; the highest retained index wins the max.
inline std::vector<double> enumerate_pooled_distribution(std::int64_t n,
                                                         double p) {
  if (n < 1 || n > 24)
    throw std::invalid_argument("enumerate_pooled_distribution: need 1<=n<=24");
  if (!(p >= 0.0 && p <= 1.0))
    throw std::invalid_argument("enumerate_pooled_distribution: bad p");
  const double q = 1.0 - p;
  std::vector<double> probs(std::size_t(n) + 1, 0.0);
  for (std::uint64_t mask = 0; mask < (std::uint64_t(1) << n); ++mask) {
    double prob = 1.0;
    std::int64_t winner = 0;
    for (std::int64_t i = 0; i < n; ++i) {
      if (mask & (std::uint64_t(1) << i)) {
        prob *= p;
        winner = i + 1;  // ascending values: the last retained index wins
      } else {
        prob *= q;
      }
    }
    probs[std::size_t(winner)] += prob;
  }
  return probs;
}

/// Value-level distribution for an arbitrary non-negative window; ties and
/// unsorted input are fine because outcomes are merged by pooled value.
inline std::vector<std::pair<double, double>> pooled_value_distribution(
    const std::vector<double>& window, double p) {
  const std::int64_t n = std::int64_t(window.size());
  if (n < 1 || n > 24)
    throw std::invalid_argument("pooled_value_distribution: need 1<=n<=24");
  if (!(p >= 0.0 && p <= 1.0))
    throw std::invalid_argument("pooled_value_distribution: bad p");
  for (double v : window)
    if (v < 0.0)
      throw std::invalid_argument("pooled_value_distribution: negative value");
  const double q = 1.0 - p;
  std::map<double, double> merged;
  for (std::uint64_t mask = 0; mask < (std::uint64_t(1) << n); ++mask) {
    double prob = 1.0;
    double pooled = 0.0;
    for (std::int64_t i = 0; i < n; ++i) {
      if (mask & (std::uint64_t(1) << i)) {
        prob *= p;
        pooled = std::max(pooled, window[std::size_t(i)]);
      } else {
        prob *= q;
      }
    }
    merged[pooled] += prob;
  }
  return {merged.begin(), merged.end()};
}

/// One stochastic pooled draw: mask the window, take the max of the masked
/// values (dropped entries contribute their zero).
inline double sample_pooled_window(const std::vector<double>& window, double p,
                                   RngStream& rng) {
  if (window.empty())
    throw std::invalid_argument("sample_pooled_window: empty window");
  bool any = false;
  double best = 0.0;
  for (double v : window) {
    const double masked = rng.next_bernoulli(p) ? v : 0.0;
    if (!any || masked > best) best = masked;
    any = true;
  }
  return best;
}

struct RdropoutPoolResult {
  Tensor4 output;
  MaskTensor mask;        // empty in eval mode
  MaxPoolResult pool;     // cache for routing gradients
};

/// Masked max pooling: training draws a fresh Bernoulli mask and pools the
/// masked map; eval pools the clean map and scales by p.
inline RdropoutPoolResult rdropout_pool_forward(const Tensor4& x,
                                                std::int64_t window, double p,
                                                RngStream& rng, Mode mode) {
  RdropoutPoolResult res;
  if (mode == Mode::eval) {
    res.pool = maxpool_forward(x, window);
    res.output = scale(res.pool.output, p);
    return res;
  }
  res.mask = Tensor4::bernoulli(x.shape(), p, rng);
  res.pool = maxpool_forward(mul(res.mask, x), window);
  res.output = res.pool.output;
  return res;
}

}  // namespace ucf
