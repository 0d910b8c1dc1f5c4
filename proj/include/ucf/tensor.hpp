#pragma once

#include <cassert>
#include <cmath>
#include <cstdint>
#include <limits>
#include <stdexcept>
#include <string>
#include <vector>

#include "ucf/rng.hpp"

namespace ucf {

enum class Mode { train, eval };

struct Shape4 {
  std::int64_t n = 0;
  std::int64_t c = 0;
  std::int64_t h = 0;
  std::int64_t w = 0;

  bool operator==(const Shape4&) const = default;

  std::int64_t count() const {
    const std::int64_t dims[4] = {n, c, h, w};
    std::int64_t total = 1;
    for (std::int64_t d : dims) {
      if (d < 0) throw std::invalid_argument("Shape4: negative dimension");
      if (d != 0 && total > std::numeric_limits<std::int64_t>::max() / d)
        throw std::overflow_error("Shape4: element count overflows int64");
      total *= d;
    }
    return total;
  }

  std::string str() const {
    return "(" + std::to_string(n) + "," + std::to_string(c) + "," +
           std::to_string(h) + "," + std::to_string(w) + ")";
  }
};

/// Dense NCHW tensor of doubles, row-major with w fastest.
class Tensor4 {
public:
  Tensor4() = default;

  explicit Tensor4(Shape4 shape, double fill = 0.0)
      : shape_(shape), data_(static_cast<std::size_t>(shape.count()), fill) {}

  static Tensor4 zeros(Shape4 shape) { return Tensor4(shape, 0.0); }

  static Tensor4 full(Shape4 shape, double value) {
    return Tensor4(shape, value);
  }

  static Tensor4 uniform(Shape4 shape, double lo, double hi, RngStream& rng) {
    Tensor4 t(shape);
    for (double& v : t.data_) v = rng.next_uniform(lo, hi);
    return t;
  }

  /// 0/1 tensor, each element 1 with probability p.
  static Tensor4 bernoulli(Shape4 shape, double p, RngStream& rng) {
    Tensor4 t(shape);
    for (double& v : t.data_) v = rng.next_bernoulli(p) ? 1.0 : 0.0;
    return t;
  }

  const Shape4& shape() const { return shape_; }
  std::int64_t size() const { return static_cast<std::int64_t>(data_.size()); }
  bool empty() const { return data_.empty(); }

  double* data() { return data_.data(); }
  const double* data() const { return data_.data(); }
  std::vector<double>& storage() { return data_; }
  const std::vector<double>& storage() const { return data_; }

  std::int64_t index(std::int64_t n, std::int64_t c, std::int64_t h,
                     std::int64_t w) const {
    assert(n >= 0 && n < shape_.n && c >= 0 && c < shape_.c);
    assert(h >= 0 && h < shape_.h && w >= 0 && w < shape_.w);
    return ((n * shape_.c + c) * shape_.h + h) * shape_.w + w;
  }

  double& at(std::int64_t n, std::int64_t c, std::int64_t h, std::int64_t w) {
    return data_[static_cast<std::size_t>(index(n, c, h, w))];
  }
  double at(std::int64_t n, std::int64_t c, std::int64_t h,
            std::int64_t w) const {
    return data_[static_cast<std::size_t>(index(n, c, h, w))];
  }

  double* plane(std::int64_t n, std::int64_t c) {
    return data_.data() + (n * shape_.c + c) * shape_.h * shape_.w;
  }
  const double* plane(std::int64_t n, std::int64_t c) const {
    return data_.data() + (n * shape_.c + c) * shape_.h * shape_.w;
  }

  void fill(double v) {
    for (double& x : data_) x = v;
  }

  bool operator==(const Tensor4& o) const {
    return shape_ == o.shape_ && data_ == o.data_;
  }

private:
  Shape4 shape_;
  std::vector<double> data_;
};

inline void require_same_shape(const Tensor4& a, const Tensor4& b,
                               const char* what) {
  if (!(a.shape() == b.shape()))
    throw std::invalid_argument(std::string(what) + ": shape mismatch " +
                                a.shape().str() + " vs " + b.shape().str());
}

inline Tensor4 add(const Tensor4& a, const Tensor4& b) {
  require_same_shape(a, b, "add");
  Tensor4 out = a;
  for (std::int64_t i = 0; i < out.size(); ++i) out.data()[i] += b.data()[i];
  return out;
}

inline Tensor4 sub(const Tensor4& a, const Tensor4& b) {
  require_same_shape(a, b, "sub");
  Tensor4 out = a;
  for (std::int64_t i = 0; i < out.size(); ++i) out.data()[i] -= b.data()[i];
  return out;
}

/// Elementwise (Hadamard) product.
inline Tensor4 mul(const Tensor4& a, const Tensor4& b) {
  require_same_shape(a, b, "mul");
  Tensor4 out = a;
  for (std::int64_t i = 0; i < out.size(); ++i) out.data()[i] *= b.data()[i];
  return out;
}

inline Tensor4 scale(const Tensor4& a, double s) {
  Tensor4 out = a;
  for (std::int64_t i = 0; i < out.size(); ++i) out.data()[i] *= s;
  return out;
}

inline Tensor4 max_with_scalar(const Tensor4& a, double s) {
  Tensor4 out = a;
  for (std::int64_t i = 0; i < out.size(); ++i)
    out.data()[i] = out.data()[i] > s ? out.data()[i] : s;
  return out;
}

enum class ActKind { relu, tanh, lrelu };

/// Pointwise activation with g(0) = 0; that property is what makes a
/// binary multiplicative mask inside or outside of g equivalent.
struct Activation {
  ActKind kind = ActKind::relu;
  double alpha = 0.01;  // lrelu negative slope

  double operator()(double x) const {
    switch (kind) {
      case ActKind::relu:
        return x > 0.0 ? x : 0.0;
      case ActKind::tanh:
        return std::tanh(x);
      case ActKind::lrelu:
        return x > 0.0 ? x : alpha * x;
    }
    return 0.0;
  }

  /// Derivative wrt the pre-activation; subgradient 0 is used at the
  /// relu/lrelu kink so masked-to-zero inputs pass no gradient for relu.
  double grad(double x) const {
    switch (kind) {
      case ActKind::relu:
        return x > 0.0 ? 1.0 : 0.0;
      case ActKind::tanh: {
        const double t = std::tanh(x);
        return 1.0 - t * t;
      }
      case ActKind::lrelu:
        return x > 0.0 ? 1.0 : alpha;
    }
    return 0.0;
  }
};

inline Tensor4 apply(const Activation& g, const Tensor4& x) {
  Tensor4 out = x;
  for (std::int64_t i = 0; i < out.size(); ++i) out.data()[i] = g(out.data()[i]);
  return out;
}

inline Tensor4 relu(const Tensor4& x) {
  return apply(Activation{ActKind::relu}, x);
}

inline Tensor4 tanh(const Tensor4& x) {
  return apply(Activation{ActKind::tanh}, x);
}

inline Tensor4 lrelu(const Tensor4& x, double alpha = 0.01) {
  return apply(Activation{ActKind::lrelu, alpha}, x);
}

}  // namespace ucf
