#pragma once

#include <cstdint>
#include <stdexcept>
#include <string>
#include <vector>

namespace uunet {

using Scalar = double;

// Every tensor in this library is NCHW. Vectors ride along as (n, m, 1, 1)
// and scalars as (1, 1, 1, 1), which keeps the op set small.
struct Shape {
  int n = 0;
  int c = 0;
  int h = 0;
  int w = 0;

  Shape() = default;
  Shape(int n_, int c_, int h_, int w_) : n(n_), c(c_), h(h_), w(w_) {}

  std::int64_t size() const {
    return static_cast<std::int64_t>(n) * c * h * w;
  }
  bool operator==(const Shape& o) const {
    return n == o.n && c == o.c && h == o.h && w == o.w;
  }
  bool operator!=(const Shape& o) const { return !(*this == o); }

  std::string str() const {
    return "(" + std::to_string(n) + "," + std::to_string(c) + "," +
           std::to_string(h) + "," + std::to_string(w) + ")";
  }
};

class Tensor {
 public:
  Tensor() = default;
  explicit Tensor(Shape s) : shape_(s), v_(static_cast<size_t>(s.size()), 0.0) {
    if (s.n < 0 || s.c < 0 || s.h < 0 || s.w < 0) {
      throw std::invalid_argument("Tensor: negative dimension " + s.str());
    }
  }
  Tensor(Shape s, std::vector<Scalar> data) : shape_(s), v_(std::move(data)) {
    if (static_cast<std::int64_t>(v_.size()) != s.size()) {
      throw std::invalid_argument("Tensor: data size does not match shape " +
                                  s.str());
    }
  }

  const Shape& shape() const { return shape_; }
  std::int64_t size() const { return static_cast<std::int64_t>(v_.size()); }
  bool empty() const { return v_.empty(); }

  Scalar* data() { return v_.data(); }
  const Scalar* data() const { return v_.data(); }
  std::vector<Scalar>& vec() { return v_; }
  const std::vector<Scalar>& vec() const { return v_; }

  Scalar& at(int n, int c, int h, int w) {
    return v_[idx(n, c, h, w)];
  }
  Scalar at(int n, int c, int h, int w) const {
    return v_[idx(n, c, h, w)];
  }
  Scalar& operator[](std::int64_t i) { return v_[static_cast<size_t>(i)]; }
  Scalar operator[](std::int64_t i) const { return v_[static_cast<size_t>(i)]; }

  void fill(Scalar x) { std::fill(v_.begin(), v_.end(), x); }

  // Scalar convenience for (1,1,1,1) tensors.
  Scalar item() const {
    if (size() != 1) {
      throw std::logic_error("Tensor::item on non-scalar " + shape_.str());
    }
    return v_[0];
  }

  bool all_finite() const;

  static Tensor scalar(Scalar x) {
    Tensor t(Shape(1, 1, 1, 1));
    t[0] = x;
    return t;
  }
  static Tensor zeros(Shape s) { return Tensor(s); }
  static Tensor full(Shape s, Scalar x) {
    Tensor t(s);
    t.fill(x);
    return t;
  }

 private:
  std::int64_t idx(int n, int c, int h, int w) const {
    return ((static_cast<std::int64_t>(n) * shape_.c + c) * shape_.h + h) *
               shape_.w +
           w;
  }

  Shape shape_;
  std::vector<Scalar> v_;
};

inline Tensor zeros_like(const Tensor& t) { return Tensor(t.shape()); }

}  // namespace uunet
