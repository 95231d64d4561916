#pragma once

#include <array>
#include <cstdint>
#include <stdexcept>
#include <string>
#include <vector>

namespace udr {

// Shape mismatches (wrong channel count, indivisible dims, ...).
struct ShapeError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// Invalid argument values (non-positive stride, eps <= 0, ...).
struct ArgumentError : std::invalid_argument {
  using std::invalid_argument::invalid_argument;
};

// Rank-4 shape, laid out batch / channels / height / width.
struct Shape4 {
  std::int64_t b = 0;
  std::int64_t c = 0;
  std::int64_t h = 0;
  std::int64_t w = 0;

  std::int64_t numel() const { return b * c * h * w; }
  bool operator==(const Shape4&) const = default;
  std::string str() const {
    return "(" + std::to_string(b) + "," + std::to_string(c) + "," +
           std::to_string(h) + "," + std::to_string(w) + ")";
  }
};

// Dense row-major (B,C,H,W) tensor. Plain value type: copy copies data.
template <typename T>
class Tensor {
 public:
  Tensor() = default;
  explicit Tensor(Shape4 s) : shape_(s), data_(static_cast<std::size_t>(s.numel()), T(0)) {}
  Tensor(Shape4 s, std::vector<T> data) : shape_(s), data_(std::move(data)) {
    if (static_cast<std::int64_t>(data_.size()) != shape_.numel()) {
      throw ShapeError("tensor data length " + std::to_string(data_.size()) +
                       " does not match shape " + shape_.str());
    }
  }

  static Tensor full(Shape4 s, T v) {
    Tensor t(s);
    std::fill(t.data_.begin(), t.data_.end(), v);
    return t;
  }

  const Shape4& shape() const { return shape_; }
  std::int64_t numel() const { return shape_.numel(); }
  bool empty() const { return data_.empty(); }

  T* data() { return data_.data(); }
  const T* data() const { return data_.data(); }
  std::vector<T>& vec() { return data_; }
  const std::vector<T>& vec() const { return data_; }

  std::int64_t index(std::int64_t b, std::int64_t c, std::int64_t h, std::int64_t w) const {
    return ((b * shape_.c + c) * shape_.h + h) * shape_.w + w;
  }
  T& at(std::int64_t b, std::int64_t c, std::int64_t h, std::int64_t w) {
    return data_[static_cast<std::size_t>(index(b, c, h, w))];
  }
  const T& at(std::int64_t b, std::int64_t c, std::int64_t h, std::int64_t w) const {
    return data_[static_cast<std::size_t>(index(b, c, h, w))];
  }
  T& operator[](std::int64_t i) { return data_[static_cast<std::size_t>(i)]; }
  const T& operator[](std::int64_t i) const { return data_[static_cast<std::size_t>(i)]; }

  template <typename U>
  Tensor<U> cast() const {
    Tensor<U> out(shape_);
    for (std::size_t i = 0; i < data_.size(); ++i) out.data()[i] = static_cast<U>(data_[i]);
    return out;
  }

 private:
  Shape4 shape_;
  std::vector<T> data_;
};

// Split-plane complex tensor, same layout as Tensor.
template <typename T>
struct ComplexTensor {
  Shape4 shape;
  std::vector<T> re;
  std::vector<T> im;

  ComplexTensor() = default;
  explicit ComplexTensor(Shape4 s)
      : shape(s),
        re(static_cast<std::size_t>(s.numel()), T(0)),
        im(static_cast<std::size_t>(s.numel()), T(0)) {}

  std::int64_t numel() const { return shape.numel(); }
};

inline void check_same_shape(const Shape4& a, const Shape4& b, const char* what) {
  if (!(a == b)) {
    throw ShapeError(std::string(what) + ": shape mismatch " + a.str() + " vs " + b.str());
  }
}

}  // namespace udr
