#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <functional>
#include <numeric>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

namespace avil::nn {

/// Raised when tensor shapes do not line up for an operation.
class DimensionError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Raised when an operation produces NaN or Inf.
class NumericError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Raised when an input lies outside an operation's domain (e.g. non-binary BCE targets).
class DomainError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

using Shape = std::vector<int>;

inline std::size_t shape_size(const Shape& shape) {
  return std::accumulate(shape.begin(), shape.end(), std::size_t{1},
                         [](std::size_t acc, int d) { return acc * static_cast<std::size_t>(d); });
}

inline std::string shape_string(const Shape& shape) {
  std::string out = "[";
  for (std::size_t i = 0; i < shape.size(); ++i) {
    if (i) out += "x";
    out += std::to_string(shape[i]);
  }
  return out + "]";
}

/// Dense row-major array. Scalar type is float for training and double for
/// gradient verification.
template <typename T>
class BasicTensor {
 public:
  using value_type = T;

  BasicTensor() = default;

  explicit BasicTensor(Shape shape, T fill = T{0}) : shape_(std::move(shape)) {
    validate_shape();
    data_.assign(shape_size(shape_), fill);
  }

  BasicTensor(Shape shape, std::vector<T> data) : shape_(std::move(shape)), data_(std::move(data)) {
    validate_shape();
    if (data_.size() != shape_size(shape_)) {
      throw DimensionError("tensor data length " + std::to_string(data_.size()) +
                           " does not match shape " + shape_string(shape_));
    }
  }

  const Shape& shape() const { return shape_; }
  std::size_t rank() const { return shape_.size(); }
  int dim(std::size_t axis) const { return shape_.at(axis); }
  std::size_t size() const { return data_.size(); }
  bool empty() const { return data_.empty(); }

  std::span<T> data() { return data_; }
  std::span<const T> data() const { return data_; }
  std::vector<T>& storage() { return data_; }
  const std::vector<T>& storage() const { return data_; }

  T& operator[](std::size_t i) { return data_[i]; }
  const T& operator[](std::size_t i) const { return data_[i]; }

  // Rank-3 (C, H, W) accessors.
  T& at(int c, int i, int j) { return data_[(static_cast<std::size_t>(c) * shape_[1] + i) * shape_[2] + j]; }
  const T& at(int c, int i, int j) const {
    return data_[(static_cast<std::size_t>(c) * shape_[1] + i) * shape_[2] + j];
  }

  void fill(T value) { std::fill(data_.begin(), data_.end(), value); }

  BasicTensor reshaped(Shape shape) const {
    if (shape_size(shape) != data_.size()) {
      throw DimensionError("cannot reshape " + shape_string(shape_) + " to " + shape_string(shape));
    }
    return BasicTensor(std::move(shape), data_);
  }

  template <typename U>
  BasicTensor<U> cast() const {
    std::vector<U> out(data_.size());
    std::transform(data_.begin(), data_.end(), out.begin(), [](T v) { return static_cast<U>(v); });
    return BasicTensor<U>(shape_, std::move(out));
  }

  bool all_finite() const {
    return std::all_of(data_.begin(), data_.end(), [](T v) { return std::isfinite(v); });
  }

  friend bool operator==(const BasicTensor& a, const BasicTensor& b) {
    return a.shape_ == b.shape_ && a.data_ == b.data_;
  }

 private:
  void validate_shape() const {
    for (int d : shape_) {
      if (d <= 0) throw DimensionError("tensor dimensions must be positive, got " + shape_string(shape_));
    }
  }

  Shape shape_;
  std::vector<T> data_;
};

using Tensor = BasicTensor<float>;
using Tensor64 = BasicTensor<double>;

/// Splits `t` along `axis` into pieces with the given extents (inverse of concat).
template <typename T>
std::vector<BasicTensor<T>> split(const BasicTensor<T>& t, std::size_t axis, const std::vector<int>& extents) {
  if (axis >= t.rank()) throw DimensionError("split axis out of range");
  if (std::accumulate(extents.begin(), extents.end(), 0) != t.dim(axis)) {
    throw DimensionError("split extents do not sum to axis length");
  }
  std::size_t outer = 1, inner = 1;
  for (std::size_t a = 0; a < axis; ++a) outer *= static_cast<std::size_t>(t.dim(a));
  for (std::size_t a = axis + 1; a < t.rank(); ++a) inner *= static_cast<std::size_t>(t.dim(a));
  std::vector<BasicTensor<T>> out;
  std::size_t offset = 0;
  for (int extent : extents) {
    Shape s = t.shape();
    s[axis] = extent;
    BasicTensor<T> piece(s);
    const std::size_t block = static_cast<std::size_t>(extent) * inner;
    for (std::size_t o = 0; o < outer; ++o) {
      auto src = t.data().begin() + static_cast<std::ptrdiff_t>(o * t.dim(axis) * inner + offset);
      std::copy(src, src + static_cast<std::ptrdiff_t>(block), piece.data().begin() + static_cast<std::ptrdiff_t>(o * block));
    }
    offset += block;
    out.push_back(std::move(piece));
  }
  return out;
}

}  // namespace avil::nn
