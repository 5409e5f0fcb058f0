#pragma once

#include <cstddef>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

namespace dpnpose {

using Shape = std::vector<int>;

/// Raised for any violated shape precondition. The message names the axis
/// or dimension that disagreed.
class ShapeError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

std::string shape_str(const Shape& shape);
std::size_t shape_numel(const Shape& shape);

/// Dense row-major array. Activations use (batch, channels, height, width).
/// A rank-0 shape is a scalar holding one element.
template <typename T>
class BasicTensor {
 public:
  using value_type = T;

  BasicTensor() = default;
  explicit BasicTensor(Shape shape, T fill = T(0));
  BasicTensor(Shape shape, std::vector<T> data);

  const Shape& shape() const { return shape_; }
  int rank() const { return static_cast<int>(shape_.size()); }
  int dim(int axis) const;
  std::size_t size() const { return data_.size(); }
  bool empty() const { return data_.empty(); }

  std::span<T> data() { return data_; }
  std::span<const T> data() const { return data_; }
  T* ptr() { return data_.data(); }
  const T* ptr() const { return data_.data(); }

  T& operator[](std::size_t i) { return data_[i]; }
  const T& operator[](std::size_t i) const { return data_[i]; }

  // NCHW element access; requires rank 4.
  T& at(int n, int c, int h, int w);
  const T& at(int n, int c, int h, int w) const;

  T item() const;
  void fill(T v);

  template <typename U>
  BasicTensor<U> cast() const {
    return BasicTensor<U>(shape_, std::vector<U>(data_.begin(), data_.end()));
  }

  bool operator==(const BasicTensor& other) const = default;

 private:
  std::size_t offset(int n, int c, int h, int w) const;

  Shape shape_;
  std::vector<T> data_;
};

using Tensor = BasicTensor<float>;
using TensorD = BasicTensor<double>;

/// Byte-level equality, distinguishing -0.0 from 0.0 and comparing NaN payloads.
template <typename T>
bool bitwise_equal(const BasicTensor<T>& a, const BasicTensor<T>& b);

template <typename T>
bool all_finite(const BasicTensor<T>& t);

extern template class BasicTensor<float>;
extern template class BasicTensor<double>;

}  // namespace dpnpose
