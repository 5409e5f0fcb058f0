#include "dpnpose/tensor.hpp"

#include <cmath>
#include <cstring>
#include <sstream>

namespace dpnpose {

std::string shape_str(const Shape& shape) {
  std::ostringstream os;
  os << '[';
  for (std::size_t i = 0; i < shape.size(); ++i) {
    if (i) os << ',';
    os << shape[i];
  }
  os << ']';
  return os.str();
}

std::size_t shape_numel(const Shape& shape) {
  std::size_t n = 1;
  for (std::size_t i = 0; i < shape.size(); ++i) {
    if (shape[i] <= 0) {
      throw ShapeError("dimension " + std::to_string(i) + " of shape " + shape_str(shape) +
                       " is not positive");
    }
    n *= static_cast<std::size_t>(shape[i]);
  }
  return n;
}

template <typename T>
BasicTensor<T>::BasicTensor(Shape shape, T fill)
    : shape_(std::move(shape)), data_(shape_numel(shape_), fill) {}

template <typename T>
BasicTensor<T>::BasicTensor(Shape shape, std::vector<T> data)
    : shape_(std::move(shape)), data_(std::move(data)) {
  if (shape_numel(shape_) != data_.size()) {
    throw ShapeError("data length " + std::to_string(data_.size()) + " does not match shape " +
                     shape_str(shape_));
  }
}

template <typename T>
int BasicTensor<T>::dim(int axis) const {
  if (axis < 0 || axis >= rank()) {
    throw ShapeError("axis " + std::to_string(axis) + " out of range for shape " +
                     shape_str(shape_));
  }
  return shape_[axis];
}

template <typename T>
std::size_t BasicTensor<T>::offset(int n, int c, int h, int w) const {
  return ((static_cast<std::size_t>(n) * shape_[1] + c) * shape_[2] + h) * shape_[3] + w;
}

template <typename T>
T& BasicTensor<T>::at(int n, int c, int h, int w) {
  return data_[offset(n, c, h, w)];
}

template <typename T>
const T& BasicTensor<T>::at(int n, int c, int h, int w) const {
  return data_[offset(n, c, h, w)];
}

template <typename T>
T BasicTensor<T>::item() const {
  if (data_.size() != 1) {
    throw ShapeError("item() needs exactly one element, shape is " + shape_str(shape_));
  }
  return data_[0];
}

template <typename T>
void BasicTensor<T>::fill(T v) {
  std::fill(data_.begin(), data_.end(), v);
}

template <typename T>
bool bitwise_equal(const BasicTensor<T>& a, const BasicTensor<T>& b) {
  return a.shape() == b.shape() &&
         std::memcmp(a.ptr(), b.ptr(), a.size() * sizeof(T)) == 0;
}

template <typename T>
bool all_finite(const BasicTensor<T>& t) {
  for (T v : t.data()) {
    if (!std::isfinite(v)) return false;
  }
  return true;
}

template class BasicTensor<float>;
template class BasicTensor<double>;
template bool bitwise_equal(const BasicTensor<float>&, const BasicTensor<float>&);
template bool bitwise_equal(const BasicTensor<double>&, const BasicTensor<double>&);
template bool all_finite(const BasicTensor<float>&);
template bool all_finite(const BasicTensor<double>&);

}  // namespace dpnpose
