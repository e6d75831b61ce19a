// SPDX-License-Identifier: Apache-2.0
#include "fgrnn/autodiff/tensor.hpp"

#include <algorithm>
#include <sstream>

namespace fgrnn::ad {

std::string shape_string(const Shape& shape) {
  std::ostringstream out;
  out << '[';
  for (std::size_t i = 0; i < shape.size(); ++i) {
    if (i) out << ',';
    out << shape[i];
  }
  out << ']';
  return out.str();
}

std::size_t shape_numel(const Shape& shape) {
  std::size_t n = 1;
  for (auto d : shape) n *= d;
  return n;
}

namespace {
void check_shape(const Shape& shape) {
  if (shape.empty() || shape.size() > 2) {
    throw ShapeError("tensor rank must be 1 or 2, got shape " + shape_string(shape));
  }
  for (auto d : shape) {
    if (d == 0) throw ShapeError("tensor dimensions must be positive, got " + shape_string(shape));
  }
}
}  // namespace

template <typename T>
Tensor<T>::Tensor(Shape shape, T fill) : shape_(std::move(shape)) {
  check_shape(shape_);
  values_.assign(shape_numel(shape_), fill);
}

template <typename T>
Tensor<T>::Tensor(Shape shape, std::vector<T> values) : shape_(std::move(shape)), values_(std::move(values)) {
  check_shape(shape_);
  if (shape_numel(shape_) != values_.size()) {
    throw ShapeError("tensor shape " + shape_string(shape_) + " holds " + std::to_string(shape_numel(shape_)) +
                     " values, got " + std::to_string(values_.size()));
  }
}

template <typename T>
std::size_t Tensor<T>::rows() const {
  return shape_.size() == 2 ? shape_[0] : 1;
}

template <typename T>
std::size_t Tensor<T>::cols() const {
  return shape_.empty() ? 0 : shape_.back();
}

template <typename T>
T Tensor<T>::item() const {
  if (values_.size() != 1) throw ShapeError("item() on tensor of shape " + shape_string(shape_));
  return values_[0];
}

template <typename T>
void Tensor<T>::fill(T value) {
  std::fill(values_.begin(), values_.end(), value);
}

template <typename T>
Tensor<T>& Tensor<T>::operator+=(const Tensor& other) {
  if (other.size() != size()) {
    throw ShapeError("+=: " + shape_string(shape_) + " vs " + shape_string(other.shape_));
  }
  for (std::size_t i = 0; i < values_.size(); ++i) values_[i] += other.values_[i];
  return *this;
}

template <typename T>
Tensor<T> Tensor<T>::reshaped(Shape shape) const {
  return Tensor(std::move(shape), values_);
}

template class Tensor<float>;
template class Tensor<double>;

}  // namespace fgrnn::ad
