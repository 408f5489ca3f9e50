#include "evsal/tensor.hpp"

#include <algorithm>
#include <cmath>
#include <functional>
#include <numeric>

#include "evsal/error.hpp"

namespace evsal {

std::size_t shape_numel(const Shape& shape) {
  return std::accumulate(shape.begin(), shape.end(), std::size_t{1}, std::multiplies<>());
}

std::string shape_string(const Shape& shape) {
  std::string s = "[";
  for (std::size_t i = 0; i < shape.size(); ++i) {
    if (i) s += ",";
    s += std::to_string(shape[i]);
  }
  return s + "]";
}

Tensor::Tensor(Shape shape, double fill)
    : shape_(std::move(shape)), data_(shape_numel(shape_), fill) {}

Tensor::Tensor(Shape shape, std::vector<double> data)
    : shape_(std::move(shape)), data_(std::move(data)) {
  if (data_.size() != shape_numel(shape_)) {
    throw Error(ErrorKind::ShapeMismatch, "data length " + std::to_string(data_.size()) +
                                              " does not match shape " + shape_string(shape_));
  }
}

std::size_t Tensor::flat_index(std::initializer_list<std::size_t> index) const {
  if (index.size() != shape_.size()) {
    throw Error(ErrorKind::ShapeMismatch, "index rank differs from tensor rank");
  }
  std::size_t flat = 0;
  std::size_t axis = 0;
  for (std::size_t i : index) {
    if (i >= shape_[axis]) throw Error(ErrorKind::OutOfBounds, "tensor index", axis);
    flat = flat * shape_[axis] + i;
    ++axis;
  }
  return flat;
}

double& Tensor::at(std::initializer_list<std::size_t> index) { return data_[flat_index(index)]; }
double Tensor::at(std::initializer_list<std::size_t> index) const { return data_[flat_index(index)]; }

double Tensor::item() const {
  if (data_.size() != 1) throw Error(ErrorKind::NotScalarLoss, "tensor is not a scalar");
  return data_[0];
}

Tensor Tensor::reshaped(Shape shape) const& {
  Tensor copy = *this;
  return std::move(copy).reshaped(std::move(shape));
}

Tensor Tensor::reshaped(Shape shape) && {
  if (shape_numel(shape) != data_.size()) {
    throw Error(ErrorKind::ShapeMismatch,
                "cannot reshape " + shape_string(shape_) + " to " + shape_string(shape));
  }
  shape_ = std::move(shape);
  return std::move(*this);
}

void Tensor::fill(double v) { std::fill(data_.begin(), data_.end(), v); }

bool Tensor::all_finite() const {
  return std::all_of(data_.begin(), data_.end(), [](double v) { return std::isfinite(v); });
}

}  // namespace evsal
