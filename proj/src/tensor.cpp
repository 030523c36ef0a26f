#include "fuit/tensor.hpp"

#include <algorithm>
#include <stdexcept>

namespace fuit::nn {

std::size_t element_count(const Shape& shape) {
  std::size_t n = 1;
  for (auto d : shape) n *= d;
  return n;
}

std::string shape_string(const Shape& shape) {
  std::string s = "[";
  for (std::size_t i = 0; i < shape.size(); ++i) {
    if (i) s += ", ";
    s += std::to_string(shape[i]);
  }
  return s + "]";
}

Tensor::Tensor(Shape shape, double fill) : shape_(std::move(shape)), data_(element_count(shape_), fill) {}

Tensor::Tensor(Shape shape, std::vector<double> data) : shape_(std::move(shape)), data_(std::move(data)) {
  if (data_.size() != element_count(shape_)) {
    throw std::invalid_argument("tensor data has " + std::to_string(data_.size()) +
                                " elements, shape " + shape_string(shape_) + " needs " +
                                std::to_string(element_count(shape_)));
  }
}

Tensor Tensor::slice(std::size_t begin, std::size_t end) const {
  if (rank() == 0 || begin > end || end > shape_[0]) throw std::out_of_range("tensor slice");
  Shape s = shape_;
  s[0] = end - begin;
  std::size_t row = stride0();
  return Tensor(std::move(s), std::vector<double>(data_.begin() + static_cast<std::ptrdiff_t>(begin * row),
                                                  data_.begin() + static_cast<std::ptrdiff_t>(end * row)));
}

Tensor Tensor::gather(std::span<const std::size_t> rows) const {
  Shape s = shape_;
  s[0] = rows.size();
  Tensor out(std::move(s));
  std::size_t row = stride0();
  for (std::size_t i = 0; i < rows.size(); ++i) {
    if (rows[i] >= shape_[0]) throw std::out_of_range("tensor gather");
    std::copy_n(data_.begin() + static_cast<std::ptrdiff_t>(rows[i] * row), row,
                out.data_.begin() + static_cast<std::ptrdiff_t>(i * row));
  }
  return out;
}

void Tensor::fill(double v) { std::fill(data_.begin(), data_.end(), v); }

void Tensor::reshape(Shape shape) {
  if (element_count(shape) != data_.size()) {
    throw std::invalid_argument("cannot reshape " + shape_string(shape_) + " to " + shape_string(shape));
  }
  shape_ = std::move(shape);
}

}  // namespace fuit::nn
