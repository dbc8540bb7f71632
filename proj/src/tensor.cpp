#include "progrnet/tensor.hpp"

#include <cmath>

#include "progrnet/error.hpp"

namespace progrnet {

std::size_t numel(const Shape& shape) {
  std::size_t n = 1;
  for (auto d : shape) n *= d;
  return shape.empty() ? 0 : n;
}

std::string shape_to_string(const Shape& shape) {
  std::string out = "[";
  for (std::size_t i = 0; i < shape.size(); ++i) {
    if (i) out += ",";
    out += std::to_string(shape[i]);
  }
  return out + "]";
}

Tensor::Tensor(Shape shape, std::vector<float> data) : shape_(std::move(shape)), data_(std::move(data)) {
  for (auto d : shape_) {
    if (d == 0) throw Error(Errc::shape, "tensor shape " + shape_to_string(shape_) + " has a zero dimension");
  }
  if (data_.size() != numel(shape_)) {
    throw Error(Errc::shape, "tensor shape " + shape_to_string(shape_) + " needs " + std::to_string(numel(shape_)) +
                                 " elements, got " + std::to_string(data_.size()));
  }
  for (std::size_t i = 0; i < data_.size(); ++i) {
    if (!std::isfinite(data_[i])) {
      throw Error(Errc::invalid_argument, "tensor element " + std::to_string(i) + " is not finite");
    }
  }
}

Tensor Tensor::zeros(Shape shape) {
  auto n = numel(shape);
  return Tensor(std::move(shape), std::vector<float>(n, 0.0f));
}

}  // namespace progrnet
