#pragma once

#include <cstddef>
#include <span>
#include <string>
#include <vector>

namespace progrnet {

using Shape = std::vector<std::size_t>;

std::size_t numel(const Shape& shape);
std::string shape_to_string(const Shape& shape);

/// Dense row-major float32 array. Construction rejects a data length that
/// disagrees with the shape and any non-finite element, so a Tensor that
/// exists is always valid. Immutable after construction.
class Tensor {
 public:
  Tensor() = default;
  Tensor(Shape shape, std::vector<float> data);

  static Tensor zeros(Shape shape);

  const Shape& shape() const noexcept { return shape_; }
  std::span<const float> data() const noexcept { return data_; }
  std::size_t size() const noexcept { return data_.size(); }
  float operator[](std::size_t i) const noexcept { return data_[i]; }

  friend bool operator==(const Tensor&, const Tensor&) = default;

 private:
  Shape shape_;
  std::vector<float> data_;
};

}  // namespace progrnet
