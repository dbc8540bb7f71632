#pragma once

#include <optional>
#include <string>
#include <utility>
#include <variant>
#include <vector>

#include "json.hpp"
#include "progrnet/tensor.hpp"

namespace progrnet {

enum class Activation { none, relu, softmax };

struct Dense {
  std::size_t in_features = 0;
  std::size_t out_features = 0;
  Activation activation = Activation::none;
};

/// Weights are stored (out_channels, in_channels, kernel_h, kernel_w).
struct Conv2D {
  std::size_t in_channels = 0;
  std::size_t out_channels = 0;
  std::size_t kernel_h = 0;
  std::size_t kernel_w = 0;
  std::size_t stride = 1;
  std::size_t padding = 0;
  Activation activation = Activation::none;
};

struct MaxPool2D {
  std::size_t window = 2;
  std::size_t stride = 2;
};

struct Flatten {};

using Layer = std::variant<Dense, Conv2D, MaxPool2D, Flatten>;

struct ModelSpec {
  Shape input_shape;
  std::vector<Layer> layers;
};

/// Named tensors in canonical (model layer) order: layer{i}.weight then
/// layer{i}.bias. Lookup is linear; models here have a handful of tensors.
class WeightSet {
 public:
  void insert(std::string name, Tensor tensor);
  const Tensor* find(std::string_view name) const;
  const Tensor& at(std::string_view name) const;

  std::size_t size() const noexcept { return entries_.size(); }
  auto begin() const noexcept { return entries_.begin(); }
  auto end() const noexcept { return entries_.end(); }

  friend bool operator==(const WeightSet&, const WeightSet&) = default;

 private:
  std::vector<std::pair<std::string, Tensor>> entries_;
};

struct TensorSpec {
  std::string name;
  Shape shape;
};

/// Tensors a model needs, in canonical order.
std::vector<TensorSpec> required_tensors(const ModelSpec& spec);

/// Output shape of every layer; throws Errc::shape on the first incompatible layer.
std::vector<Shape> layer_output_shapes(const ModelSpec& spec);

struct ValidationReport {
  std::optional<std::string> error;

  bool ok() const noexcept { return !error; }
};

ValidationReport validate_model(const ModelSpec& spec, const WeightSet& weights);

/// Throws Errc::shape with the report message unless validation passes.
void require_valid(const ModelSpec& spec, const WeightSet& weights);

std::string_view activation_name(Activation a);
Activation activation_from_name(std::string_view name);

nlohmann::json model_to_json(const ModelSpec& spec);
ModelSpec model_from_json(const nlohmann::json& j);

}  // namespace progrnet
