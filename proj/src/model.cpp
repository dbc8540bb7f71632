#include "progrnet/model.hpp"

#include <algorithm>

#include "progrnet/error.hpp"

namespace progrnet {

void WeightSet::insert(std::string name, Tensor tensor) {
  if (find(name)) throw Error(Errc::invalid_argument, "duplicate tensor " + name);
  entries_.emplace_back(std::move(name), std::move(tensor));
}

const Tensor* WeightSet::find(std::string_view name) const {
  auto it = std::find_if(entries_.begin(), entries_.end(), [&](const auto& e) { return e.first == name; });
  return it == entries_.end() ? nullptr : &it->second;
}

const Tensor& WeightSet::at(std::string_view name) const {
  const Tensor* t = find(name);
  if (!t) throw Error(Errc::shape, "missing tensor " + std::string(name));
  return *t;
}

namespace {

std::string layer_name(std::size_t i) { return "layer" + std::to_string(i); }

[[noreturn]] void fail(std::size_t i, const std::string& msg) {
  throw Error(Errc::shape, layer_name(i) + " " + msg);
}

Activation layer_activation(const Layer& layer) {
  if (auto* d = std::get_if<Dense>(&layer)) return d->activation;
  if (auto* c = std::get_if<Conv2D>(&layer)) return c->activation;
  return Activation::none;
}

}  // namespace

std::vector<TensorSpec> required_tensors(const ModelSpec& spec) {
  std::vector<TensorSpec> out;
  for (std::size_t i = 0; i < spec.layers.size(); ++i) {
    const auto& layer = spec.layers[i];
    if (auto* d = std::get_if<Dense>(&layer)) {
      out.push_back({layer_name(i) + ".weight", {d->out_features, d->in_features}});
      out.push_back({layer_name(i) + ".bias", {d->out_features}});
    } else if (auto* c = std::get_if<Conv2D>(&layer)) {
      out.push_back({layer_name(i) + ".weight", {c->out_channels, c->in_channels, c->kernel_h, c->kernel_w}});
      out.push_back({layer_name(i) + ".bias", {c->out_channels}});
    }
  }
  return out;
}

std::vector<Shape> layer_output_shapes(const ModelSpec& spec) {
  if (spec.input_shape.empty() || numel(spec.input_shape) == 0) {
    throw Error(Errc::shape, "model input shape " + shape_to_string(spec.input_shape) + " is empty");
  }
  if (spec.layers.empty()) throw Error(Errc::shape, "model has no layers");

  std::vector<Shape> shapes;
  Shape cur = spec.input_shape;
  for (std::size_t i = 0; i < spec.layers.size(); ++i) {
    const auto& layer = spec.layers[i];
    if (layer_activation(layer) == Activation::softmax && i + 1 != spec.layers.size()) {
      fail(i, "uses softmax, which is only allowed as the final activation");
    }
    if (auto* d = std::get_if<Dense>(&layer)) {
      if (d->in_features == 0 || d->out_features == 0) fail(i, "has a zero-sized dimension");
      if (cur.size() != 1) fail(i, "expects a flat input, got " + shape_to_string(cur));
      if (cur[0] != d->in_features) {
        fail(i, "expects input " + std::to_string(cur[0]) + ", declared " + std::to_string(d->in_features));
      }
      cur = {d->out_features};
    } else if (auto* c = std::get_if<Conv2D>(&layer)) {
      if (c->in_channels == 0 || c->out_channels == 0 || c->kernel_h == 0 || c->kernel_w == 0 || c->stride == 0) {
        fail(i, "has a zero-sized dimension");
      }
      if (cur.size() != 3) fail(i, "expects a (channels, height, width) input, got " + shape_to_string(cur));
      if (cur[0] != c->in_channels) {
        fail(i, "expects input " + std::to_string(cur[0]) + ", declared " + std::to_string(c->in_channels));
      }
      std::size_t h = cur[1] + 2 * c->padding;
      std::size_t w = cur[2] + 2 * c->padding;
      if (h < c->kernel_h || w < c->kernel_w) fail(i, "kernel is larger than its padded input");
      cur = {c->out_channels, (h - c->kernel_h) / c->stride + 1, (w - c->kernel_w) / c->stride + 1};
    } else if (auto* p = std::get_if<MaxPool2D>(&layer)) {
      if (p->window == 0 || p->stride == 0) fail(i, "has a zero-sized window or stride");
      if (cur.size() != 3) fail(i, "expects a (channels, height, width) input, got " + shape_to_string(cur));
      if (cur[1] < p->window || cur[2] < p->window) fail(i, "window is larger than its input");
      cur = {cur[0], (cur[1] - p->window) / p->stride + 1, (cur[2] - p->window) / p->stride + 1};
    } else {
      cur = {numel(cur)};
    }
    shapes.push_back(cur);
  }
  return shapes;
}

ValidationReport validate_model(const ModelSpec& spec, const WeightSet& weights) {
  try {
    layer_output_shapes(spec);
  } catch (const Error& e) {
    return {e.what()};
  }
  auto required = required_tensors(spec);
  for (const auto& req : required) {
    const Tensor* t = weights.find(req.name);
    if (!t) return {"missing tensor " + req.name};
    if (t->shape() != req.shape) {
      return {"tensor " + req.name + " expects shape " + shape_to_string(req.shape) + ", got " +
              shape_to_string(t->shape())};
    }
  }
  for (const auto& [name, tensor] : weights) {
    bool known = std::any_of(required.begin(), required.end(), [&](const auto& r) { return r.name == name; });
    if (!known) return {"unexpected tensor " + name};
  }
  return {};
}

void require_valid(const ModelSpec& spec, const WeightSet& weights) {
  auto report = validate_model(spec, weights);
  if (!report.ok()) throw Error(Errc::shape, *report.error);
}

std::string_view activation_name(Activation a) {
  switch (a) {
    case Activation::relu: return "relu";
    case Activation::softmax: return "softmax";
    case Activation::none: break;
  }
  return "none";
}

Activation activation_from_name(std::string_view name) {
  if (name == "none") return Activation::none;
  if (name == "relu") return Activation::relu;
  if (name == "softmax") return Activation::softmax;
  throw Error(Errc::format, "unknown activation '" + std::string(name) + "'");
}

nlohmann::json model_to_json(const ModelSpec& spec) {
  nlohmann::json layers = nlohmann::json::array();
  for (const auto& layer : spec.layers) {
    std::visit(
        [&](const auto& l) {
          using T = std::decay_t<decltype(l)>;
          if constexpr (std::is_same_v<T, Dense>) {
            layers.push_back({{"type", "dense"},
                              {"in_features", l.in_features},
                              {"out_features", l.out_features},
                              {"activation", activation_name(l.activation)}});
          } else if constexpr (std::is_same_v<T, Conv2D>) {
            layers.push_back({{"type", "conv2d"},
                              {"in_channels", l.in_channels},
                              {"out_channels", l.out_channels},
                              {"kernel_h", l.kernel_h},
                              {"kernel_w", l.kernel_w},
                              {"stride", l.stride},
                              {"padding", l.padding},
                              {"activation", activation_name(l.activation)}});
          } else if constexpr (std::is_same_v<T, MaxPool2D>) {
            layers.push_back({{"type", "maxpool2d"}, {"window", l.window}, {"stride", l.stride}});
          } else {
            layers.push_back({{"type", "flatten"}});
          }
        },
        layer);
  }
  return {{"input_shape", spec.input_shape}, {"layers", layers}};
}

ModelSpec model_from_json(const nlohmann::json& j) {
  try {
    ModelSpec spec;
    spec.input_shape = j.at("input_shape").get<Shape>();
    for (const auto& l : j.at("layers")) {
      auto type = l.at("type").get<std::string>();
      if (type == "dense") {
        spec.layers.push_back(Dense{l.at("in_features").get<std::size_t>(), l.at("out_features").get<std::size_t>(),
                                    activation_from_name(l.value("activation", "none"))});
      } else if (type == "conv2d") {
        spec.layers.push_back(Conv2D{l.at("in_channels").get<std::size_t>(), l.at("out_channels").get<std::size_t>(),
                                     l.at("kernel_h").get<std::size_t>(), l.at("kernel_w").get<std::size_t>(),
                                     l.value("stride", std::size_t{1}), l.value("padding", std::size_t{0}),
                                     activation_from_name(l.value("activation", "none"))});
      } else if (type == "maxpool2d") {
        spec.layers.push_back(MaxPool2D{l.at("window").get<std::size_t>(), l.value("stride", l.at("window").get<std::size_t>())});
      } else if (type == "flatten") {
        spec.layers.push_back(Flatten{});
      } else {
        throw Error(Errc::format, "unknown layer type '" + type + "'");
      }
    }
    return spec;
  } catch (const nlohmann::json::exception& e) {
    throw Error(Errc::format, std::string("malformed model description: ") + e.what());
  }
}

}  // namespace progrnet
