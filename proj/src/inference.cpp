#include "progrnet/inference.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>
#include <sstream>

#include "progrnet/error.hpp"
#include "progrnet/weights_io.hpp"

namespace progrnet {

namespace {

// Eight independent partial sums give the compiler room to vectorize.
float dot(const float* a, const float* b, std::size_t n) {
  float acc[8] = {};
  std::size_t i = 0;
  for (; i + 8 <= n; i += 8) {
    for (std::size_t j = 0; j < 8; ++j) acc[j] += a[i + j] * b[i + j];
  }
  float s = ((acc[0] + acc[1]) + (acc[2] + acc[3])) + ((acc[4] + acc[5]) + (acc[6] + acc[7]));
  for (; i < n; ++i) s += a[i] * b[i];
  return s;
}

void apply_activation(std::vector<float>& v, Activation a) {
  if (a == Activation::relu) {
    for (auto& x : v) x = std::max(x, 0.0f);
  } else if (a == Activation::softmax) {
    v = softmax(v);
  }
}

std::vector<float> dense(const Dense& d, const Tensor& w, const Tensor& b, std::span<const float> x) {
  std::vector<float> y(d.out_features);
  const float* wp = w.data().data();
  for (std::size_t o = 0; o < d.out_features; ++o) y[o] = b[o] + dot(wp + o * d.in_features, x.data(), d.in_features);
  return y;
}

std::vector<float> conv2d(const Conv2D& c, const Tensor& w, const Tensor& b, std::span<const float> x, const Shape& in,
                          const Shape& out) {
  const std::size_t ih = in[1], iw = in[2], oh = out[1], ow = out[2];
  const auto pad = static_cast<std::ptrdiff_t>(c.padding);
  std::vector<float> y(numel(out));
  for (std::size_t oc = 0; oc < c.out_channels; ++oc) {
    for (std::size_t oy = 0; oy < oh; ++oy) {
      for (std::size_t ox = 0; ox < ow; ++ox) {
        float s = b[oc];
        for (std::size_t icn = 0; icn < c.in_channels; ++icn) {
          for (std::size_t ky = 0; ky < c.kernel_h; ++ky) {
            auto yy = static_cast<std::ptrdiff_t>(oy * c.stride + ky) - pad;
            if (yy < 0 || yy >= static_cast<std::ptrdiff_t>(ih)) continue;
            for (std::size_t kx = 0; kx < c.kernel_w; ++kx) {
              auto xx = static_cast<std::ptrdiff_t>(ox * c.stride + kx) - pad;
              if (xx < 0 || xx >= static_cast<std::ptrdiff_t>(iw)) continue;
              s += w[((oc * c.in_channels + icn) * c.kernel_h + ky) * c.kernel_w + kx] *
                   x[(icn * ih + std::size_t(yy)) * iw + std::size_t(xx)];
            }
          }
        }
        y[(oc * oh + oy) * ow + ox] = s;
      }
    }
  }
  return y;
}

std::vector<float> maxpool(const MaxPool2D& p, std::span<const float> x, const Shape& in, const Shape& out) {
  const std::size_t ih = in[1], iw = in[2], oh = out[1], ow = out[2];
  std::vector<float> y(numel(out));
  for (std::size_t ch = 0; ch < out[0]; ++ch) {
    for (std::size_t oy = 0; oy < oh; ++oy) {
      for (std::size_t ox = 0; ox < ow; ++ox) {
        float m = -INFINITY;
        for (std::size_t ky = 0; ky < p.window; ++ky) {
          for (std::size_t kx = 0; kx < p.window; ++kx) {
            m = std::max(m, x[(ch * ih + oy * p.stride + ky) * iw + ox * p.stride + kx]);
          }
        }
        y[(ch * oh + oy) * ow + ox] = m;
      }
    }
  }
  return y;
}

std::string layer_weight(std::size_t i) { return "layer" + std::to_string(i) + ".weight"; }
std::string layer_bias(std::size_t i) { return "layer" + std::to_string(i) + ".bias"; }

std::vector<float> run_layers(const ModelSpec& spec, const WeightSet& weights, const Tensor& input) {
  if (input.shape() != spec.input_shape) {
    throw Error(Errc::shape, "input shape " + shape_to_string(input.shape()) + " does not match model input " +
                                 shape_to_string(spec.input_shape));
  }
  auto shapes = layer_output_shapes(spec);
  std::vector<float> x(input.data().begin(), input.data().end());
  Shape cur = spec.input_shape;
  for (std::size_t i = 0; i < spec.layers.size(); ++i) {
    const auto& layer = spec.layers[i];
    if (auto* d = std::get_if<Dense>(&layer)) {
      x = dense(*d, weights.at(layer_weight(i)), weights.at(layer_bias(i)), x);
      apply_activation(x, d->activation);
    } else if (auto* c = std::get_if<Conv2D>(&layer)) {
      x = conv2d(*c, weights.at(layer_weight(i)), weights.at(layer_bias(i)), x, cur, shapes[i]);
      apply_activation(x, c->activation);
    } else if (auto* p = std::get_if<MaxPool2D>(&layer)) {
      x = maxpool(*p, x, cur, shapes[i]);
    }
    if (std::any_of(x.begin(), x.end(), [](float v) { return !std::isfinite(v); })) {
      throw Error(Errc::verification, "layer" + std::to_string(i) + " produced a non-finite value");
    }
    cur = shapes[i];
  }
  return x;
}

}  // namespace

std::vector<float> softmax(std::span<const float> logits) {
  std::vector<float> p(logits.size());
  if (logits.empty()) return p;
  const double top = *std::max_element(logits.begin(), logits.end());
  double sum = 0.0;
  std::vector<double> e(logits.size());
  for (std::size_t i = 0; i < logits.size(); ++i) sum += e[i] = std::exp(double(logits[i]) - top);
  for (std::size_t i = 0; i < logits.size(); ++i) p[i] = static_cast<float>(e[i] / sum);
  return p;
}

Tensor forward_output(const ModelSpec& spec, const WeightSet& weights, const Tensor& input) {
  require_valid(spec, weights);
  auto shapes = layer_output_shapes(spec);
  return Tensor(shapes.back(), run_layers(spec, weights, input));
}

Prediction forward(const ModelSpec& spec, const WeightSet& weights, const Tensor& input) {
  require_valid(spec, weights);
  auto out = run_layers(spec, weights, input);
  const auto& last = spec.layers.back();
  const auto* d = std::get_if<Dense>(&last);
  const auto* c = std::get_if<Conv2D>(&last);
  bool is_softmax = (d && d->activation == Activation::softmax) || (c && c->activation == Activation::softmax);
  Prediction pred;
  pred.probabilities = is_softmax ? std::move(out) : softmax(out);
  pred.class_index = static_cast<std::size_t>(
      std::max_element(pred.probabilities.begin(), pred.probabilities.end()) - pred.probabilities.begin());
  return pred;
}

double evaluate(const ModelSpec& spec, const WeightSet& weights, const LabeledDataset& dataset) {
  if (dataset.samples.empty()) throw Error(Errc::invalid_argument, "cannot evaluate on an empty dataset");
  std::size_t correct = 0;
  for (const auto& s : dataset.samples) correct += forward(spec, weights, s.input).class_index == s.label;
  return double(correct) / double(dataset.samples.size());
}

DatasetSplit make_blobs(std::uint64_t seed, const BlobsConfig& config) {
  if (config.num_classes < 2 || config.dims == 0 || config.train_samples == 0 || config.test_samples == 0) {
    throw Error(Errc::invalid_argument, "blobs config needs >= 2 classes, >= 1 dimension and nonempty splits");
  }
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> center_dist(0.0, config.center_scale);
  std::normal_distribution<double> noise_dist(0.0, config.noise);

  std::vector<std::vector<double>> centers(config.num_classes, std::vector<double>(config.dims));
  for (auto& c : centers) {
    for (auto& v : c) v = center_dist(rng);
  }

  auto generate = [&](std::size_t count) {
    LabeledDataset ds{config.num_classes, {config.dims}, seed, {}};
    ds.samples.reserve(count);
    for (std::size_t i = 0; i < count; ++i) {
      std::size_t label = i % config.num_classes;
      std::vector<float> x(config.dims);
      for (std::size_t d = 0; d < config.dims; ++d) x[d] = static_cast<float>(centers[label][d] + noise_dist(rng));
      ds.samples.push_back({Tensor({config.dims}, std::move(x)), label});
    }
    return ds;
  };
  DatasetSplit split;
  split.train = generate(config.train_samples);
  split.test = generate(config.test_samples);
  return split;
}

TrainedDemo train_demo(std::uint64_t seed, const TrainConfig& config) {
  if (config.hidden.empty() || config.hidden.size() > 2) {
    throw Error(Errc::invalid_argument, "the demo MLP takes one or two hidden layers");
  }
  if (config.batch_size == 0 || config.epochs == 0) throw Error(Errc::invalid_argument, "batch size and epochs must be positive");

  TrainedDemo demo;
  demo.data = make_blobs(seed, config.data);

  std::vector<std::size_t> widths = {config.data.dims};
  widths.insert(widths.end(), config.hidden.begin(), config.hidden.end());
  widths.push_back(config.data.num_classes);
  const std::size_t layers = widths.size() - 1;

  demo.spec.input_shape = {config.data.dims};
  for (std::size_t l = 0; l < layers; ++l) {
    demo.spec.layers.push_back(
        Dense{widths[l], widths[l + 1], l + 1 == layers ? Activation::softmax : Activation::relu});
  }

  // Separate stream from the data generator so the dataset does not depend on model size.
  std::mt19937_64 rng(seed ^ 0x9e3779b97f4a7c15ULL);
  std::vector<std::vector<float>> w(layers), b(layers), gw(layers), gb(layers);
  for (std::size_t l = 0; l < layers; ++l) {
    const std::size_t in = widths[l], out = widths[l + 1];
    const double stddev = std::sqrt((l + 1 == layers ? 1.0 : 2.0) / double(in));
    std::normal_distribution<double> init(0.0, stddev);
    w[l].resize(in * out);
    for (auto& v : w[l]) v = static_cast<float>(init(rng));
    b[l].assign(out, 0.0f);
    gw[l].resize(in * out);
    gb[l].resize(out);
  }

  const auto& train = demo.data.train.samples;
  std::vector<std::size_t> order(train.size());
  std::iota(order.begin(), order.end(), 0);
  std::vector<std::vector<float>> act(layers + 1), delta(layers);
  for (std::size_t l = 0; l <= layers; ++l) act[l].resize(widths[l]);
  for (std::size_t l = 0; l < layers; ++l) delta[l].resize(widths[l + 1]);

  for (std::size_t epoch = 0; epoch < config.epochs; ++epoch) {
    std::shuffle(order.begin(), order.end(), rng);
    for (std::size_t start = 0; start < order.size(); start += config.batch_size) {
      const std::size_t end = std::min(order.size(), start + config.batch_size);
      for (std::size_t l = 0; l < layers; ++l) {
        std::fill(gw[l].begin(), gw[l].end(), 0.0f);
        std::fill(gb[l].begin(), gb[l].end(), 0.0f);
      }
      for (std::size_t s = start; s < end; ++s) {
        const auto& sample = train[order[s]];
        std::copy(sample.input.data().begin(), sample.input.data().end(), act[0].begin());
        for (std::size_t l = 0; l < layers; ++l) {
          const std::size_t in = widths[l], out = widths[l + 1];
          for (std::size_t o = 0; o < out; ++o) act[l + 1][o] = b[l][o] + dot(&w[l][o * in], act[l].data(), in);
          if (l + 1 == layers) {
            act[l + 1] = softmax(act[l + 1]);
          } else {
            for (auto& v : act[l + 1]) v = std::max(v, 0.0f);
          }
        }
        // Softmax + cross-entropy gradient at the logits.
        for (std::size_t o = 0; o < widths[layers]; ++o) {
          delta[layers - 1][o] = act[layers][o] - (o == sample.label ? 1.0f : 0.0f);
        }
        for (std::size_t l = layers; l-- > 0;) {
          const std::size_t in = widths[l], out = widths[l + 1];
          for (std::size_t o = 0; o < out; ++o) {
            const float g = delta[l][o];
            if (g == 0.0f) continue;
            gb[l][o] += g;
            float* row = &gw[l][o * in];
            for (std::size_t i = 0; i < in; ++i) row[i] += g * act[l][i];
          }
          if (l == 0) break;
          auto& prev = delta[l - 1];
          std::fill(prev.begin(), prev.end(), 0.0f);
          for (std::size_t o = 0; o < out; ++o) {
            const float g = delta[l][o];
            if (g == 0.0f) continue;
            const float* row = &w[l][o * in];
            for (std::size_t i = 0; i < in; ++i) prev[i] += g * row[i];
          }
          for (std::size_t i = 0; i < in; ++i) {
            if (act[l][i] <= 0.0f) prev[i] = 0.0f;
          }
        }
      }
      const float step = static_cast<float>(config.learning_rate / double(end - start));
      for (std::size_t l = 0; l < layers; ++l) {
        for (std::size_t i = 0; i < w[l].size(); ++i) w[l][i] -= step * gw[l][i];
        for (std::size_t i = 0; i < b[l].size(); ++i) b[l][i] -= step * gb[l][i];
      }
    }
  }

  for (std::size_t l = 0; l < layers; ++l) {
    demo.weights.insert(layer_weight(l), Tensor({widths[l + 1], widths[l]}, std::move(w[l])));
    demo.weights.insert(layer_bias(l), Tensor({widths[l + 1]}, std::move(b[l])));
  }
  demo.test_accuracy = evaluate(demo.spec, demo.weights, demo.data.test);
  if (demo.test_accuracy < config.target_accuracy) {
    throw Error(Errc::verification, "trained accuracy " + std::to_string(demo.test_accuracy) + " is below the target " +
                                        std::to_string(config.target_accuracy));
  }
  return demo;
}

std::string StageAccuracyTable::to_csv() const {
  std::ostringstream out;
  out << "stage,bits,accuracy\n";
  out.precision(6);
  out << std::fixed;
  for (const auto& s : stages) out << s.stage << ',' << s.bits << ',' << s.accuracy << '\n';
  if (original_accuracy) out << "orig,32," << *original_accuracy << '\n';
  return out.str();
}

StageAccuracyTable accuracy_by_stage(const Bundle& bundle, const LabeledDataset& dataset, const WeightSet* original) {
  const auto& manifest = bundle.manifest;
  StageAccuracyTable table;
  ReconstructionState state(manifest);
  for (const auto& blob : bundle.blobs) {
    state.apply(blob);
    table.stages.push_back({state.stages_received(), state.effective_bits(),
                            evaluate(manifest.model, state.materialize(), dataset)});
  }
  if (original) table.original_accuracy = evaluate(manifest.model, *original, dataset);
  return table;
}

void save_dataset(const std::filesystem::path& path, const LabeledDataset& dataset) {
  nlohmann::json samples = nlohmann::json::array();
  for (const auto& s : dataset.samples) {
    samples.push_back({{"label", s.label}, {"x", std::vector<float>(s.input.data().begin(), s.input.data().end())}});
  }
  nlohmann::json j = {{"num_classes", dataset.num_classes},
                      {"input_shape", dataset.input_shape},
                      {"seed", dataset.seed},
                      {"samples", samples}};
  auto text = j.dump();
  write_file(path, std::span(reinterpret_cast<const std::uint8_t*>(text.data()), text.size()));
}

LabeledDataset load_dataset(const std::filesystem::path& path) {
  auto bytes = read_file(path);
  try {
    auto j = nlohmann::json::parse(bytes.begin(), bytes.end());
    LabeledDataset ds;
    ds.num_classes = j.at("num_classes").get<std::size_t>();
    ds.input_shape = j.at("input_shape").get<Shape>();
    ds.seed = j.value("seed", std::uint64_t{0});
    for (const auto& s : j.at("samples")) {
      auto label = s.at("label").get<std::size_t>();
      if (label >= ds.num_classes) throw Error(Errc::format, "dataset label " + std::to_string(label) + " out of range");
      ds.samples.push_back({Tensor(ds.input_shape, s.at("x").get<std::vector<float>>()), label});
    }
    return ds;
  } catch (const nlohmann::json::exception& e) {
    throw Error(Errc::format, path.string() + ": " + e.what());
  }
}

}  // namespace progrnet
