#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "progrnet/format.hpp"
#include "progrnet/model.hpp"

namespace progrnet {

struct Prediction {
  std::size_t class_index = 0;
  std::vector<float> probabilities;

  float confidence() const { return probabilities.empty() ? 0.0f : probabilities[class_index]; }
};

/// Raw output of the final layer (after its declared activation).
Tensor forward_output(const ModelSpec& spec, const WeightSet& weights, const Tensor& input);

/// Runs the model and reports argmax plus class probabilities. If the final
/// activation is not softmax, softmax is applied to the outputs.
Prediction forward(const ModelSpec& spec, const WeightSet& weights, const Tensor& input);

std::vector<float> softmax(std::span<const float> logits);

struct Sample {
  Tensor input;
  std::size_t label = 0;
};

struct LabeledDataset {
  std::size_t num_classes = 0;
  Shape input_shape;
  std::uint64_t seed = 0;
  std::vector<Sample> samples;
};

/// Fraction of samples whose argmax matches the label.
double evaluate(const ModelSpec& spec, const WeightSet& weights, const LabeledDataset& dataset);

struct BlobsConfig {
  std::size_t num_classes = 8;
  std::size_t dims = 32;
  std::size_t train_samples = 2400;
  std::size_t test_samples = 800;
  double center_scale = 1.0;
  double noise = 1.2;
};

struct DatasetSplit {
  LabeledDataset train;
  LabeledDataset test;
};

/// Seeded Gaussian clusters: class centers ~ N(0, center_scale^2) per dimension,
/// samples ~ center + N(0, noise^2); labels cycle through the classes.
DatasetSplit make_blobs(std::uint64_t seed, const BlobsConfig& config);

struct TrainConfig {
  BlobsConfig data;
  std::vector<std::size_t> hidden = {1024, 256};
  std::size_t epochs = 6;
  std::size_t batch_size = 32;
  double learning_rate = 0.05;
  double target_accuracy = 0.95;
};

struct TrainedDemo {
  ModelSpec spec;
  WeightSet weights;
  DatasetSplit data;
  double test_accuracy = 0.0;
};

/// Trains an MLP (ReLU hidden layers, softmax output) with mini-batch SGD on
/// cross-entropy. Bit-identical for a given seed and config; throws
/// Errc::verification if held-out accuracy misses config.target_accuracy.
TrainedDemo train_demo(std::uint64_t seed, const TrainConfig& config = {});

struct StageAccuracy {
  int stage = 0;
  int bits = 0;
  double accuracy = 0.0;
};

struct StageAccuracyTable {
  std::vector<StageAccuracy> stages;
  std::optional<double> original_accuracy;

  /// "stage,bits,accuracy" rows, plus a final "orig" row when known.
  std::string to_csv() const;
};

/// Evaluates the intermediate model after every stage, and the original
/// float weights when given.
StageAccuracyTable accuracy_by_stage(const Bundle& bundle, const LabeledDataset& dataset,
                                     const WeightSet* original = nullptr);

void save_dataset(const std::filesystem::path& path, const LabeledDataset& dataset);
LabeledDataset load_dataset(const std::filesystem::path& path);

}  // namespace progrnet
