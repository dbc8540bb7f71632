#pragma once

#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <vector>

#include "progrnet/model.hpp"

namespace progrnet {

std::vector<std::uint8_t> read_file(const std::filesystem::path& path);
void write_file(const std::filesystem::path& path, std::span<const std::uint8_t> bytes);

struct PortableModel {
  ModelSpec spec;
  WeightSet weights;
};

// Portable weights: a JSON manifest with one {name, shape, dtype:"f32",
// byte_offset, byte_length} entry per tensor, plus a raw little-endian
// float32 blob written next to it (same stem, ".bin").
void save_portable_weights(const std::filesystem::path& manifest_path, const ModelSpec& spec,
                           const WeightSet& weights);
PortableModel load_portable_weights(const std::filesystem::path& manifest_path);

void append_f32_le(std::vector<std::uint8_t>& out, float value);
float read_f32_le(std::span<const std::uint8_t> bytes, std::size_t offset);

}  // namespace progrnet
