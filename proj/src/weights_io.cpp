#include "progrnet/weights_io.hpp"

#include <bit>
#include <fstream>

#include "progrnet/error.hpp"

namespace progrnet {

namespace fs = std::filesystem;

std::vector<std::uint8_t> read_file(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(Errc::io, "cannot open " + path.string());
  std::vector<std::uint8_t> bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  if (in.bad()) throw Error(Errc::io, "read failed: " + path.string());
  return bytes;
}

void write_file(const fs::path& path, std::span<const std::uint8_t> bytes) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw Error(Errc::io, "cannot create " + path.string());
  out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw Error(Errc::io, "write failed: " + path.string());
}

void append_f32_le(std::vector<std::uint8_t>& out, float value) {
  auto bits = std::bit_cast<std::uint32_t>(value);
  for (int i = 0; i < 4; ++i) out.push_back(static_cast<std::uint8_t>(bits >> (8 * i)));
}

float read_f32_le(std::span<const std::uint8_t> bytes, std::size_t offset) {
  std::uint32_t bits = 0;
  for (int i = 0; i < 4; ++i) bits |= std::uint32_t{bytes[offset + i]} << (8 * i);
  return std::bit_cast<float>(bits);
}

void save_portable_weights(const fs::path& manifest_path, const ModelSpec& spec, const WeightSet& weights) {
  require_valid(spec, weights);

  auto blob_path = fs::path(manifest_path).replace_extension(".bin");
  std::vector<std::uint8_t> blob;
  nlohmann::json tensors = nlohmann::json::array();
  for (const auto& req : required_tensors(spec)) {
    const Tensor& t = weights.at(req.name);
    std::size_t offset = blob.size();
    for (float v : t.data()) append_f32_le(blob, v);
    tensors.push_back({{"name", req.name},
                       {"shape", t.shape()},
                       {"dtype", "f32"},
                       {"byte_offset", offset},
                       {"byte_length", blob.size() - offset}});
  }
  nlohmann::json manifest = {
      {"model", model_to_json(spec)}, {"blob", blob_path.filename().string()}, {"tensors", tensors}};

  write_file(blob_path, blob);
  auto text = manifest.dump(2);
  write_file(manifest_path, std::span(reinterpret_cast<const std::uint8_t*>(text.data()), text.size()));
}

PortableModel load_portable_weights(const fs::path& manifest_path) {
  auto text = read_file(manifest_path);
  nlohmann::json manifest;
  try {
    manifest = nlohmann::json::parse(text.begin(), text.end());
  } catch (const nlohmann::json::exception& e) {
    throw Error(Errc::format, manifest_path.string() + ": " + e.what());
  }

  PortableModel model;
  model.spec = model_from_json(manifest.at("model"));
  auto blob_name = manifest.value("blob", fs::path(manifest_path).replace_extension(".bin").filename().string());
  auto blob = read_file(manifest_path.parent_path() / blob_name);

  try {
    for (const auto& entry : manifest.at("tensors")) {
      auto name = entry.at("name").get<std::string>();
      if (entry.value("dtype", "f32") != "f32") throw Error(Errc::format, name + ": only dtype f32 is supported");
      auto shape = entry.at("shape").get<Shape>();
      auto offset = entry.at("byte_offset").get<std::size_t>();
      auto length = entry.at("byte_length").get<std::size_t>();
      if (length != numel(shape) * 4 || offset % 4 != 0 || offset + length > blob.size()) {
        throw Error(Errc::format, name + ": byte range does not match its shape or the blob size");
      }
      std::vector<float> values(numel(shape));
      for (std::size_t i = 0; i < values.size(); ++i) values[i] = read_f32_le(blob, offset + 4 * i);
      model.weights.insert(name, Tensor(std::move(shape), std::move(values)));
    }
  } catch (const nlohmann::json::exception& e) {
    throw Error(Errc::format, manifest_path.string() + ": " + e.what());
  }
  require_valid(model.spec, model.weights);
  return model;
}

}  // namespace progrnet
