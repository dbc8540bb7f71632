#include "progrnet/format.hpp"

#include <zlib.h>

#include <charconv>
#include <cstdio>

#include "progrnet/error.hpp"
#include "progrnet/weights_io.hpp"

namespace progrnet {

namespace fs = std::filesystem;

std::uint32_t crc32(std::span<const std::uint8_t> bytes) {
  uLong crc = ::crc32(0L, Z_NULL, 0);
  // zlib takes uInt lengths; feed large buffers in slices.
  std::size_t done = 0;
  while (done < bytes.size()) {
    auto n = static_cast<uInt>(std::min<std::size_t>(bytes.size() - done, 1u << 30));
    crc = ::crc32(crc, bytes.data() + done, n);
    done += n;
  }
  return static_cast<std::uint32_t>(crc);
}

std::vector<std::uint8_t> pack_plane(std::span<const std::uint32_t> values, int width) {
  if (width < 1 || width > kMaxBits) throw Error(Errc::invalid_argument, "pack width outside [1, 16]");
  std::vector<std::uint8_t> out;
  out.reserve(packed_size(values.size(), width));
  std::uint64_t acc = 0;
  int pending = 0;
  const std::uint32_t limit = std::uint32_t{1} << width;
  for (auto v : values) {
    if (v >= limit) throw Error(Errc::invalid_argument, "value " + std::to_string(v) + " does not fit " + std::to_string(width) + " bits");
    acc = (acc << width) | v;
    pending += width;
    while (pending >= 8) {
      pending -= 8;
      out.push_back(static_cast<std::uint8_t>(acc >> pending));
    }
    acc &= (std::uint64_t{1} << pending) - 1;
  }
  if (pending > 0) out.push_back(static_cast<std::uint8_t>(acc << (8 - pending)));
  return out;
}

std::vector<std::uint32_t> unpack_plane(std::span<const std::uint8_t> bytes, std::size_t count, int width) {
  if (width < 1 || width > kMaxBits) throw Error(Errc::invalid_argument, "unpack width outside [1, 16]");
  if (bytes.size() != packed_size(count, width)) {
    throw Error(Errc::format, "packed plane is " + std::to_string(bytes.size()) + " bytes, expected " +
                                  std::to_string(packed_size(count, width)));
  }
  std::vector<std::uint32_t> out;
  out.reserve(count);
  std::uint64_t acc = 0;
  int available = 0;
  std::size_t next = 0;
  const std::uint64_t mask = (std::uint64_t{1} << width) - 1;
  for (std::size_t i = 0; i < count; ++i) {
    while (available < width) {
      acc = (acc << 8) | bytes[next++];
      available += 8;
    }
    available -= width;
    out.push_back(static_cast<std::uint32_t>((acc >> available) & mask));
    acc &= (std::uint64_t{1} << available) - 1;
  }
  return out;
}

std::size_t BundleManifest::payload_bytes() const {
  std::size_t total = 0;
  for (const auto& s : stages) total += s.byte_length;
  return total;
}

const StageRecord& BundleManifest::stage(int m) const {
  if (m < 1 || m > static_cast<int>(stages.size()) || stages[m - 1].stage != m) {
    throw Error(Errc::invalid_argument, "unknown stage " + std::to_string(m));
  }
  return stages[m - 1];
}

Bundle encode_bundle(const ModelSpec& spec, const WeightSet& weights, const BitSchedule& schedule) {
  require_valid(spec, weights);

  Bundle bundle;
  bundle.manifest.model = spec;
  bundle.manifest.schedule = schedule;

  std::vector<QuantizedTensor> quantized;
  for (const auto& req : required_tensors(spec)) {
    auto q = quantize(weights.at(req.name), schedule.bits());
    bundle.manifest.tensors.push_back({req.name, q.shape, q.min_val, q.max_val});
    quantized.push_back(std::move(q));
  }

  for (int m = 1; m <= schedule.stages(); ++m) {
    StageRecord record{m, schedule.width(m), 0, 0, {}};
    StageBlob blob{m, {}};
    for (const auto& q : quantized) {
      record.tensor_offsets.push_back(blob.bytes.size());
      auto packed = pack_plane(divide_tensor(q.codes, schedule, m).values, record.width);
      blob.bytes.insert(blob.bytes.end(), packed.begin(), packed.end());
    }
    record.byte_length = blob.bytes.size();
    record.crc32 = crc32(blob.bytes);
    bundle.manifest.stages.push_back(std::move(record));
    bundle.blobs.push_back(std::move(blob));
  }
  return bundle;
}

void verify_stage(std::span<const std::uint8_t> bytes, const BundleManifest& manifest, int stage) {
  const auto& record = manifest.stage(stage);
  if (bytes.size() != record.byte_length) {
    throw Error(Errc::verification, "stage " + std::to_string(stage) + " is " + std::to_string(bytes.size()) +
                                        " bytes, manifest says " + std::to_string(record.byte_length));
  }
  if (crc32(bytes) != record.crc32) {
    throw Error(Errc::verification, "stage " + std::to_string(stage) + " checksum mismatch");
  }
}

std::vector<FragmentPlane> decode_stage(const StageBlob& blob, const BundleManifest& manifest) {
  verify_stage(blob.bytes, manifest, blob.stage);
  const auto& record = manifest.stage(blob.stage);
  std::vector<FragmentPlane> planes;
  planes.reserve(manifest.tensors.size());
  for (std::size_t t = 0; t < manifest.tensors.size(); ++t) {
    auto count = numel(manifest.tensors[t].shape);
    auto offset = record.tensor_offsets.at(t);
    auto length = packed_size(count, record.width);
    if (offset + length > blob.bytes.size()) throw Error(Errc::format, "tensor segment overruns stage blob");
    planes.push_back({blob.stage, record.width,
                      unpack_plane(std::span(blob.bytes).subspan(offset, length), count, record.width)});
  }
  return planes;
}

std::vector<StageBlob> split_singleton(std::span<const std::uint8_t> payload, const BundleManifest& manifest) {
  if (payload.size() != manifest.payload_bytes()) {
    throw Error(Errc::verification, "singleton payload is " + std::to_string(payload.size()) + " bytes, expected " +
                                        std::to_string(manifest.payload_bytes()));
  }
  std::vector<StageBlob> blobs;
  std::size_t offset = 0;
  for (const auto& s : manifest.stages) {
    auto piece = payload.subspan(offset, s.byte_length);
    blobs.push_back({s.stage, {piece.begin(), piece.end()}});
    offset += s.byte_length;
  }
  return blobs;
}

namespace {

std::string float_to_decimal(float v) {
  char buf[64];
  auto [ptr, ec] = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, ptr);
}

float decimal_to_float(const std::string& s) {
  float v = 0.0f;
  auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
  if (ec != std::errc{} || ptr != s.data() + s.size()) throw Error(Errc::format, "bad decimal float '" + s + "'");
  return v;
}

}  // namespace

nlohmann::json manifest_to_json(const BundleManifest& manifest) {
  nlohmann::json tensors = nlohmann::json::array();
  for (const auto& t : manifest.tensors) {
    tensors.push_back({{"name", t.name},
                       {"shape", t.shape},
                       {"min_val", float_to_decimal(t.min_val)},
                       {"max_val", float_to_decimal(t.max_val)}});
  }
  nlohmann::json stages = nlohmann::json::array();
  for (const auto& s : manifest.stages) {
    stages.push_back({{"stage", s.stage},
                      {"width", s.width},
                      {"byte_length", s.byte_length},
                      {"crc32", s.crc32},
                      {"tensor_offsets", s.tensor_offsets}});
  }
  return {{"format_version", manifest.format_version},
          {"model", model_to_json(manifest.model)},
          {"k", manifest.schedule.bits()},
          {"schedule", manifest.schedule.positions()},
          {"tensors", tensors},
          {"stages", stages}};
}

BundleManifest manifest_from_json(const nlohmann::json& j) {
  try {
    BundleManifest m;
    m.format_version = j.at("format_version").get<int>();
    if (m.format_version != kFormatVersion) {
      throw Error(Errc::format, "unsupported bundle format_version " + std::to_string(m.format_version));
    }
    m.model = model_from_json(j.at("model"));
    m.schedule = BitSchedule(j.at("k").get<int>(), j.at("schedule").get<std::vector<int>>());
    for (const auto& t : j.at("tensors")) {
      m.tensors.push_back({t.at("name").get<std::string>(), t.at("shape").get<Shape>(),
                           decimal_to_float(t.at("min_val").get<std::string>()),
                           decimal_to_float(t.at("max_val").get<std::string>())});
    }
    for (const auto& s : j.at("stages")) {
      m.stages.push_back({s.at("stage").get<int>(), s.at("width").get<int>(), s.at("byte_length").get<std::size_t>(),
                          s.at("crc32").get<std::uint32_t>(), s.at("tensor_offsets").get<std::vector<std::size_t>>()});
    }

    auto required = required_tensors(m.model);
    if (required.size() != m.tensors.size()) throw Error(Errc::format, "manifest tensor list disagrees with model");
    for (std::size_t i = 0; i < required.size(); ++i) {
      if (required[i].name != m.tensors[i].name || required[i].shape != m.tensors[i].shape) {
        throw Error(Errc::format, "manifest tensor " + m.tensors[i].name + " is out of canonical order or misshapen");
      }
      if (!(m.tensors[i].min_val <= m.tensors[i].max_val)) throw Error(Errc::format, m.tensors[i].name + ": min > max");
    }
    if (static_cast<int>(m.stages.size()) != m.schedule.stages()) {
      throw Error(Errc::format, "manifest stage list disagrees with schedule");
    }
    for (int stage = 1; stage <= m.schedule.stages(); ++stage) {
      const auto& s = m.stages[stage - 1];
      if (s.stage != stage || s.width != m.schedule.width(stage) || s.tensor_offsets.size() != m.tensors.size()) {
        throw Error(Errc::format, "manifest stage record " + std::to_string(stage) + " is inconsistent");
      }
      std::size_t expected = 0;
      for (std::size_t t = 0; t < m.tensors.size(); ++t) {
        if (s.tensor_offsets[t] != expected) throw Error(Errc::format, "stage " + std::to_string(stage) + " has a bad tensor offset");
        expected += packed_size(numel(m.tensors[t].shape), s.width);
      }
      if (s.byte_length != expected) throw Error(Errc::format, "stage " + std::to_string(stage) + " has a bad byte_length");
    }
    return m;
  } catch (const nlohmann::json::exception& e) {
    throw Error(Errc::format, std::string("malformed manifest: ") + e.what());
  }
}

std::string manifest_text(const BundleManifest& manifest) { return manifest_to_json(manifest).dump(2) + "\n"; }

BundleManifest parse_manifest(std::string_view text) {
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(text);
  } catch (const nlohmann::json::exception& e) {
    throw Error(Errc::format, std::string("manifest is not JSON: ") + e.what());
  }
  return manifest_from_json(j);
}

std::string stage_file_name(int stage) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "stage-%02d.bin", stage);
  return buf;
}

void write_bundle(const fs::path& dir, const Bundle& bundle) {
  std::error_code ec;
  fs::create_directories(dir, ec);
  if (ec) throw Error(Errc::io, "cannot create " + dir.string() + ": " + ec.message());
  auto text = manifest_text(bundle.manifest);
  write_file(dir / "manifest.json", std::span(reinterpret_cast<const std::uint8_t*>(text.data()), text.size()));
  for (const auto& blob : bundle.blobs) write_file(dir / stage_file_name(blob.stage), blob.bytes);
}

BundleManifest read_manifest(const fs::path& dir) {
  auto bytes = read_file(dir / "manifest.json");
  return parse_manifest(std::string_view(reinterpret_cast<const char*>(bytes.data()), bytes.size()));
}

Bundle read_bundle(const fs::path& dir) {
  Bundle bundle{read_manifest(dir), {}};
  for (const auto& s : bundle.manifest.stages) {
    StageBlob blob{s.stage, read_file(dir / stage_file_name(s.stage))};
    verify_stage(blob.bytes, bundle.manifest, s.stage);
    bundle.blobs.push_back(std::move(blob));
  }
  return bundle;
}

ReconstructionState::ReconstructionState(BundleManifest manifest) : manifest_(std::move(manifest)) {
  for (const auto& t : manifest_.tensors) {
    tensors_.push_back({t.shape, manifest_.bits(), t.min_val, t.max_val, std::vector<std::uint32_t>(numel(t.shape), 0)});
  }
}

void ReconstructionState::apply(int stage, std::span<const FragmentPlane> planes) {
  if (stage <= received_) {
    throw Error(Errc::state, "stage " + std::to_string(stage) + " was already applied");
  }
  if (stage != received_ + 1) {
    throw Error(Errc::state, "stage " + std::to_string(stage) + " is out of order; expected stage " +
                                 std::to_string(received_ + 1));
  }
  if (planes.size() != tensors_.size()) throw Error(Errc::format, "stage plane count disagrees with tensor count");
  for (std::size_t t = 0; t < tensors_.size(); ++t) {
    if (planes[t].stage != stage) throw Error(Errc::format, "fragment plane carries the wrong stage index");
    accumulate_tensor(tensors_[t].codes, planes[t], manifest_.schedule);
  }
  received_ = stage;
}

WeightSet ReconstructionState::materialize() const {
  if (received_ == 0) throw Error(Errc::state, "no stage has been received yet");
  WeightSet weights;
  const int bits = effective_bits();
  for (std::size_t t = 0; t < tensors_.size(); ++t) weights.insert(manifest_.tensors[t].name, dequantize(tensors_[t], bits));
  return weights;
}

}  // namespace progrnet
