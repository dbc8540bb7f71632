#pragma once

#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <vector>

#include "progrnet/bit_codec.hpp"
#include "progrnet/model.hpp"
#include "progrnet/quantizer.hpp"

namespace progrnet {

inline constexpr int kFormatVersion = 1;

/// CRC-32 with the IEEE 802.3 polynomial.
std::uint32_t crc32(std::span<const std::uint8_t> bytes);

/// Packs `width`-bit values MSB-first into ceil(n * width / 8) bytes; the
/// last byte is zero-padded in its low bits.
std::vector<std::uint8_t> pack_plane(std::span<const std::uint32_t> values, int width);
std::vector<std::uint32_t> unpack_plane(std::span<const std::uint8_t> bytes, std::size_t count, int width);

inline std::size_t packed_size(std::size_t count, int width) { return (count * std::size_t(width) + 7) / 8; }

struct TensorRecord {
  std::string name;
  Shape shape;
  float min_val = 0.0f;
  float max_val = 0.0f;
};

struct StageRecord {
  int stage = 0;
  int width = 0;
  std::size_t byte_length = 0;
  std::uint32_t crc32 = 0;
  std::vector<std::size_t> tensor_offsets;  // byte offset of each tensor segment in the blob
};

struct BundleManifest {
  int format_version = kFormatVersion;
  ModelSpec model;
  BitSchedule schedule = BitSchedule::default_for();
  std::vector<TensorRecord> tensors;  // canonical model order, shared by every stage
  std::vector<StageRecord> stages;

  int bits() const noexcept { return schedule.bits(); }
  std::size_t payload_bytes() const;
  const StageRecord& stage(int m) const;
};

struct StageBlob {
  int stage = 0;
  std::vector<std::uint8_t> bytes;
};

struct Bundle {
  BundleManifest manifest;
  std::vector<StageBlob> blobs;
};

/// Quantizes every tensor to schedule.bits() and splits the codes into one
/// bit-packed blob per stage.
Bundle encode_bundle(const ModelSpec& spec, const WeightSet& weights, const BitSchedule& schedule);

/// Throws Errc::verification when the length or CRC disagrees with the manifest.
void verify_stage(std::span<const std::uint8_t> bytes, const BundleManifest& manifest, int stage);

/// Verifies the blob, then unpacks one fragment plane per tensor (canonical order).
std::vector<FragmentPlane> decode_stage(const StageBlob& blob, const BundleManifest& manifest);

/// Cuts a concatenation of all stage blobs (the singleton payload) back into stages.
std::vector<StageBlob> split_singleton(std::span<const std::uint8_t> payload, const BundleManifest& manifest);

nlohmann::json manifest_to_json(const BundleManifest& manifest);
BundleManifest manifest_from_json(const nlohmann::json& j);
std::string manifest_text(const BundleManifest& manifest);
BundleManifest parse_manifest(std::string_view text);

std::string stage_file_name(int stage);
void write_bundle(const std::filesystem::path& dir, const Bundle& bundle);
BundleManifest read_manifest(const std::filesystem::path& dir);
Bundle read_bundle(const std::filesystem::path& dir);

/// Accumulated k-bit codes for every tensor after stages 1..m. Stages must be
/// applied in order. Copies are cheap snapshots for concurrent readers.
class ReconstructionState {
 public:
  explicit ReconstructionState(BundleManifest manifest);

  void apply(int stage, std::span<const FragmentPlane> planes);
  void apply(const StageBlob& blob) { apply(blob.stage, decode_stage(blob, manifest_)); }

  int stages_received() const noexcept { return received_; }
  /// B = b_m, the number of code MSBs known so far (0 before any stage).
  int effective_bits() const { return manifest_.schedule.position(received_); }
  bool complete() const noexcept { return received_ == manifest_.schedule.stages(); }

  const BundleManifest& manifest() const noexcept { return manifest_; }
  const std::vector<QuantizedTensor>& quantized() const noexcept { return tensors_; }

  /// Dequantizes every tensor with B = effective_bits().
  WeightSet materialize() const;

 private:
  BundleManifest manifest_;
  std::vector<QuantizedTensor> tensors_;
  int received_ = 0;
};

}  // namespace progrnet
