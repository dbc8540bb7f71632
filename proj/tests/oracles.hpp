#pragma once

// Reference implementations used only by tests. Each one works from explicit
// bit positions or textbook definitions, independent of the library paths
// they check.

#include <cstdint>
#include <random>
#include <span>
#include <vector>

namespace progrnet::oracle {

/// Bits [from, to) of a k-bit code, counted from the MSB, read one by one.
inline std::uint32_t bit_field(std::uint32_t code, int k, int from, int to) {
  std::uint32_t v = 0;
  for (int j = from; j < to; ++j) v = (v << 1) | ((code >> (k - 1 - j)) & 1u);
  return v;
}

/// Places fragment bits one at a time at MSB offsets [positions[i-1], positions[i]).
inline std::uint32_t place_fragments(std::span<const std::uint32_t> fragments, int k, std::span<const int> positions) {
  std::uint32_t code = 0;
  int from = 0;
  for (std::size_t i = 0; i < fragments.size(); ++i) {
    const int to = positions[i];
    const int width = to - from;
    for (int j = 0; j < width; ++j) {
      std::uint32_t bit = (fragments[i] >> (width - 1 - j)) & 1u;
      code |= bit << (k - 1 - (from + j));
    }
    from = to;
  }
  return code;
}

/// MSB-first packing through an explicit bit list.
inline std::vector<std::uint8_t> pack_bits(std::span<const std::uint32_t> values, int width) {
  std::vector<bool> bits;
  for (auto v : values) {
    for (int j = width - 1; j >= 0; --j) bits.push_back((v >> j) & 1u);
  }
  std::vector<std::uint8_t> out((bits.size() + 7) / 8, 0);
  for (std::size_t i = 0; i < bits.size(); ++i) {
    if (bits[i]) out[i / 8] |= static_cast<std::uint8_t>(0x80u >> (i % 8));
  }
  return out;
}

/// Bitwise reflected CRC-32 (polynomial 0xEDB88320).
inline std::uint32_t crc32(std::span<const std::uint8_t> bytes) {
  std::uint32_t crc = 0xFFFFFFFFu;
  for (auto b : bytes) {
    crc ^= b;
    for (int i = 0; i < 8; ++i) crc = (crc >> 1) ^ (0xEDB88320u & (0u - (crc & 1u)));
  }
  return ~crc;
}

/// Random strictly increasing schedule ending at k.
inline std::vector<int> random_schedule(std::mt19937_64& rng, int k) {
  std::vector<int> positions;
  for (int p = 1; p < k; ++p) {
    if (std::bernoulli_distribution(0.4)(rng)) positions.push_back(p);
  }
  positions.push_back(k);
  return positions;
}

}  // namespace progrnet::oracle
