#pragma once

#include <cstdint>
#include <vector>

#include "progrnet/tensor.hpp"

namespace progrnet {

inline constexpr int kMaxBits = 16;

/// Per-tensor affine quantization: k-bit unsigned codes plus the float range
/// they were scaled from.
struct QuantizedTensor {
  Shape shape;
  int bits = 0;
  float min_val = 0.0f;
  float max_val = 0.0f;
  std::vector<std::uint32_t> codes;

  friend bool operator==(const QuantizedTensor&, const QuantizedTensor&) = default;
};

/// Guard added to the range so the scaled value stays in [0, 2^k): a fixed
/// 2^-20 fraction of the range, so quantization is scale invariant.
double quantization_epsilon(double range);

/// code = floor(2^k (x - min) / (max - min + eps)), clamped to 2^k - 1.
/// A constant tensor maps every element to code 0.
QuantizedTensor quantize(const Tensor& t, int bits);

/// Inverse mapping with the flooring-loss correction for `received_bits`
/// known MSBs: value = range * code / 2^k + min + range / 2^(B+1).
/// Low k - B code bits are expected to be zero when B < k.
Tensor dequantize(const QuantizedTensor& q, int received_bits);

/// Throws unless every QuantizedTensor invariant holds.
void check_quantized(const QuantizedTensor& q);

}  // namespace progrnet
