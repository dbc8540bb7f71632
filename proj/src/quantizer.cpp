#include "progrnet/quantizer.hpp"

#include <algorithm>
#include <cmath>

#include "progrnet/error.hpp"

namespace progrnet {

namespace {

void check_bits(int bits) {
  if (bits < 1 || bits > kMaxBits) {
    throw Error(Errc::invalid_argument, "bit width " + std::to_string(bits) + " outside [1, 16]");
  }
}

}  // namespace

double quantization_epsilon(double range) { return std::ldexp(range, -20); }

QuantizedTensor quantize(const Tensor& t, int bits) {
  check_bits(bits);
  if (t.size() == 0) throw Error(Errc::invalid_argument, "cannot quantize an empty tensor");

  auto [lo, hi] = std::minmax_element(t.data().begin(), t.data().end());
  QuantizedTensor q{t.shape(), bits, *lo, *hi, std::vector<std::uint32_t>(t.size(), 0)};
  if (q.max_val == q.min_val) return q;

  const double min = q.min_val;
  const double range = double(q.max_val) - min;
  const double scale = std::ldexp(1.0, bits) / (range + quantization_epsilon(range));
  const std::uint32_t top = (std::uint32_t{1} << bits) - 1;
  for (std::size_t i = 0; i < t.size(); ++i) {
    auto code = static_cast<std::uint32_t>(std::floor((double(t[i]) - min) * scale));
    q.codes[i] = std::min(code, top);
  }
  return q;
}

Tensor dequantize(const QuantizedTensor& q, int received_bits) {
  check_bits(q.bits);
  if (received_bits < 1 || received_bits > q.bits) {
    throw Error(Errc::invalid_argument, "received bits " + std::to_string(received_bits) + " outside [1, " +
                                            std::to_string(q.bits) + "]");
  }
  std::vector<float> values(q.codes.size(), q.min_val);
  if (q.max_val != q.min_val) {
    const double min = q.min_val;
    const double range = double(q.max_val) - min;
    const double step = std::ldexp(range, -q.bits);
    const double correction = std::ldexp(range, -(received_bits + 1));
    for (std::size_t i = 0; i < values.size(); ++i) {
      values[i] = static_cast<float>(step * q.codes[i] + min + correction);
    }
  }
  return Tensor(q.shape, std::move(values));
}

void check_quantized(const QuantizedTensor& q) {
  check_bits(q.bits);
  if (!std::isfinite(q.min_val) || !std::isfinite(q.max_val) || q.min_val > q.max_val) {
    throw Error(Errc::format, "quantized tensor has an invalid range");
  }
  if (q.codes.size() != numel(q.shape)) throw Error(Errc::shape, "quantized tensor code count disagrees with shape");
  const std::uint32_t limit = std::uint32_t{1} << q.bits;
  for (auto c : q.codes) {
    if (c >= limit) throw Error(Errc::format, "code " + std::to_string(c) + " exceeds " + std::to_string(q.bits) + " bits");
  }
}

}  // namespace progrnet
