#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <string_view>
#include <vector>

namespace progrnet {

/// Cumulative MSB positions b1 < b2 < ... < bn = k. Stage m carries the code
/// bits from MSB offset b(m-1) (inclusive) to b(m) (exclusive), b0 = 0.
class BitSchedule {
 public:
  BitSchedule(int bits, std::vector<int> positions);

  /// 2, 4, ..., 16 for k = 16: eight stages of two bits each.
  static BitSchedule default_for(int bits = 16);
  /// Parses "2,4,6" (whitespace tolerated).
  static BitSchedule parse(int bits, std::string_view text);

  int bits() const noexcept { return bits_; }
  int stages() const noexcept { return static_cast<int>(positions_.size()); }
  const std::vector<int>& positions() const noexcept { return positions_; }

  /// b_m for 1-based m; position(0) == 0.
  int position(int stage) const;
  int width(int stage) const { return position(stage) - position(stage - 1); }

  std::string to_string() const;

  friend bool operator==(const BitSchedule&, const BitSchedule&) = default;

 private:
  int bits_;
  std::vector<int> positions_;
};

/// Fragment m of a k-bit code: (code << b(m-1)) in a k-bit register, then
/// >> (k - b(m) + b(m-1)).
std::uint32_t divide(std::uint32_t code, const BitSchedule& sched, int stage);

/// OR of fragment_i << (k - b_i) over the first fragments.size() stages.
std::uint32_t concatenate(std::span<const std::uint32_t> fragments, const BitSchedule& sched);

/// state | (fragment << (k - b_m)).
std::uint32_t accumulate(std::uint32_t state, std::uint32_t fragment, const BitSchedule& sched, int stage);

struct FragmentPlane {
  int stage = 0;
  int width = 0;
  std::vector<std::uint32_t> values;

  friend bool operator==(const FragmentPlane&, const FragmentPlane&) = default;
};

FragmentPlane divide_tensor(std::span<const std::uint32_t> codes, const BitSchedule& sched, int stage);

/// Folds `plane` into `codes` in place (elementwise accumulate).
void accumulate_tensor(std::span<std::uint32_t> codes, const FragmentPlane& plane, const BitSchedule& sched);

/// Reassembles codes from planes 1..planes.size(), which must be in stage order.
std::vector<std::uint32_t> concat_tensor(std::span<const FragmentPlane> planes, const BitSchedule& sched);

}  // namespace progrnet
