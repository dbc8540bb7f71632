#include "progrnet/bit_codec.hpp"

#include <charconv>

#include "progrnet/error.hpp"
#include "progrnet/quantizer.hpp"

namespace progrnet {

namespace {

std::uint32_t low_mask(int bits) { return bits >= 32 ? ~std::uint32_t{0} : (std::uint32_t{1} << bits) - 1; }

void check_stage(const BitSchedule& sched, int stage) {
  if (stage < 1 || stage > sched.stages()) {
    throw Error(Errc::invalid_argument,
                "stage " + std::to_string(stage) + " outside [1, " + std::to_string(sched.stages()) + "]");
  }
}

void check_fragment(std::uint32_t fragment, const BitSchedule& sched, int stage) {
  if (fragment > low_mask(sched.width(stage))) {
    throw Error(Errc::invalid_argument, "fragment " + std::to_string(fragment) + " exceeds the " +
                                            std::to_string(sched.width(stage)) + "-bit width of stage " +
                                            std::to_string(stage));
  }
}

}  // namespace

BitSchedule::BitSchedule(int bits, std::vector<int> positions) : bits_(bits), positions_(std::move(positions)) {
  if (bits_ < 1 || bits_ > kMaxBits) {
    throw Error(Errc::invalid_argument, "bit width " + std::to_string(bits_) + " outside [1, 16]");
  }
  if (positions_.empty()) throw Error(Errc::invalid_argument, "bit schedule is empty");
  int prev = 0;
  for (int p : positions_) {
    if (p <= prev) throw Error(Errc::invalid_argument, "bit schedule " + to_string() + " is not strictly increasing from 1");
    prev = p;
  }
  if (prev != bits_) {
    throw Error(Errc::invalid_argument,
                "bit schedule " + to_string() + " must end at k = " + std::to_string(bits_));
  }
}

BitSchedule BitSchedule::default_for(int bits) {
  std::vector<int> positions;
  for (int b = 2; b < bits; b += 2) positions.push_back(b);
  positions.push_back(bits);
  return BitSchedule(bits, std::move(positions));
}

BitSchedule BitSchedule::parse(int bits, std::string_view text) {
  std::vector<int> positions;
  while (!text.empty()) {
    auto comma = text.find(',');
    auto item = text.substr(0, comma);
    while (!item.empty() && item.front() == ' ') item.remove_prefix(1);
    while (!item.empty() && item.back() == ' ') item.remove_suffix(1);
    int value = 0;
    auto [ptr, ec] = std::from_chars(item.data(), item.data() + item.size(), value);
    if (item.empty() || ec != std::errc{} || ptr != item.data() + item.size()) {
      throw Error(Errc::invalid_argument, "cannot parse bit schedule entry '" + std::string(item) + "'");
    }
    positions.push_back(value);
    if (comma == std::string_view::npos) break;
    text.remove_prefix(comma + 1);
  }
  return BitSchedule(bits, std::move(positions));
}

int BitSchedule::position(int stage) const {
  if (stage == 0) return 0;
  check_stage(*this, stage);
  return positions_[stage - 1];
}

std::string BitSchedule::to_string() const {
  std::string out;
  for (std::size_t i = 0; i < positions_.size(); ++i) {
    if (i) out += ",";
    out += std::to_string(positions_[i]);
  }
  return out;
}

std::uint32_t divide(std::uint32_t code, const BitSchedule& sched, int stage) {
  check_stage(sched, stage);
  const int k = sched.bits();
  if (code > low_mask(k)) {
    throw Error(Errc::invalid_argument, "code " + std::to_string(code) + " exceeds " + std::to_string(k) + " bits");
  }
  const int before = sched.position(stage - 1);
  // The left shift happens in a k-bit register: consumed high bits fall off.
  std::uint32_t shifted = (code << before) & low_mask(k);
  return shifted >> (k - sched.position(stage) + before);
}

std::uint32_t accumulate(std::uint32_t state, std::uint32_t fragment, const BitSchedule& sched, int stage) {
  check_stage(sched, stage);
  check_fragment(fragment, sched, stage);
  return state | (fragment << (sched.bits() - sched.position(stage)));
}

std::uint32_t concatenate(std::span<const std::uint32_t> fragments, const BitSchedule& sched) {
  if (fragments.empty() || fragments.size() > static_cast<std::size_t>(sched.stages())) {
    throw Error(Errc::invalid_argument, "need between 1 and " + std::to_string(sched.stages()) + " fragments");
  }
  std::uint32_t code = 0;
  for (std::size_t i = 0; i < fragments.size(); ++i) code = accumulate(code, fragments[i], sched, int(i) + 1);
  return code;
}

FragmentPlane divide_tensor(std::span<const std::uint32_t> codes, const BitSchedule& sched, int stage) {
  FragmentPlane plane{stage, sched.width(stage), {}};
  plane.values.reserve(codes.size());
  for (auto c : codes) plane.values.push_back(divide(c, sched, stage));
  return plane;
}

void accumulate_tensor(std::span<std::uint32_t> codes, const FragmentPlane& plane, const BitSchedule& sched) {
  if (plane.values.size() != codes.size()) throw Error(Errc::shape, "fragment plane size disagrees with code count");
  if (plane.width != sched.width(plane.stage)) throw Error(Errc::format, "fragment plane width disagrees with schedule");
  for (std::size_t i = 0; i < codes.size(); ++i) codes[i] = accumulate(codes[i], plane.values[i], sched, plane.stage);
}

std::vector<std::uint32_t> concat_tensor(std::span<const FragmentPlane> planes, const BitSchedule& sched) {
  if (planes.empty()) throw Error(Errc::invalid_argument, "no fragment planes to concatenate");
  std::vector<std::uint32_t> codes(planes.front().values.size(), 0);
  for (std::size_t m = 0; m < planes.size(); ++m) {
    if (planes[m].stage != int(m) + 1) throw Error(Errc::invalid_argument, "fragment planes are not in stage order");
    accumulate_tensor(codes, planes[m], sched);
  }
  return codes;
}

}  // namespace progrnet
