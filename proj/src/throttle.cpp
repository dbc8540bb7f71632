#include "progrnet/throttle.hpp"

#include <algorithm>
#include <cctype>
#include <charconv>
#include <cmath>
#include <string>
#include <thread>

#include "progrnet/error.hpp"

namespace progrnet {

double parse_rate(std::string_view text) {
  std::string s;
  for (char c : text) {
    if (!std::isspace(static_cast<unsigned char>(c))) s += static_cast<char>(std::tolower(static_cast<unsigned char>(c)));
  }
  if (s == "unlimited" || s == "inf") return 0.0;
  if (s.ends_with("/s")) s.resize(s.size() - 2);

  double scale = 1.0;
  struct Suffix { std::string_view text; double scale; };
  static constexpr Suffix suffixes[] = {{"mib", 1024.0 * 1024.0}, {"kib", 1024.0}, {"mb", 1e6}, {"kb", 1e3}, {"b", 1.0}};
  for (const auto& suf : suffixes) {
    if (s.ends_with(suf.text)) {
      s.resize(s.size() - suf.text.size());
      scale = suf.scale;
      break;
    }
  }
  double value = 0.0;
  auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), value);
  if (s.empty() || ec != std::errc{} || ptr != s.data() + s.size() || value < 0.0 || !std::isfinite(value)) {
    throw Error(Errc::invalid_argument, "cannot parse rate '" + std::string(text) + "'");
  }
  return value * scale;
}

TokenBucket::TokenBucket(ThrottleConfig config) : config_(config), start_(Clock::now()) {
  if (config_.rate < 0.0) throw Error(Errc::invalid_argument, "throttle rate must be >= 0");
  if (config_.tick.count() <= 0) throw Error(Errc::invalid_argument, "throttle tick must be positive");
}

void TokenBucket::start() {
  start_ = Clock::now();
  consumed_ = 0.0;
}

std::size_t TokenBucket::chunk_bytes() const noexcept {
  if (unlimited()) return 256 * 1024;
  auto per_tick = static_cast<std::size_t>(config_.rate * std::chrono::duration<double>(config_.tick).count());
  return std::max<std::size_t>(per_tick, 1);
}

void TokenBucket::acquire(std::size_t bytes) {
  if (unlimited()) return;
  consumed_ += double(bytes);
  auto due = start_ + std::chrono::duration_cast<Clock::duration>(std::chrono::duration<double>(consumed_ / config_.rate));
  std::this_thread::sleep_until(due);
}

}  // namespace progrnet
