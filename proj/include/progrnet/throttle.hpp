#pragma once

#include <chrono>
#include <cstddef>
#include <string_view>

namespace progrnet {

struct ThrottleConfig {
  double rate = 0.0;  // bytes per second; 0 = unlimited
  std::chrono::milliseconds tick{10};
};

/// "1MB/s", "0.5 MB/s", "200KB/s", "1MiB/s", "250000" (bytes/s), "0" or
/// "unlimited". MB is 10^6 bytes.
double parse_rate(std::string_view text);

/// Token bucket with no initial burst: tokens accrue at `rate` from start(),
/// and writers draw at most one tick's worth per chunk. A chunk is released
/// only once its tokens have accrued, so n bytes take n / rate seconds
/// regardless of how the caller slices them.
class TokenBucket {
 public:
  using Clock = std::chrono::steady_clock;

  explicit TokenBucket(ThrottleConfig config);

  void start();
  /// Largest chunk to hand to one write: one tick's worth of tokens.
  std::size_t chunk_bytes() const noexcept;
  /// Blocks until `bytes` more tokens are available, then consumes them.
  void acquire(std::size_t bytes);

  bool unlimited() const noexcept { return config_.rate <= 0.0; }

 private:
  ThrottleConfig config_;
  Clock::time_point start_;
  double consumed_ = 0.0;
};

}  // namespace progrnet
