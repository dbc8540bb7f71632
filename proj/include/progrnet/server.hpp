#pragma once

#include <filesystem>
#include <memory>
#include <mutex>
#include <ostream>
#include <string>
#include <thread>
#include <vector>

#include "progrnet/format.hpp"
#include "progrnet/throttle.hpp"

namespace httplib {
class Server;
}

namespace progrnet {

struct RequestLogEntry {
  std::string path;
  std::size_t bytes = 0;  // body bytes actually written
  double duration_ms = 0.0;
  int status = 0;
  bool completed = true;  // false if the client dropped mid-body
};

/// Serves one bundle: GET /manifest, GET /stage/{m}, GET /weights-singleton
/// (all stages back to back). Every body is paced by a per-connection
/// token bucket.
class BundleServer {
 public:
  BundleServer(const std::filesystem::path& bundle_dir, ThrottleConfig throttle);
  ~BundleServer();

  BundleServer(const BundleServer&) = delete;
  BundleServer& operator=(const BundleServer&) = delete;

  /// Binds host:port (port 0 picks a free one) and serves on a background
  /// thread. Returns the bound port.
  int start(int port = 0, const std::string& host = "127.0.0.1");
  void stop();

  int port() const noexcept { return port_; }
  std::string url() const;
  const BundleManifest& manifest() const noexcept { return manifest_; }

  std::vector<RequestLogEntry> request_log() const;
  void clear_log();
  /// Also write each log entry as one JSON line to `out` (not owned).
  void set_log_stream(std::ostream* out);

 private:
  void record(RequestLogEntry entry);

  BundleManifest manifest_;
  std::string manifest_bytes_;
  std::vector<std::string> stages_;
  std::string singleton_;
  ThrottleConfig throttle_;

  std::unique_ptr<httplib::Server> http_;
  std::thread thread_;
  int port_ = 0;

  mutable std::mutex log_mutex_;
  std::vector<RequestLogEntry> log_;
  std::ostream* log_stream_ = nullptr;
};

std::string log_entry_json(const RequestLogEntry& entry);

}  // namespace progrnet
