#pragma once

#include <map>
#include <memory>
#include <mutex>
#include <string>
#include <thread>

#include "json.hpp"
#include "progrnet/inference.hpp"
#include "progrnet/session.hpp"

namespace httplib {
class Server;
}

namespace progrnet {

struct ControlConfig {
  LabeledDataset inputs;           // demo inputs offered by GET /inputs
  SessionOptions session_options;  // applied to every session
  std::size_t max_inputs = 24;
};

/// Local JSON/HTTP API for steering progressive sessions:
///   POST /session {server_url, input_id}  -> {id}
///   GET  /session/{id}                    -> state snapshot
///   POST /session/{id}/pause|resume|stop  -> state snapshot, 409 on invalid transition
///   GET  /inputs                          -> demo inputs with labels and previews
class ControlService {
 public:
  explicit ControlService(ControlConfig config);
  ~ControlService();

  ControlService(const ControlService&) = delete;
  ControlService& operator=(const ControlService&) = delete;

  int start(int port = 0, const std::string& host = "127.0.0.1");
  void stop();
  int port() const noexcept { return port_; }
  std::string url() const;

  // The same operations the HTTP endpoints expose.
  std::string create_session(const std::string& server_url, std::size_t input_id);
  nlohmann::json snapshot(const std::string& id) const;
  nlohmann::json pause(const std::string& id);
  nlohmann::json resume(const std::string& id);
  nlohmann::json stop_session(const std::string& id);
  nlohmann::json inputs() const;

 private:
  struct Session;

  std::shared_ptr<Session> find(const std::string& id) const;

  ControlConfig config_;
  mutable std::mutex mutex_;
  std::map<std::string, std::shared_ptr<Session>> sessions_;
  std::size_t next_id_ = 1;

  std::unique_ptr<httplib::Server> http_;
  std::thread thread_;
  int port_ = 0;
};

}  // namespace progrnet
