#include "progrnet/server.hpp"

#include "httplib.h"
#include "progrnet/error.hpp"
#include "progrnet/weights_io.hpp"

namespace progrnet {

namespace {

using Clock = std::chrono::steady_clock;

double ms_since(Clock::time_point t0) {
  return std::chrono::duration<double, std::milli>(Clock::now() - t0).count();
}

std::string to_string(const std::vector<std::uint8_t>& bytes) { return std::string(bytes.begin(), bytes.end()); }

}  // namespace

std::string log_entry_json(const RequestLogEntry& e) {
  return nlohmann::json{{"path", e.path},
                        {"bytes", e.bytes},
                        {"duration_ms", e.duration_ms},
                        {"status", e.status},
                        {"completed", e.completed}}
      .dump();
}

BundleServer::BundleServer(const std::filesystem::path& bundle_dir, ThrottleConfig throttle) : throttle_(throttle) {
  Bundle bundle = read_bundle(bundle_dir);
  manifest_ = bundle.manifest;
  manifest_bytes_ = to_string(read_file(bundle_dir / "manifest.json"));
  for (const auto& blob : bundle.blobs) {
    stages_.push_back(to_string(blob.bytes));
    singleton_ += stages_.back();
  }
  TokenBucket check(throttle_);  // validates the config up front
}

BundleServer::~BundleServer() { stop(); }

std::string BundleServer::url() const { return "http://127.0.0.1:" + std::to_string(port_); }

void BundleServer::record(RequestLogEntry entry) {
  std::lock_guard lock(log_mutex_);
  if (log_stream_) *log_stream_ << log_entry_json(entry) << std::endl;
  log_.push_back(std::move(entry));
}

std::vector<RequestLogEntry> BundleServer::request_log() const {
  std::lock_guard lock(log_mutex_);
  return log_;
}

void BundleServer::clear_log() {
  std::lock_guard lock(log_mutex_);
  log_.clear();
}

void BundleServer::set_log_stream(std::ostream* out) {
  std::lock_guard lock(log_mutex_);
  log_stream_ = out;
}

int BundleServer::start(int port, const std::string& host) {
  if (http_) throw Error(Errc::state, "server already started");
  http_ = std::make_unique<httplib::Server>();
  http_->set_tcp_nodelay(true);
  http_->set_keep_alive_max_count(1000);
  http_->set_keep_alive_timeout(30);
  // A paused client stalls the body; give it room before the socket times out.
  http_->set_write_timeout(std::chrono::seconds(300));

  auto serve_body = [this](const httplib::Request& req, httplib::Response& res, const std::string* body) {
    auto t0 = Clock::now();
    auto bucket = std::make_shared<TokenBucket>(throttle_);
    auto written = std::make_shared<std::size_t>(0);
    bool started = false;
    res.set_content_provider(
        body->size(), "application/octet-stream",
        [bucket, written, body, started](std::size_t offset, std::size_t, httplib::DataSink& sink) mutable {
          if (!started) {
            bucket->start();
            started = true;
          }
          std::size_t n = std::min(bucket->chunk_bytes(), body->size() - offset);
          bucket->acquire(n);
          if (!sink.write(body->data() + offset, n)) return false;
          *written += n;
          return true;
        },
        [this, path = req.path, t0, written, total = body->size()](bool success) {
          record({path, *written, ms_since(t0), 200, success && *written == total});
        });
  };

  http_->Get("/manifest", [this, serve_body](const httplib::Request& req, httplib::Response& res) {
    serve_body(req, res, &manifest_bytes_);
  });
  http_->Get("/weights-singleton", [this, serve_body](const httplib::Request& req, httplib::Response& res) {
    serve_body(req, res, &singleton_);
  });
  http_->Get(R"(/stage/(\d+))", [this, serve_body](const httplib::Request& req, httplib::Response& res) {
    long m = 0;
    try {
      m = std::stol(req.matches[1].str());
    } catch (const std::exception&) {
      m = 0;
    }
    if (m < 1 || m > static_cast<long>(stages_.size())) {
      res.status = 404;
      res.set_content("unknown stage " + req.matches[1].str() + "\n", "text/plain");
      record({req.path, 0, 0.0, 404, true});
      return;
    }
    serve_body(req, res, &stages_[std::size_t(m - 1)]);
  });
  http_->set_error_handler([this](const httplib::Request& req, httplib::Response& res) {
    if (res.status == 404) {
      // Unmatched route; routed 404s already carry a body and a log entry.
      if (!res.body.empty()) return;
      res.set_content("not found: " + req.path + "\n", "text/plain");
    } else {
      res.set_content("bad request\n", "text/plain");
    }
    record({req.path, 0, 0.0, res.status, true});
  });

  if (port == 0) {
    port_ = http_->bind_to_any_port(host);
  } else {
    port_ = http_->bind_to_port(host, port) ? port : -1;
  }
  if (port_ <= 0) {
    http_.reset();
    throw Error(Errc::network, "cannot bind " + host + ":" + std::to_string(port));
  }
  thread_ = std::thread([this] { http_->listen_after_bind(); });
  http_->wait_until_ready();
  return port_;
}

void BundleServer::stop() {
  if (!http_) return;
  http_->stop();
  if (thread_.joinable()) thread_.join();
  http_.reset();
}

}  // namespace progrnet
