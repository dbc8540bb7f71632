#include "progrnet/session.hpp"

#include <deque>
#include <optional>
#include <thread>

#include "httplib.h"
#include "progrnet/error.hpp"

namespace progrnet {

namespace {

using Clock = std::chrono::steady_clock;

std::string base_url(std::string url) {
  while (!url.empty() && url.back() == '/') url.pop_back();
  return url;
}

std::unique_ptr<httplib::Client> make_client(const std::string& url) {
  auto client = std::make_unique<httplib::Client>(base_url(url));
  if (!client->is_valid()) throw Error(Errc::invalid_argument, "invalid server url '" + url + "'");
  client->set_keep_alive(true);
  client->set_tcp_nodelay(true);
  client->set_connection_timeout(std::chrono::seconds(5));
  client->set_read_timeout(std::chrono::seconds(300));
  return client;
}

/// One keep-alive connection to the bundle server. fetch() returns nullopt
/// when the control was stopped before or during the transfer.
class Fetcher {
 public:
  Fetcher(std::string url, int retries, std::shared_ptr<SessionControl> control)
      : url_(std::move(url)), retries_(std::max(retries, 1)), control_(std::move(control)), client_(make_client(url_)) {}

  std::optional<std::string> fetch(const std::string& path) {
    for (int attempt = 1;; ++attempt) {
      if (control_ && !control_->wait_while_paused()) return std::nullopt;
      std::string body;
      int status = 0;
      auto res = client_->Get(
          path,
          [&](const httplib::Response& r) {
            status = r.status;
            return true;
          },
          [&](const char* data, std::size_t n) {
            body.append(data, n);
            return !control_ || control_->wait_while_paused();
          });
      if (control_ && control_->stopped()) return std::nullopt;
      if (res) {
        if (status != 200) {
          throw Error(Errc::network, "GET " + path + " returned HTTP " + std::to_string(status));
        }
        return body;
      }
      if (attempt >= retries_) {
        throw Error(Errc::network, "GET " + url_ + path + " failed: " + httplib::to_string(res.error()));
      }
      client_ = make_client(url_);
      std::this_thread::sleep_for(std::chrono::milliseconds(50 * attempt));
    }
  }

 private:
  std::string url_;
  int retries_;
  std::shared_ptr<SessionControl> control_;
  std::unique_ptr<httplib::Client> client_;
};

std::span<const std::uint8_t> as_bytes(const std::string& s) {
  return {reinterpret_cast<const std::uint8_t*>(s.data()), s.size()};
}

struct Received {
  int stage = 0;
  std::string bytes;
  TransferRecord record;
};

class Pipeline {
 public:
  Pipeline(const std::string& url, const Tensor& input, const SessionOptions& options, const SessionCallbacks& callbacks,
           std::shared_ptr<SessionControl> control)
      : url_(url), input_(input), options_(options), callbacks_(callbacks), control_(std::move(control)),
        t0_(Clock::now()), fetcher_(url, options.retries, control_) {}

  SessionReport run() {
    auto manifest_text = fetcher_.fetch("/manifest");
    if (!manifest_text) return finish(true);
    state_.emplace(parse_manifest(*manifest_text));
    report_.total_stages = manifest().schedule.stages();
    if (options_.max_stages > 0) {
      limit_ = std::min(options_.max_stages, report_.total_stages);
    } else {
      limit_ = report_.total_stages;
    }
    if (callbacks_.on_manifest) callbacks_.on_manifest(manifest());

    if (options_.concurrent) {
      run_concurrent();
    } else {
      run_serial();
    }
    bool stopped = control_->stopped() || report_.stages_received < report_.total_stages;
    return finish(stopped);
  }

 private:
  const BundleManifest& manifest() const { return state_->manifest(); }

  double now_ms() const { return std::chrono::duration<double, std::milli>(Clock::now() - t0_).count(); }

  SessionReport finish(bool stopped) {
    if (stopped) {
      control_->stop();
    } else {
      control_->complete();
    }
    report_.stopped = control_->stopped();
    report_.total_ms = now_ms();
    return std::move(report_);
  }

  // Returns the verified stage, or nullopt if the session was stopped.
  std::optional<Received> download(int stage) {
    // A veto ends the download side only; stages already received are still
    // inferred, and the session reports stopped since it is incomplete.
    if (callbacks_.before_request && !callbacks_.before_request(stage)) return std::nullopt;
    const std::string path = "/stage/" + std::to_string(stage);
    for (int attempt = 1;; ++attempt) {
      if (!control_->wait_while_paused()) return std::nullopt;
      TransferRecord record{stage, 0, now_ms(), 0.0};
      auto body = fetcher_.fetch(path);
      if (!body) return std::nullopt;
      record.end_ms = now_ms();
      record.bytes = body->size();
      try {
        verify_stage(as_bytes(*body), manifest(), stage);
      } catch (const Error& e) {
        if (e.code() == Errc::verification && attempt == 1) continue;  // one re-fetch
        throw;
      }
      if (callbacks_.on_stage_received) callbacks_.on_stage_received(record);
      return Received{stage, std::move(*body), record};
    }
  }

  void apply(const Received& r) {
    state_->apply(StageBlob{r.stage, {r.bytes.begin(), r.bytes.end()}});
    report_.transfers.push_back(r.record);
    report_.stages_received = r.stage;
  }

  // Materializes the current state and infers; `transfer` is the newest stage's record.
  void infer(const TransferRecord& transfer) {
    StageResult result;
    result.stage = state_->stages_received();
    result.bits = state_->effective_bits();
    result.timing.transfer_start = transfer.start_ms;
    result.timing.transfer_end = transfer.end_ms;
    result.timing.infer_start = now_ms();
    try {
      // The worker is the only writer of state_, so no copy is needed here.
      result.prediction = forward(manifest().model, state_->materialize(), input_);
    } catch (const Error& e) {
      throw Error(e.code(), "stage " + std::to_string(result.stage) + ": " + e.what());
    }
    if (options_.extra_inference_latency.count() > 0) std::this_thread::sleep_for(options_.extra_inference_latency);
    result.timing.infer_end = now_ms();
    if (callbacks_.on_result) callbacks_.on_result(result);
    report_.results.push_back(std::move(result));
  }

  void run_serial() {
    for (int m = 1; m <= limit_; ++m) {
      if (control_->stopped()) return;
      auto received = download(m);
      if (!received) return;
      apply(*received);
      if (control_->stopped()) return;
      infer(received->record);
    }
  }

  void run_concurrent() {
    std::mutex mutex;
    std::condition_variable cv;
    std::deque<Received> queue;
    bool done = false;
    std::exception_ptr failure;

    std::thread downloader([&] {
      try {
        for (int m = 1; m <= limit_ && !control_->stopped(); ++m) {
          auto received = download(m);
          if (!received) break;
          std::lock_guard lock(mutex);
          queue.push_back(std::move(*received));
          cv.notify_all();
        }
      } catch (...) {
        std::lock_guard lock(mutex);
        failure = std::current_exception();
      }
      std::lock_guard lock(mutex);
      done = true;
      cv.notify_all();
    });

    try {
      for (;;) {
        std::deque<Received> batch;
        {
          std::unique_lock lock(mutex);
          cv.wait(lock, [&] { return !queue.empty() || done; });
          batch.swap(queue);
          if (batch.empty() && done) break;
        }
        if (control_->stopped()) break;
        for (const auto& r : batch) apply(r);
        infer(batch.back().record);
      }
    } catch (...) {
      control_->stop();
      downloader.join();
      throw;
    }
    // Stop may have interrupted the worker while the downloader still runs.
    downloader.join();
    if (failure) std::rethrow_exception(failure);
  }

  std::string url_;
  const Tensor& input_;
  SessionOptions options_;
  const SessionCallbacks& callbacks_;
  std::shared_ptr<SessionControl> control_;
  Clock::time_point t0_;
  Fetcher fetcher_;
  std::optional<ReconstructionState> state_;
  int limit_ = 0;
  SessionReport report_;
};

}  // namespace

std::string_view status_name(SessionStatus s) {
  switch (s) {
    case SessionStatus::paused: return "paused";
    case SessionStatus::stopped: return "stopped";
    case SessionStatus::complete: return "complete";
    case SessionStatus::downloading: break;
  }
  return "downloading";
}

void SessionControl::pause() {
  std::lock_guard lock(mutex_);
  if (status_ == SessionStatus::paused) return;
  if (status_ != SessionStatus::downloading) {
    throw Error(Errc::state, std::string("cannot pause a ") + std::string(status_name(status_)) + " session");
  }
  status_ = SessionStatus::paused;
}

void SessionControl::resume() {
  std::lock_guard lock(mutex_);
  if (status_ == SessionStatus::downloading) return;
  if (status_ != SessionStatus::paused) {
    throw Error(Errc::state, std::string("cannot resume a ") + std::string(status_name(status_)) + " session");
  }
  status_ = SessionStatus::downloading;
  cv_.notify_all();
}

void SessionControl::stop() {
  std::lock_guard lock(mutex_);
  if (status_ == SessionStatus::stopped) return;
  if (status_ == SessionStatus::complete) throw Error(Errc::state, "cannot stop a complete session");
  status_ = SessionStatus::stopped;
  cv_.notify_all();
}

void SessionControl::complete() {
  std::lock_guard lock(mutex_);
  if (status_ == SessionStatus::stopped) return;
  status_ = SessionStatus::complete;
  cv_.notify_all();
}

SessionStatus SessionControl::status() const {
  std::lock_guard lock(mutex_);
  return status_;
}

bool SessionControl::stopped() const { return status() == SessionStatus::stopped; }

bool SessionControl::wait_while_paused() {
  std::unique_lock lock(mutex_);
  cv_.wait(lock, [&] { return status_ != SessionStatus::paused; });
  return status_ != SessionStatus::stopped;
}

SessionReport progressive_session(const std::string& url, const Tensor& input, const SessionOptions& options,
                                  const SessionCallbacks& callbacks, std::shared_ptr<SessionControl> control) {
  if (!control) control = std::make_shared<SessionControl>();
  Pipeline pipeline(url, input, options, callbacks, std::move(control));
  return pipeline.run();
}

SingletonReport singleton_session(const std::string& url, const Tensor& input, const SessionOptions& options) {
  auto t0 = Clock::now();
  auto ms = [&] { return std::chrono::duration<double, std::milli>(Clock::now() - t0).count(); };

  Fetcher fetcher(url, options.retries, nullptr);
  ReconstructionState state(parse_manifest(*fetcher.fetch("/manifest")));
  SingletonReport report;
  report.result.timing.transfer_start = ms();
  auto payload = *fetcher.fetch("/weights-singleton");
  report.result.timing.transfer_end = ms();
  report.bytes = payload.size();

  report.result.timing.infer_start = ms();
  for (const auto& blob : split_singleton(as_bytes(payload), state.manifest())) state.apply(blob);
  report.result.stage = state.stages_received();
  report.result.bits = state.effective_bits();
  report.result.prediction = forward(state.manifest().model, state.materialize(), input);
  if (options.extra_inference_latency.count() > 0) std::this_thread::sleep_for(options.extra_inference_latency);
  report.result.timing.infer_end = ms();
  report.total_ms = ms();
  return report;
}

std::string http_get(const std::string& url, const std::string& path, int retries) {
  Fetcher fetcher(url, retries, nullptr);
  return *fetcher.fetch(path);
}

}  // namespace progrnet
