#pragma once

#include <chrono>
#include <condition_variable>
#include <functional>
#include <memory>
#include <mutex>
#include <string>
#include <string_view>
#include <vector>

#include "progrnet/format.hpp"
#include "progrnet/inference.hpp"

namespace progrnet {

enum class SessionStatus { downloading, paused, stopped, complete };

std::string_view status_name(SessionStatus s);

/// Thread-safe pause/resume/stop switch shared between a session and whoever
/// steers it. Transitions: downloading <-> paused, then stopped or complete.
class SessionControl {
 public:
  void pause();
  void resume();
  void stop();
  /// Marks a finished session; no-op once stopped.
  void complete();

  SessionStatus status() const;
  bool stopped() const;

  /// Blocks while paused. Returns false if the session was stopped.
  bool wait_while_paused();

 private:
  mutable std::mutex mutex_;
  std::condition_variable cv_;
  SessionStatus status_ = SessionStatus::downloading;
};

/// Milliseconds since session start; negative when the event did not happen.
struct StageTiming {
  double transfer_start = -1.0;
  double transfer_end = -1.0;
  double infer_start = -1.0;
  double infer_end = -1.0;
};

struct StageResult {
  int stage = 0;
  int bits = 0;
  Prediction prediction;
  StageTiming timing;
};

struct TransferRecord {
  int stage = 0;
  std::size_t bytes = 0;
  double start_ms = 0.0;
  double end_ms = 0.0;
};

struct SessionOptions {
  /// Overlap stage-m inference with the stage-(m+1) download.
  bool concurrent = true;
  /// Download at most this many stages (0 = all). No request is ever issued
  /// for a later stage.
  int max_stages = 0;
  /// Added to every inference; emulates slower user hardware.
  std::chrono::duration<double> extra_inference_latency{0.0};
  /// Attempts per request on network failure.
  int retries = 3;
};

struct SessionCallbacks {
  /// Called on the worker for each completed inference, in stage order.
  std::function<void(const StageResult&)> on_result;
  /// Called on the downloader once stage m is received and verified.
  std::function<void(const TransferRecord&)> on_stage_received;
  /// Called on the downloader before requesting stage m; return false to stop.
  std::function<bool(int stage)> before_request;
  /// Called with the manifest once it is fetched.
  std::function<void(const BundleManifest&)> on_manifest;
};

struct SessionReport {
  std::vector<StageResult> results;
  std::vector<TransferRecord> transfers;
  int stages_received = 0;
  int total_stages = 0;
  bool stopped = false;
  double total_ms = 0.0;
};

/// Downloads stages in order while a worker reconstructs and infers on the
/// newest received stage. With options.concurrent, a running inference never
/// delays the next transfer; stages that land during an inference are
/// accumulated and only the newest is inferred.
SessionReport progressive_session(const std::string& url, const Tensor& input, const SessionOptions& options = {},
                                  const SessionCallbacks& callbacks = {},
                                  std::shared_ptr<SessionControl> control = nullptr);

struct SingletonReport {
  StageResult result;
  std::size_t bytes = 0;
  double total_ms = 0.0;
};

/// Baseline: fetch /weights-singleton in one piece, reconstruct with B = k, infer once.
SingletonReport singleton_session(const std::string& url, const Tensor& input, const SessionOptions& options = {});

/// GET helper shared by sessions and the CLI. Retries network failures.
std::string http_get(const std::string& url, const std::string& path, int retries = 3);

}  // namespace progrnet
