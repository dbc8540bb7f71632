#pragma once

#include <atomic>
#include <cstdint>
#include <filesystem>
#include <ostream>
#include <string>

#include "progrnet/error.hpp"
#include "progrnet/session.hpp"

namespace progrnet::cli {

inline constexpr const char* kDefaultSchedule = "2,4,6,8,10,12,14,16";

/// 0 success, 1 usage, 2 I/O, 3 network, 4 verification.
int exit_code(Errc code);

struct ConvertArgs {
  std::filesystem::path weights;  // portable weights manifest (.json)
  std::filesystem::path output;   // bundle directory
  int bits = 16;
  std::string schedule = kDefaultSchedule;
  bool json = false;
};

/// Writes the bundle and prints per-stage sizes plus the overhead against
/// plain k-bit packing.
void cmd_convert(const ConvertArgs& args, std::ostream& out);

struct TrainDemoArgs {
  std::uint64_t seed = 7;
  std::filesystem::path output;
  bool json = false;
};

/// Writes model.json/model.bin (portable weights) and train.json/test.json.
void cmd_train_demo(const TrainDemoArgs& args, std::ostream& out);

struct InferArgs {
  std::string url;
  std::filesystem::path dataset;
  std::size_t input = 0;
  int stop_after = 0;  // 0 = run every stage
  bool concurrent = true;
  bool singleton = false;
  int retries = 3;
  bool json = false;
};

/// Streams one line per stage result. `interrupt`, when set asynchronously,
/// stops the session (no new requests are issued afterwards).
void cmd_infer(const InferArgs& args, std::ostream& out, const std::atomic<bool>* interrupt = nullptr);

struct BenchArgs {
  std::filesystem::path bundle;
  std::filesystem::path dataset;
  std::filesystem::path weights;  // optional original float weights, for the "orig" row
  std::filesystem::path output;   // optional directory for stage_accuracy.csv and bench.json
  double rate = 1e6;
  std::chrono::milliseconds tick{10};
  std::size_t input = 0;
  /// Artificial inference latency as a fraction of one stage's transfer time.
  double latency_fraction = 0.0;
  bool json = false;
};

struct BenchModeResult {
  std::string mode;
  double total_ms = 0.0;
  std::vector<double> stage_ms;  // when each stage's prediction became available
  std::size_t final_class = 0;
};

struct BenchReport {
  std::vector<BenchModeResult> modes;  // singleton, progressive-concurrent, progressive-serial
  double final_accuracy = 0.0;
  std::string stage_accuracy_csv;
};

/// Runs singleton and progressive (concurrent on and off) sessions against a
/// locally spawned throttled server.
BenchReport cmd_bench(const BenchArgs& args, std::ostream& out);

}  // namespace progrnet::cli
