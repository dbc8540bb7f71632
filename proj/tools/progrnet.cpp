// progrnet: convert, serve, stream, and benchmark progressively transmitted models.

#include <spdlog/spdlog.h>

#include <atomic>
#include <csignal>
#include <cstdlib>
#include <fstream>
#include <iostream>
#include <thread>

#include "CLI11.hpp"
#include "progrnet/cli.hpp"
#include "progrnet/control.hpp"
#include "progrnet/server.hpp"
#include "progrnet/throttle.hpp"

namespace {

std::atomic<bool> g_interrupted{false};

extern "C" void on_signal(int) { g_interrupted = true; }

void install_signal_handlers() {
  std::signal(SIGINT, on_signal);
  std::signal(SIGTERM, on_signal);
}

void wait_for_signal() {
  while (!g_interrupted) std::this_thread::sleep_for(std::chrono::milliseconds(50));
}

void configure_logging() {
  spdlog::set_level(spdlog::level::info);
  if (const char* level = std::getenv("PROGRNET_LOG")) spdlog::set_level(spdlog::level::from_str(level));
  spdlog::set_pattern("[%H:%M:%S.%e] [%l] %v");
}

}  // namespace

int main(int argc, char** argv) {
  using namespace progrnet;
  configure_logging();

  CLI::App app{"Progressive transmission of quantized neural-network weights"};
  app.require_subcommand(1);

  bool json = false;
  app.add_flag("--json", json, "Emit one JSON object per event");

  int bits = 16;
  std::string schedule = cli::kDefaultSchedule;
  std::string rate_text = "0";
  int tick_ms = 10;
  int port = 0;
  std::uint64_t seed = 7;
  std::string concurrent = "on";
  std::string output;

  auto add_rate = [&](CLI::App* cmd) {
    cmd->add_option("--rate", rate_text, "Link rate in bytes/s, or with a suffix such as 1MB/s (0 = unlimited)");
    cmd->add_option("--tick-ms", tick_ms, "Token-bucket tick in milliseconds")->check(CLI::PositiveNumber);
  };

  // convert
  cli::ConvertArgs convert;
  auto* convert_cmd = app.add_subcommand("convert", "Quantize portable weights into a progressive bundle");
  convert_cmd->add_option("--weights", convert.weights, "Portable weights manifest (.json)")->required();
  convert_cmd->add_option("--output,-o", output, "Bundle directory")->required();
  convert_cmd->add_option("--bits", bits, "Quantization bits k")->check(CLI::Range(1, 16));
  convert_cmd->add_option("--schedule", schedule, "Cumulative bit positions, e.g. 2,4,...,16");

  // serve
  std::string bundle_dir;
  std::string log_path;
  auto* serve_cmd = app.add_subcommand("serve", "Serve a bundle over HTTP with bandwidth throttling");
  serve_cmd->add_option("--bundle", bundle_dir, "Bundle directory")->required();
  serve_cmd->add_option("--port", port, "TCP port (0 picks one)");
  serve_cmd->add_option("--log", log_path, "Append request log lines (JSON) to this file; default stdout");
  add_rate(serve_cmd);

  // infer
  cli::InferArgs infer;
  int retries = 3;
  auto* infer_cmd = app.add_subcommand("infer", "Stream a model from a server and print each intermediate prediction");
  infer_cmd->add_option("--url", infer.url, "Server base URL, e.g. http://127.0.0.1:8080")->required();
  infer_cmd->add_option("--dataset", infer.dataset, "Dataset file holding the input")->required();
  infer_cmd->add_option("--input", infer.input, "Sample index within the dataset");
  infer_cmd->add_option("--stop-after", infer.stop_after, "Stop after this many stages (0 = all)")->check(CLI::NonNegativeNumber);
  infer_cmd->add_option("--concurrent", concurrent, "Overlap inference with the next download")->check(CLI::IsMember({"on", "off"}));
  infer_cmd->add_flag("--singleton", infer.singleton, "Download the monolithic payload instead");
  infer_cmd->add_option("--retries", retries, "Attempts per request on network failure")->check(CLI::PositiveNumber);

  // bench
  cli::BenchArgs bench;
  double latency_fraction = 0.0;
  std::string weights_path;
  auto* bench_cmd = app.add_subcommand("bench", "Time singleton vs progressive sessions against a local throttled server");
  bench_cmd->add_option("--bundle", bundle_dir, "Bundle directory")->required();
  bench_cmd->add_option("--dataset", bench.dataset, "Evaluation dataset")->required();
  bench_cmd->add_option("--weights", weights_path, "Original float weights, for the orig accuracy row");
  bench_cmd->add_option("--input", bench.input, "Sample index used for the timed sessions");
  bench_cmd->add_option("--latency-fraction", latency_fraction,
                        "Artificial inference latency as a fraction of one stage's transfer time")
      ->check(CLI::NonNegativeNumber);
  bench_cmd->add_option("--output,-o", output, "Directory for stage_accuracy.csv and bench.json");
  add_rate(bench_cmd);

  // train-demo
  auto* train_cmd = app.add_subcommand("train-demo", "Train the seeded toy classifier and write portable weights");
  train_cmd->add_option("--seed", seed, "Generator seed");
  train_cmd->add_option("--output,-o", output, "Output directory")->required();

  // control
  std::string dataset_path;
  auto* control_cmd = app.add_subcommand("control", "Run the JSON/HTTP control service used by the demo UI");
  control_cmd->add_option("--dataset", dataset_path, "Dataset whose samples are offered as demo inputs")->required();
  control_cmd->add_option("--port", port, "TCP port (0 picks one)");
  control_cmd->add_option("--concurrent", concurrent, "Overlap inference with the next download")->check(CLI::IsMember({"on", "off"}));

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    int code = app.exit(e);
    return code == 0 ? 0 : 1;
  }

  try {
    if (*convert_cmd) {
      convert.output = output;
      convert.bits = bits;
      convert.schedule = schedule;
      convert.json = json;
      cli::cmd_convert(convert, std::cout);
    } else if (*serve_cmd) {
      install_signal_handlers();
      BundleServer server(bundle_dir, {parse_rate(rate_text), std::chrono::milliseconds(tick_ms)});
      std::ofstream log_file;
      if (!log_path.empty()) {
        log_file.open(log_path, std::ios::app);
        if (!log_file) throw Error(Errc::io, "cannot open " + log_path);
        server.set_log_stream(&log_file);
      } else {
        server.set_log_stream(&std::cout);
      }
      int bound = server.start(port, "127.0.0.1");
      spdlog::info("serving {} ({} stages, {} bytes) on {}", bundle_dir, server.manifest().schedule.stages(),
                   server.manifest().payload_bytes(), server.url());
      if (json) std::cout << nlohmann::json{{"event", "listening"}, {"port", bound}}.dump() << std::endl;
      wait_for_signal();
      server.stop();
    } else if (*infer_cmd) {
      install_signal_handlers();
      infer.concurrent = concurrent == "on";
      infer.retries = retries;
      infer.json = json;
      cli::cmd_infer(infer, std::cout, &g_interrupted);
    } else if (*bench_cmd) {
      bench.bundle = bundle_dir;
      bench.weights = weights_path;
      bench.output = output;
      // bench measures at 1 MB/s unless told otherwise; serve defaults to unlimited.
      if (bench_cmd->count("--rate") > 0) bench.rate = parse_rate(rate_text);
      bench.tick = std::chrono::milliseconds(tick_ms);
      bench.latency_fraction = latency_fraction;
      bench.json = json;
      cli::cmd_bench(bench, std::cout);
    } else if (*train_cmd) {
      cli::cmd_train_demo({seed, output, json}, std::cout);
    } else if (*control_cmd) {
      install_signal_handlers();
      ControlConfig config;
      config.inputs = load_dataset(dataset_path);
      config.session_options.concurrent = concurrent == "on";
      ControlService service(std::move(config));
      int bound = service.start(port, "127.0.0.1");
      spdlog::info("control service on {}", service.url());
      if (json) std::cout << nlohmann::json{{"event", "listening"}, {"port", bound}}.dump() << std::endl;
      wait_for_signal();
      service.stop();
    }
  } catch (const Error& e) {
    spdlog::error("{}", e.what());
    return cli::exit_code(e.code());
  } catch (const std::exception& e) {
    spdlog::error("{}", e.what());
    return 2;
  }
  return 0;
}
