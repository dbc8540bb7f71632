#include "progrnet/cli.hpp"

#include <cstdio>
#include <iomanip>
#include <sstream>
#include <thread>

#include "progrnet/format.hpp"
#include "progrnet/inference.hpp"
#include "progrnet/server.hpp"
#include "progrnet/weights_io.hpp"

namespace progrnet::cli {

using nlohmann::json;

int exit_code(Errc code) {
  switch (code) {
    case Errc::invalid_argument:
    case Errc::state: return 1;
    case Errc::shape:
    case Errc::format:
    case Errc::io: return 2;
    case Errc::network: return 3;
    case Errc::verification: return 4;
  }
  return 1;
}

namespace {

std::string fixed(double v, int precision) {
  std::ostringstream s;
  s << std::fixed << std::setprecision(precision) << v;
  return s.str();
}

std::size_t plain_packed_bytes(const BundleManifest& m) {
  std::size_t total = 0;
  for (const auto& t : m.tensors) total += packed_size(numel(t.shape), m.bits());
  return total;
}

}  // namespace

void cmd_convert(const ConvertArgs& args, std::ostream& out) {
  auto schedule = BitSchedule::parse(args.bits, args.schedule);
  auto model = load_portable_weights(args.weights);
  auto bundle = encode_bundle(model.spec, model.weights, schedule);
  write_bundle(args.output, bundle);

  const auto& m = bundle.manifest;
  const std::size_t payload = m.payload_bytes();
  const std::size_t plain = plain_packed_bytes(m);
  const double overhead = 100.0 * (double(payload) - double(plain)) / double(plain);
  if (args.json) {
    for (const auto& s : m.stages) {
      out << json{{"event", "stage"}, {"stage", s.stage}, {"bits", schedule.position(s.stage)}, {"width", s.width},
                  {"bytes", s.byte_length}, {"crc32", s.crc32}}
                 .dump()
          << '\n';
    }
    out << json{{"event", "summary"}, {"stages", m.stages.size()}, {"payload_bytes", payload}, {"packed_bytes", plain},
                {"overhead_percent", overhead}, {"output", args.output.string()}}
               .dump()
        << '\n';
    return;
  }
  out << "stage  bits  width  bytes\n";
  for (const auto& s : m.stages) {
    out << std::left << std::setw(7) << s.stage << std::setw(6) << schedule.position(s.stage) << std::setw(7) << s.width
        << s.byte_length << '\n';
  }
  out << "total payload " << payload << " bytes, " << m.bits() << "-bit packed " << plain << " bytes, overhead "
      << fixed(overhead, 3) << "%\n"
      << "wrote " << m.stages.size() << " stages to " << args.output.string() << '\n';
}

void cmd_train_demo(const TrainDemoArgs& args, std::ostream& out) {
  auto demo = train_demo(args.seed);
  std::error_code ec;
  std::filesystem::create_directories(args.output, ec);
  if (ec) throw Error(Errc::io, "cannot create " + args.output.string() + ": " + ec.message());
  save_portable_weights(args.output / "model.json", demo.spec, demo.weights);
  save_dataset(args.output / "train.json", demo.data.train);
  save_dataset(args.output / "test.json", demo.data.test);

  std::size_t params = 0;
  for (const auto& [name, t] : demo.weights) params += t.size();
  if (args.json) {
    out << json{{"event", "trained"}, {"seed", args.seed}, {"parameters", params},
                {"test_accuracy", demo.test_accuracy}, {"output", args.output.string()}}
               .dump()
        << '\n';
  } else {
    out << "trained " << params << " parameters, held-out accuracy " << fixed(demo.test_accuracy, 4) << '\n'
        << "wrote model.json, model.bin, train.json, test.json to " << args.output.string() << '\n';
  }
}

void cmd_infer(const InferArgs& args, std::ostream& out, const std::atomic<bool>* interrupt) {
  auto dataset = load_dataset(args.dataset);
  if (args.input >= dataset.samples.size()) {
    throw Error(Errc::invalid_argument, "input " + std::to_string(args.input) + " is outside the dataset");
  }
  const Tensor& input = dataset.samples[args.input].input;
  SessionOptions options;
  options.concurrent = args.concurrent;
  options.max_stages = args.stop_after;
  options.retries = args.retries;

  if (args.singleton) {
    auto report = singleton_session(args.url, input, options);
    const auto& r = report.result;
    if (args.json) {
      out << json{{"event", "singleton"}, {"bits", r.bits}, {"class", r.prediction.class_index},
                  {"confidence", r.prediction.confidence()}, {"elapsed_ms", report.total_ms}}
                 .dump()
          << std::endl;
    } else {
      out << "singleton bits " << r.bits << " class " << r.prediction.class_index << " confidence "
          << fixed(r.prediction.confidence(), 4) << " elapsed_ms " << fixed(report.total_ms, 1) << std::endl;
    }
    return;
  }

  auto control = std::make_shared<SessionControl>();
  std::atomic<bool> finished{false};
  std::thread watcher;
  if (interrupt) {
    watcher = std::thread([&] {
      while (!finished.load()) {
        if (interrupt->load()) {
          try {
            control->stop();
          } catch (const Error&) {
          }
          return;
        }
        std::this_thread::sleep_for(std::chrono::milliseconds(5));
      }
    });
  }

  int total = 0;
  SessionCallbacks callbacks;
  callbacks.on_manifest = [&](const BundleManifest& m) { total = m.schedule.stages(); };
  callbacks.on_result = [&](const StageResult& r) {
    if (args.json) {
      out << json{{"event", "stage"}, {"stage", r.stage}, {"total_stages", total}, {"bits", r.bits},
                  {"class", r.prediction.class_index}, {"confidence", r.prediction.confidence()},
                  {"elapsed_ms", r.timing.infer_end}}
                 .dump()
          << std::endl;
    } else {
      out << "stage " << r.stage << '/' << total << " bits " << r.bits << " class " << r.prediction.class_index
          << " confidence " << fixed(r.prediction.confidence(), 4) << " elapsed_ms " << fixed(r.timing.infer_end, 1)
          << std::endl;
    }
  };

  SessionReport report;
  try {
    report = progressive_session(args.url, input, options, callbacks, control);
  } catch (...) {
    finished = true;
    if (watcher.joinable()) watcher.join();
    throw;
  }
  finished = true;
  if (watcher.joinable()) watcher.join();
  if (args.json) {
    out << json{{"event", "done"}, {"stages_received", report.stages_received}, {"total_stages", report.total_stages},
                {"stopped", report.stopped}, {"total_ms", report.total_ms}}
               .dump()
        << std::endl;
  } else {
    out << (report.stopped ? "stopped" : "complete") << " after " << report.stages_received << '/'
        << report.total_stages << " stages, total_ms " << fixed(report.total_ms, 1) << std::endl;
  }
}

BenchReport cmd_bench(const BenchArgs& args, std::ostream& out) {
  auto bundle = read_bundle(args.bundle);
  auto dataset = load_dataset(args.dataset);
  if (args.input >= dataset.samples.size()) {
    throw Error(Errc::invalid_argument, "input " + std::to_string(args.input) + " is outside the dataset");
  }
  const auto& manifest = bundle.manifest;

  BenchReport report;
  {
    std::optional<PortableModel> original;
    if (!args.weights.empty()) original = load_portable_weights(args.weights);
    auto table = accuracy_by_stage(bundle, dataset, original ? &original->weights : nullptr);
    report.stage_accuracy_csv = table.to_csv();
    report.final_accuracy = table.stages.back().accuracy;
  }

  BundleServer server(args.bundle, {args.rate, args.tick});
  server.start();
  const Tensor& input = dataset.samples[args.input].input;

  SessionOptions options;
  if (args.rate > 0.0 && args.latency_fraction > 0.0) {
    const double stage_seconds = double(manifest.payload_bytes()) / manifest.schedule.stages() / args.rate;
    options.extra_inference_latency = std::chrono::duration<double>(args.latency_fraction * stage_seconds);
  }

  auto single = singleton_session(server.url(), input, options);
  report.modes.push_back({"singleton", single.total_ms, {single.result.timing.infer_end},
                          single.result.prediction.class_index});
  for (bool concurrent : {true, false}) {
    options.concurrent = concurrent;
    auto progressive = progressive_session(server.url(), input, options);
    BenchModeResult mode{concurrent ? "progressive-concurrent" : "progressive-serial", progressive.total_ms, {}, 0};
    for (const auto& r : progressive.results) mode.stage_ms.push_back(r.timing.infer_end);
    if (!progressive.results.empty()) mode.final_class = progressive.results.back().prediction.class_index;
    report.modes.push_back(std::move(mode));
  }
  server.stop();

  const double base = report.modes.front().total_ms;
  json modes = json::array();
  for (const auto& m : report.modes) {
    modes.push_back({{"mode", m.mode}, {"total_ms", m.total_ms}, {"relative_to_singleton", m.total_ms / base},
                     {"stage_ms", m.stage_ms}, {"final_class", m.final_class}, {"final_accuracy", report.final_accuracy}});
  }

  if (!args.output.empty()) {
    std::filesystem::create_directories(args.output);
    const auto& csv = report.stage_accuracy_csv;
    write_file(args.output / "stage_accuracy.csv", std::span(reinterpret_cast<const std::uint8_t*>(csv.data()), csv.size()));
    auto text = json{{"rate", args.rate}, {"payload_bytes", manifest.payload_bytes()}, {"modes", modes}}.dump(2);
    write_file(args.output / "bench.json", std::span(reinterpret_cast<const std::uint8_t*>(text.data()), text.size()));
  }

  if (args.json) {
    for (const auto& m : modes) {
      json event = m;
      event["event"] = "mode";
      out << event.dump() << '\n';
    }
    out << json{{"event", "stage_accuracy"}, {"csv", report.stage_accuracy_csv}}.dump() << '\n';
    return report;
  }

  out << "payload " << manifest.payload_bytes() << " bytes at " << (args.rate > 0 ? fixed(args.rate / 1e6, 3) + " MB/s" : "unlimited")
      << ", " << manifest.schedule.stages() << " stages\n\n";
  out << std::left << std::setw(24) << "mode" << std::setw(12) << "total_ms" << std::setw(10) << "vs_single"
      << std::setw(10) << "accuracy" << "stage_ms\n";
  for (const auto& m : report.modes) {
    std::string stages;
    for (std::size_t i = 0; i < m.stage_ms.size(); ++i) stages += (i ? " " : "") + fixed(m.stage_ms[i], 0);
    std::string rel = (m.total_ms >= base ? "+" : "") + fixed(100.0 * (m.total_ms / base - 1.0), 1) + "%";
    out << std::setw(24) << m.mode << std::setw(12) << fixed(m.total_ms, 1) << std::setw(10) << rel << std::setw(10)
        << fixed(report.final_accuracy, 4) << stages << '\n';
  }
  out << '\n' << report.stage_accuracy_csv;
  return report;
}

}  // namespace progrnet::cli
