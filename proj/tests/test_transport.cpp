#include <httplib.h>

#include <atomic>
#include <chrono>
#include <thread>

#include "doctest.h"
#include "progrnet/error.hpp"
#include "progrnet/format.hpp"
#include "progrnet/inference.hpp"
#include "progrnet/server.hpp"
#include "progrnet/session.hpp"
#include "progrnet/throttle.hpp"
#include "progrnet/weights_io.hpp"
#include "test_util.hpp"

using namespace progrnet;
using namespace std::chrono_literals;

namespace {

ModelSpec mlp_spec() { return ModelSpec{{16}, {Dense{16, 64, Activation::relu}, Dense{64, 4, Activation::softmax}}}; }

Bundle write_test_bundle(const std::filesystem::path& dir, const ModelSpec& spec, const BitSchedule& schedule,
                         std::uint64_t seed = 1) {
  auto bundle = encode_bundle(spec, test::random_weights(spec, seed), schedule);
  write_bundle(dir, bundle);
  return bundle;
}

/// Stage requests seen by the server. Entries are logged when the server
/// finishes a response, which can trail the client by a moment, so this waits
/// (briefly) for `expected` entries to appear.
std::vector<std::string> stage_paths(const BundleServer& server, std::size_t expected = 0) {
  auto deadline = std::chrono::steady_clock::now() + 2s;
  for (;;) {
    std::vector<std::string> paths;
    for (const auto& e : server.request_log()) {
      if (e.path.rfind("/stage/", 0) == 0) paths.push_back(e.path);
    }
    if (paths.size() >= expected || std::chrono::steady_clock::now() > deadline) return paths;
    std::this_thread::sleep_for(5ms);
  }
}

/// Serves a bundle through hand-written handlers so tests can misbehave on purpose.
struct FaultyServer {
  httplib::Server http;
  std::thread thread;
  int port = 0;

  FaultyServer() = default;
  void start() {
    port = http.bind_to_any_port("127.0.0.1");
    thread = std::thread([this] { http.listen_after_bind(); });
    http.wait_until_ready();
  }
  ~FaultyServer() {
    http.stop();
    if (thread.joinable()) thread.join();
  }
  std::string url() const { return "http://127.0.0.1:" + std::to_string(port); }
};

std::string as_string(const std::vector<std::uint8_t>& v) { return {v.begin(), v.end()}; }

}  // namespace

TEST_SUITE("transport") {
  TEST_CASE("parse_rate units") {
    CHECK(parse_rate("1MB/s") == 1e6);
    CHECK(parse_rate("0.5 MB/s") == 5e5);
    CHECK(parse_rate("200KB/s") == 2e5);
    CHECK(parse_rate("1MiB/s") == 1048576.0);
    CHECK(parse_rate("2KiB") == 2048.0);
    CHECK(parse_rate("250000") == 250000.0);
    CHECK(parse_rate("unlimited") == 0.0);
    CHECK(parse_rate("0") == 0.0);
    CHECK_THROWS_AS(parse_rate("fast"), Error);
    CHECK_THROWS_AS(parse_rate("-1MB/s"), Error);
  }

  TEST_CASE("token bucket paces writes without an initial burst") {
    TokenBucket bucket(ThrottleConfig{1e5, 10ms});
    CHECK(bucket.chunk_bytes() == 1000);
    auto t0 = std::chrono::steady_clock::now();
    bucket.start();
    for (int i = 0; i < 20; ++i) bucket.acquire(1000);
    const double s = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    CHECK(s >= 0.19);
    CHECK(s < 0.3);
    CHECK(TokenBucket(ThrottleConfig{}).unlimited());
  }

  TEST_CASE("a 1 MB stage at 0.5 MB/s takes 2 s") {
    test::TempDir dir;
    ModelSpec spec{{1000}, {Dense{1000, 500}}};
    write_test_bundle(dir.path, spec, BitSchedule(16, {16}));
    BundleServer server(dir.path, ThrottleConfig{parse_rate("0.5MB/s"), 10ms});
    server.start();
    const auto expected_bytes = server.manifest().stage(1).byte_length;
    REQUIRE(expected_bytes == 1001000);

    auto t0 = std::chrono::steady_clock::now();
    auto body = http_get(server.url(), "/stage/1");
    const double s = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    CHECK(body.size() == expected_bytes);
    const double ideal = double(expected_bytes) / 5e5;
    CHECK(s >= ideal * 0.95);
    CHECK(s <= ideal * 1.05);

    stage_paths(server, 1);
    auto log = server.request_log();
    REQUIRE(log.size() == 1);
    CHECK(log[0].path == "/stage/1");
    CHECK(log[0].bytes == expected_bytes);
    CHECK(log[0].status == 200);
    CHECK(log[0].completed);
    CHECK(log[0].duration_ms == doctest::Approx(ideal * 1000).epsilon(0.05));
  }

  TEST_CASE("server routes") {
    test::TempDir dir;
    auto bundle = write_test_bundle(dir.path, mlp_spec(), BitSchedule::default_for());
    BundleServer server(dir.path, ThrottleConfig{});
    server.start();

    auto first = http_get(server.url(), "/manifest");
    auto second = http_get(server.url(), "/manifest");
    CHECK(first == second);
    CHECK(manifest_text(parse_manifest(first)) == manifest_text(bundle.manifest));
    CHECK(http_get(server.url(), "/stage/3") == as_string(bundle.blobs[2].bytes));

    std::string singleton;
    for (const auto& b : bundle.blobs) singleton += as_string(b.bytes);
    CHECK(http_get(server.url(), "/weights-singleton") == singleton);

    try {
      http_get(server.url(), "/stage/99", 1);
      FAIL("expected a 404");
    } catch (const Error& e) {
      CHECK(e.code() == Errc::network);
      CHECK(std::string(e.what()).find("404") != std::string::npos);
    }
    auto log = server.request_log();
    REQUIRE_FALSE(log.empty());
    CHECK(log.back().path == "/stage/99");
    CHECK(log.back().status == 404);

    auto line = nlohmann::json::parse(log_entry_json(log.front()));
    CHECK(line["path"] == "/manifest");
    CHECK(line.contains("duration_ms"));
  }

  TEST_CASE("progressive session reaches the singleton prediction") {
    test::TempDir dir;
    write_test_bundle(dir.path, mlp_spec(), BitSchedule::default_for());
    BundleServer server(dir.path, ThrottleConfig{});
    server.start();
    auto input = test::random_input({16}, 77);

    for (bool concurrent : {true, false}) {
      SessionOptions opts;
      opts.concurrent = concurrent;
      auto report = progressive_session(server.url(), input, opts);
      CHECK_FALSE(report.stopped);
      CHECK(report.stages_received == 8);
      REQUIRE_FALSE(report.results.empty());
      CHECK(report.results.back().stage == 8);
      CHECK(report.results.back().bits == 16);
      auto single = singleton_session(server.url(), input);
      CHECK(single.result.prediction.class_index == report.results.back().prediction.class_index);
      CHECK(single.result.prediction.probabilities == report.results.back().prediction.probabilities);
    }
  }

  TEST_CASE("max_stages never requests later stages") {
    test::TempDir dir;
    write_test_bundle(dir.path, mlp_spec(), BitSchedule::default_for());
    BundleServer server(dir.path, ThrottleConfig{2e5, 10ms});
    server.start();
    for (int m : {1, 3}) {
      server.clear_log();
      SessionOptions opts;
      opts.max_stages = m;
      auto report = progressive_session(server.url(), test::random_input({16}, 1), opts);
      CHECK(report.stopped);
      CHECK(report.stages_received == m);
      CHECK(report.results.back().stage == m);
      auto paths = stage_paths(server, std::size_t(m));
      REQUIRE(paths.size() == std::size_t(m));
      CHECK(paths.back() == "/stage/" + std::to_string(m));
    }
  }

  TEST_CASE("stopping from on_result in serial mode issues no further request") {
    test::TempDir dir;
    write_test_bundle(dir.path, mlp_spec(), BitSchedule::default_for());
    BundleServer server(dir.path, ThrottleConfig{});
    server.start();
    auto control = std::make_shared<SessionControl>();
    SessionOptions opts;
    opts.concurrent = false;
    SessionCallbacks cb;
    cb.on_result = [&](const StageResult& r) {
      if (r.stage == 2) control->stop();
    };
    auto report = progressive_session(server.url(), test::random_input({16}, 2), opts, cb, control);
    CHECK(report.stopped);
    CHECK(control->status() == SessionStatus::stopped);
    CHECK(stage_paths(server, 2) == std::vector<std::string>{"/stage/1", "/stage/2"});
  }

  TEST_CASE("before_request can veto a stage") {
    test::TempDir dir;
    write_test_bundle(dir.path, mlp_spec(), BitSchedule::default_for());
    BundleServer server(dir.path, ThrottleConfig{});
    server.start();
    SessionCallbacks cb;
    cb.before_request = [](int stage) { return stage <= 4; };
    auto report = progressive_session(server.url(), test::random_input({16}, 3), {}, cb);
    CHECK(report.stopped);
    CHECK(report.stages_received == 4);
    CHECK(stage_paths(server, 4).size() == 4);
  }

  TEST_CASE("concurrent mode overlaps inference with the next transfer") {
    test::TempDir dir;
    ModelSpec spec{{64}, {Dense{64, 512, Activation::relu}, Dense{512, 4}}};
    write_test_bundle(dir.path, spec, BitSchedule::default_for());
    // About 8.3 KB per stage at 200 KB/s: roughly 40 ms per transfer.
    BundleServer server(dir.path, ThrottleConfig{2e5, 5ms});
    server.start();
    SessionOptions opts;
    opts.extra_inference_latency = 20ms;
    auto report = progressive_session(server.url(), test::random_input({64}, 4), opts);
    REQUIRE(report.transfers.size() == 8);
    bool overlapped = false;
    for (const auto& r : report.results) {
      for (const auto& t : report.transfers) {
        if (t.stage == r.stage + 1 && r.timing.infer_start < t.end_ms && t.start_ms < r.timing.infer_end) {
          overlapped = true;
        }
      }
    }
    CHECK(overlapped);
    // Transfers run back to back: no gap waits on inference.
    for (std::size_t i = 1; i < report.transfers.size(); ++i) {
      CHECK(report.transfers[i].start_ms - report.transfers[i - 1].end_ms < 15.0);
    }
  }

  TEST_CASE("pause holds the download until resume") {
    test::TempDir dir;
    write_test_bundle(dir.path, mlp_spec(), BitSchedule::default_for());
    BundleServer server(dir.path, ThrottleConfig{});
    server.start();
    auto control = std::make_shared<SessionControl>();
    std::thread resumer;
    double paused_at = 0.0;
    SessionCallbacks cb;
    cb.on_stage_received = [&](const TransferRecord& t) {
      if (t.stage == 2) {
        control->pause();
        paused_at = t.end_ms;
        resumer = std::thread([control] {
          std::this_thread::sleep_for(300ms);
          control->resume();
        });
      }
    };
    auto report = progressive_session(server.url(), test::random_input({16}, 5), {}, cb, control);
    resumer.join();
    CHECK_FALSE(report.stopped);
    CHECK(control->status() == SessionStatus::complete);
    REQUIRE(report.transfers.size() == 8);
    CHECK(report.transfers[2].start_ms - paused_at >= 250.0);
  }

  TEST_CASE("control transitions") {
    SessionControl c;
    c.pause();
    c.pause();
    CHECK(c.status() == SessionStatus::paused);
    c.resume();
    c.stop();
    CHECK_THROWS_AS(c.resume(), Error);
    CHECK_THROWS_AS(c.pause(), Error);
    SessionControl done;
    done.complete();
    CHECK_THROWS_AS(done.stop(), Error);
  }

  TEST_CASE("a corrupted stage is fetched again once") {
    test::TempDir dir;
    auto bundle = write_test_bundle(dir.path, mlp_spec(), BitSchedule::default_for());
    const auto manifest = manifest_text(bundle.manifest);
    std::atomic<int> stage2_hits{0};
    std::atomic<bool> always_corrupt{false};

    FaultyServer faulty;
    faulty.http.Get("/manifest", [&](const httplib::Request&, httplib::Response& res) {
      res.set_content(manifest, "application/json");
    });
    faulty.http.Get(R"(/stage/(\d+))", [&](const httplib::Request& req, httplib::Response& res) {
      const int m = std::stoi(req.matches[1]);
      auto body = as_string(bundle.blobs[m - 1].bytes);
      if (m == 2 && (stage2_hits++ == 0 || always_corrupt)) body[0] ^= 0x01;
      res.set_content(body, "application/octet-stream");
    });
    faulty.start();

    auto report = progressive_session(faulty.url(), test::random_input({16}, 6));
    CHECK(report.stages_received == 8);
    CHECK(stage2_hits == 2);

    always_corrupt = true;
    try {
      progressive_session(faulty.url(), test::random_input({16}, 6));
      FAIL("expected a checksum error");
    } catch (const Error& e) {
      CHECK(e.code() == Errc::verification);
    }
  }

  TEST_CASE("a dropped connection is retried") {
    test::TempDir dir;
    auto bundle = write_test_bundle(dir.path, mlp_spec(), BitSchedule::default_for());
    const auto manifest = manifest_text(bundle.manifest);
    std::atomic<int> stage1_hits{0};

    FaultyServer faulty;
    faulty.http.Get("/manifest", [&](const httplib::Request&, httplib::Response& res) {
      res.set_content(manifest, "application/json");
    });
    faulty.http.Get(R"(/stage/(\d+))", [&](const httplib::Request& req, httplib::Response& res) {
      const int m = std::stoi(req.matches[1]);
      auto body = std::make_shared<std::string>(as_string(bundle.blobs[m - 1].bytes));
      const bool drop = m == 1 && stage1_hits++ == 0;
      res.set_content_provider(body->size(), "application/octet-stream",
                               [body, drop](std::size_t offset, std::size_t, httplib::DataSink& sink) {
                                 if (drop) {
                                   sink.write(body->data(), body->size() / 2);
                                   return false;  // abort mid-body
                                 }
                                 sink.write(body->data() + offset, body->size() - offset);
                                 return true;
                               });
    });
    faulty.start();

    auto report = progressive_session(faulty.url(), test::random_input({16}, 7));
    CHECK(report.stages_received == 8);
    CHECK(stage1_hits == 2);
  }

  TEST_CASE("unreachable server is a network error") {
    SessionOptions opts;
    opts.retries = 1;
    try {
      progressive_session("http://127.0.0.1:1", test::random_input({16}, 8), opts);
      FAIL("expected a network error");
    } catch (const Error& e) {
      CHECK(e.code() == Errc::network);
    }
  }
}
