#include "progrnet/control.hpp"

#include "httplib.h"
#include "progrnet/error.hpp"

namespace progrnet {

using nlohmann::json;
using Clock = std::chrono::steady_clock;

struct ControlService::Session {
  std::string id;
  std::string server_url;
  std::size_t input_id = 0;
  std::size_t true_label = 0;
  std::shared_ptr<SessionControl> control = std::make_shared<SessionControl>();
  Clock::time_point t0 = Clock::now();

  mutable std::mutex mutex;
  int stages_received = 0;
  int total_stages = 0;
  std::size_t bytes_received = 0;
  std::vector<StageResult> results;
  std::string error;
  bool finished = false;
  double finished_ms = 0.0;

  std::thread worker;

  json to_json() const {
    std::lock_guard lock(mutex);
    json stages = json::array();
    for (const auto& r : results) {
      stages.push_back({{"stage", r.stage},
                        {"bits", r.bits},
                        {"predicted_class", r.prediction.class_index},
                        {"confidence", r.prediction.confidence()},
                        {"probabilities", r.prediction.probabilities},
                        {"transfer_start_ms", r.timing.transfer_start},
                        {"transfer_end_ms", r.timing.transfer_end},
                        {"infer_start_ms", r.timing.infer_start},
                        {"infer_end_ms", r.timing.infer_end}});
    }
    double elapsed = finished ? finished_ms : std::chrono::duration<double, std::milli>(Clock::now() - t0).count();
    return {{"id", id},
            {"status", status_name(control->status())},
            {"server_url", server_url},
            {"input_id", input_id},
            {"true_label", true_label},
            {"stages_received", stages_received},
            {"total_stages", total_stages},
            {"bytes_received", bytes_received},
            {"elapsed_ms", elapsed},
            {"stages", stages},
            {"error", error.empty() ? json(nullptr) : json(error)}};
  }
};

ControlService::ControlService(ControlConfig config) : config_(std::move(config)) {
  if (config_.inputs.samples.empty()) throw Error(Errc::invalid_argument, "control service needs at least one demo input");
}

ControlService::~ControlService() {
  stop();
  std::map<std::string, std::shared_ptr<Session>> sessions;
  {
    std::lock_guard lock(mutex_);
    sessions.swap(sessions_);
  }
  for (auto& [id, s] : sessions) {
    if (s->control->status() != SessionStatus::complete) s->control->stop();
    if (s->worker.joinable()) s->worker.join();
  }
}

std::string ControlService::url() const { return "http://127.0.0.1:" + std::to_string(port_); }

std::string ControlService::create_session(const std::string& server_url, std::size_t input_id) {
  if (input_id >= config_.inputs.samples.size() || input_id >= config_.max_inputs) {
    throw Error(Errc::invalid_argument, "unknown input id " + std::to_string(input_id));
  }
  auto session = std::make_shared<Session>();
  session->server_url = server_url;
  session->input_id = input_id;
  session->true_label = config_.inputs.samples[input_id].label;
  {
    std::lock_guard lock(mutex_);
    session->id = "s" + std::to_string(next_id_++);
    sessions_[session->id] = session;
  }

  session->worker = std::thread([this, s = session.get()] {
    SessionCallbacks callbacks;
    callbacks.on_manifest = [s](const BundleManifest& m) {
      std::lock_guard lock(s->mutex);
      s->total_stages = m.schedule.stages();
    };
    callbacks.on_stage_received = [s](const TransferRecord& r) {
      std::lock_guard lock(s->mutex);
      s->stages_received = r.stage;
      s->bytes_received += r.bytes;
    };
    callbacks.on_result = [s](const StageResult& r) {
      std::lock_guard lock(s->mutex);
      s->results.push_back(r);
    };
    try {
      progressive_session(s->server_url, config_.inputs.samples[s->input_id].input, config_.session_options, callbacks,
                          s->control);
    } catch (const std::exception& e) {
      {
        std::lock_guard lock(s->mutex);
        s->error = e.what();
      }
      if (s->control->status() != SessionStatus::complete) s->control->stop();
    }
    std::lock_guard lock(s->mutex);
    s->finished = true;
    s->finished_ms = std::chrono::duration<double, std::milli>(Clock::now() - s->t0).count();
  });
  return session->id;
}

std::shared_ptr<ControlService::Session> ControlService::find(const std::string& id) const {
  std::lock_guard lock(mutex_);
  auto it = sessions_.find(id);
  if (it == sessions_.end()) throw Error(Errc::invalid_argument, "unknown session " + id);
  return it->second;
}

json ControlService::snapshot(const std::string& id) const { return find(id)->to_json(); }

json ControlService::pause(const std::string& id) {
  auto s = find(id);
  s->control->pause();
  return s->to_json();
}

json ControlService::resume(const std::string& id) {
  auto s = find(id);
  s->control->resume();
  return s->to_json();
}

json ControlService::stop_session(const std::string& id) {
  auto s = find(id);
  s->control->stop();
  return s->to_json();
}

json ControlService::inputs() const {
  json out = json::array();
  const auto& samples = config_.inputs.samples;
  for (std::size_t i = 0; i < samples.size() && i < config_.max_inputs; ++i) {
    auto data = samples[i].input.data();
    std::vector<float> preview(data.begin(), data.begin() + std::min<std::size_t>(16, data.size()));
    out.push_back({{"id", i}, {"label", samples[i].label}, {"preview", preview}});
  }
  return out;
}

namespace {

void reply(httplib::Response& res, int status, const json& body) {
  res.status = status;
  res.set_content(body.dump(), "application/json");
}

template <typename F>
void guarded(httplib::Response& res, F&& f) {
  try {
    f();
  } catch (const Error& e) {
    int status = 400;
    if (e.code() == Errc::state) status = 409;
    if (std::string_view(e.what()).starts_with("unknown session")) status = 404;
    reply(res, status, {{"error", e.what()}});
  } catch (const json::exception& e) {
    reply(res, 400, {{"error", std::string("malformed request: ") + e.what()}});
  }
}

}  // namespace

int ControlService::start(int port, const std::string& host) {
  if (http_) throw Error(Errc::state, "control service already started");
  http_ = std::make_unique<httplib::Server>();
  http_->set_tcp_nodelay(true);
  http_->set_default_headers({{"Access-Control-Allow-Origin", "*"},
                              {"Access-Control-Allow-Headers", "Content-Type"},
                              {"Access-Control-Allow-Methods", "GET, POST, OPTIONS"}});
  http_->Options(R"(.*)", [](const httplib::Request&, httplib::Response& res) { res.status = 204; });

  http_->Get("/inputs", [this](const httplib::Request&, httplib::Response& res) { reply(res, 200, inputs()); });
  http_->Post("/session", [this](const httplib::Request& req, httplib::Response& res) {
    guarded(res, [&] {
      auto body = json::parse(req.body);
      auto id = create_session(body.at("server_url").get<std::string>(), body.at("input_id").get<std::size_t>());
      reply(res, 201, {{"id", id}});
    });
  });
  http_->Get(R"(/session/([^/]+))", [this](const httplib::Request& req, httplib::Response& res) {
    guarded(res, [&] { reply(res, 200, snapshot(req.matches[1].str())); });
  });
  http_->Post(R"(/session/([^/]+)/(pause|resume|stop))", [this](const httplib::Request& req, httplib::Response& res) {
    guarded(res, [&] {
      auto id = req.matches[1].str();
      auto action = req.matches[2].str();
      if (action == "pause") {
        reply(res, 200, pause(id));
      } else if (action == "resume") {
        reply(res, 200, resume(id));
      } else {
        reply(res, 200, stop_session(id));
      }
    });
  });

  port_ = port == 0 ? http_->bind_to_any_port(host) : (http_->bind_to_port(host, port) ? port : -1);
  if (port_ <= 0) {
    http_.reset();
    throw Error(Errc::network, "cannot bind " + host + ":" + std::to_string(port));
  }
  thread_ = std::thread([this] { http_->listen_after_bind(); });
  http_->wait_until_ready();
  return port_;
}

void ControlService::stop() {
  if (!http_) return;
  http_->stop();
  if (thread_.joinable()) thread_.join();
  http_.reset();
}

}  // namespace progrnet
