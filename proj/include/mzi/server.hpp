#pragma once

#include <atomic>
#include <chrono>
#include <memory>
#include <string>
#include <thread>

#include "httplib.h"
#include "live.hpp"

namespace mzi::live {

struct ServerOptions {
  bool auto_tick{true};          // drive session clocks from wall time
  double tick_interval{0.01};    // wall seconds between ticker passes
  double heartbeat_period{1.0};  // idle keep-alive period, wall seconds
  double poll_timeout{1.0};      // longest a JSON poll or SSE wait blocks, wall seconds
};

/// HTTP front end over a SessionManager.
///
///   POST /session               create from a config body -> {id, token}
///   POST /session/{id}/cmd      {cmd, element?, rate?, id?}, control token required
///   GET  /session/{id}/events   SSE stream; ?since=N, ?max=N, ?format=json for one poll
///   GET  /session/{id}/log      exportable command log
///   GET  /session/{id}          current state snapshot
class Server {
 public:
  explicit Server(ServerOptions opt = {}) : opt_(opt) { routes(); }
  ~Server() { stop(); }
  Server(const Server&) = delete;
  Server& operator=(const Server&) = delete;

  SessionManager& sessions() { return sessions_; }

  /// Bind to host:port (port 0 picks a free one); returns the bound port.
  int bind(const std::string& host, int port) {
    const int bound = port == 0 ? http_.bind_to_any_port(host) : (http_.bind_to_port(host, port) ? port : -1);
    if (bound < 0) throw ConfigurationError("cannot bind " + host + ":" + std::to_string(port));
    return bound;
  }

  /// Serve on a background thread; returns once the listener is up.
  void start() {
    running_ = true;
    if (opt_.auto_tick) ticker_ = std::thread([this] { tick_loop(); });
    listener_ = std::thread([this] { http_.listen_after_bind(); });
    http_.wait_until_ready();
  }

  void stop() {
    running_ = false;
    for (const auto& slot : sessions_.all()) slot->wakeup.notify_all();
    http_.stop();
    if (listener_.joinable()) listener_.join();
    if (ticker_.joinable()) ticker_.join();
  }

 private:
  static void reply(httplib::Response& res, int status, json body) {
    body["protocol"] = kProtocolVersion;
    res.status = status;
    res.set_content(body.dump(), "application/json");
  }

  static std::string sse(const Event& e) {
    return "id: " + std::to_string(e.seq) + "\nevent: " + e.type + "\ndata: " + to_json(e).dump() + "\n\n";
  }

  static std::uint64_t param_u64(const httplib::Request& req, const char* key, std::uint64_t dflt) {
    if (!req.has_param(key)) return dflt;
    try {
      return std::stoull(req.get_param_value(key));
    } catch (const std::exception&) {
      throw ConfigurationError(std::string("bad query parameter ") + key);
    }
  }

  void routes() {
    http_.Post("/session", [this](const httplib::Request& req, httplib::Response& res) {
      try {
        const auto body = req.body.empty() ? json::object() : json::parse(req.body);
        const auto [id, token] = sessions_.create(config_from_json(body));
        reply(res, 201, {{"id", id}, {"token", token}, {"phase", "idle"}});
      } catch (const json::exception& e) {
        reply(res, 400, {{"error", std::string("malformed JSON: ") + e.what()}});
      } catch (const Error& e) {
        reply(res, 400, {{"error", e.what()}});
      }
    });

    http_.Post("/session/:id/cmd", [this](const httplib::Request& req, httplib::Response& res) {
      const auto slot = sessions_.find(req.path_params.at("id"));
      if (!slot) return reply(res, 404, {{"error", "unknown session"}});
      Command cmd;
      std::string token = req.get_header_value("X-Control-Token");
      try {
        const auto body = json::parse(req.body);
        if (body.contains("token")) token = body.at("token").get<std::string>();
        cmd = command_from_json(body);
      } catch (const json::exception& e) {
        return reply(res, 400, {{"error", std::string("malformed JSON: ") + e.what()}});
      } catch (const Error& e) {
        return reply(res, 400, {{"error", e.what()}});
      }
      Ack ack;
      {
        std::lock_guard lock(slot->mutex);
        if (token != slot->control_token)
          return reply(res, 403, {{"error", "read-only client: control token required"}});
        ack = slot->session->command(cmd);
      }
      slot->wakeup.notify_all();
      json body{{"accepted", ack.accepted}, {"seq", ack.seq}};
      if (!ack.reason.empty()) body["reason"] = ack.reason;
      reply(res, ack.accepted ? 200 : 409, body);
    });

    http_.Get("/session/:id/events", [this](const httplib::Request& req, httplib::Response& res) {
      const bool as_json = req.get_param_value("format") == "json";
      std::uint64_t since = 0, max = 0;
      try {
        since = param_u64(req, "since", 0);
        max = param_u64(req, "max", 0);
      } catch (const Error& e) {
        return reply(res, 400, {{"error", e.what()}});
      }
      const auto slot = sessions_.find(req.path_params.at("id"));
      if (!slot) {
        const Event err{0, "error", 0.0, {{"reason", "unknown session"}, {"terminal", true}}};
        res.status = 404;
        if (as_json)
          res.set_content(json{{"protocol", kProtocolVersion}, {"events", json::array({to_json(err)})}}.dump(),
                          "application/json");
        else
          res.set_content(sse(err), "text/event-stream");
        return;
      }
      if (as_json) return poll(*slot, since, max, res);
      res.set_header("Cache-Control", "no-cache");
      res.set_chunked_content_provider(
          "text/event-stream", [this, slot, next = since, sent = std::uint64_t{0}, max](
                                   std::size_t, httplib::DataSink& sink) mutable {
            std::vector<Event> batch;
            bool gap = false;
            {
              std::unique_lock lock(slot->mutex);
              slot->wakeup.wait_for(lock, std::chrono::duration<double>(opt_.poll_timeout), [&] {
                return !running_ || slot->session->next_seq() > next;
              });
              gap = next < slot->session->oldest_seq();
              batch = slot->session->events_since(next);
            }
            if (gap) {
              const Event err{next, "error", 0.0, {{"reason", "events dropped from the ring"}, {"terminal", true}}};
              const auto s = sse(err);
              sink.write(s.data(), s.size());
              sink.done();
              return true;
            }
            for (const auto& e : batch) {
              const auto s = sse(e);
              if (!sink.write(s.data(), s.size())) return false;
              next = e.seq + 1;
              if (max && ++sent >= max) {
                sink.done();
                return true;
              }
            }
            if (!running_) sink.done();
            return true;
          });
    });

    http_.Get("/session/:id/log", [this](const httplib::Request& req, httplib::Response& res) {
      const auto slot = sessions_.find(req.path_params.at("id"));
      if (!slot) return reply(res, 404, {{"error", "unknown session"}});
      std::lock_guard lock(slot->mutex);
      reply(res, 200, to_json(export_log(*slot->session)));
    });

    http_.Get("/session/:id", [this](const httplib::Request& req, httplib::Response& res) {
      const auto slot = sessions_.find(req.path_params.at("id"));
      if (!slot) return reply(res, 404, {{"error", "unknown session"}});
      std::lock_guard lock(slot->mutex);
      json body = slot->session->snapshot();
      body["clock"] = slot->session->clock();
      body["next_seq"] = slot->session->next_seq();
      reply(res, 200, body);
    });
  }

  // One JSON poll: whatever is available since `since`, waiting briefly if nothing is.
  void poll(SessionSlot& slot, std::uint64_t since, std::uint64_t max, httplib::Response& res) {
    std::unique_lock lock(slot.mutex);
    slot.wakeup.wait_for(lock, std::chrono::duration<double>(opt_.poll_timeout),
                         [&] { return !running_ || slot.session->next_seq() > since; });
    json events = json::array();
    if (since < slot.session->oldest_seq()) {
      events.push_back(to_json(Event{since, "error", 0.0, {{"reason", "events dropped from the ring"}, {"terminal", true}}}));
      return reply(res, 410, {{"events", events}, {"next", slot.session->oldest_seq()}});
    }
    std::uint64_t next = since;
    for (const auto& e : slot.session->events_since(since)) {
      if (max && events.size() >= max) break;
      events.push_back(to_json(e));
      next = e.seq + 1;
    }
    reply(res, 200, {{"events", events}, {"next", next}});
  }

  void tick_loop() {
    using clock = std::chrono::steady_clock;
    auto last = clock::now();
    while (running_) {
      std::this_thread::sleep_for(std::chrono::duration<double>(opt_.tick_interval));
      const auto now = clock::now();
      sessions_.advance(std::chrono::duration<double>(now - last).count(), opt_.heartbeat_period);
      last = now;
    }
  }

  ServerOptions opt_;
  SessionManager sessions_;
  httplib::Server http_;
  std::atomic<bool> running_{false};
  std::thread ticker_;
  std::thread listener_;
};

}  // namespace mzi::live
