#pragma once

#include <algorithm>
#include <atomic>
#include <chrono>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <mutex>
#include <string>
#include <thread>
#include <vector>

#include "adapmen/config.hpp"
#include "adapmen/hitl/protocol.hpp"
#include "adapmen/hitl/session.hpp"
#include "adapmen/hitl/websocket.hpp"

namespace adapmen::hitl {

struct ServerOptions {
  std::string host = "127.0.0.1";
  std::uint16_t port = 0;  // 0 picks a free port
  std::string log_dir;     // empty uses config.session.log_dir
};

/**
 * Multi-session WebSocket server. Each connection gets its own Session on
 * its own thread; sessions share only the read-only config. WebSocket
 * upgrades are accepted on any path; a plain GET /health answers with the
 * server hello.
 */
class Server {
 public:
  /// Binds immediately, so a taken port fails here rather than in run().
  Server(ExperimentConfig config, ServerOptions options)
      : config_(std::move(config)),
        options_(std::move(options)),
        listener_(ws::listen_tcp(options_.host, options_.port)),
        port_(ws::local_port(listener_)) {
    if (options_.log_dir.empty()) options_.log_dir = config_.session.log_dir;
    std::filesystem::create_directories(options_.log_dir);
  }

  std::uint16_t port() const { return port_; }
  const std::string& log_dir() const { return options_.log_dir; }
  std::uint64_t sessions_started() const { return next_id_.load() - 1; }

  static std::string log_path(const std::string& dir, std::uint64_t id) {
    return (std::filesystem::path(dir) / ("session-" + std::to_string(id) + ".jsonl")).string();
  }

  /// Accepts connections until `stop` is set, then waits for the workers.
  void run(const std::atomic<bool>& stop) {
    std::vector<std::thread> workers;
    while (!stop.load()) {
      if (!ws::wait_readable(listener_.get(), 100)) continue;
      ws::Fd client(::accept(listener_.get(), nullptr, nullptr));
      if (!client.valid()) continue;
      workers.emplace_back([this, &stop, fd = std::move(client)]() mutable { serve(std::move(fd), stop); });
    }
    for (auto& w : workers) w.join();
  }

 private:
  using Clock = std::chrono::steady_clock;

  json server_hello() const {
    return {{"type", "hello"},
            {"version", kProtocolVersion},
            {"service", "adapmen-hitl"},
            {"mode", to_string(config_.session.mode)}};
  }

  static void send_all(ws::Connection& conn, const std::vector<json>& msgs) {
    for (const auto& m : msgs) conn.send_text(m.dump());
  }

  void serve(ws::Fd fd, const std::atomic<bool>& stop) {
    ws::Connection conn(std::move(fd), ws::Connection::Role::server);
    try {
      const ws::HttpRequest req = conn.read_http_request();
      if (!ws::Connection::is_upgrade(req)) {
        if (req.method == "GET" && req.path == "/health")
          conn.send_http(200, "OK", "application/json", server_hello().dump());
        else
          conn.send_http(404, "Not Found", "text/plain", "not found\n");
        return;
      }
      conn.accept_upgrade(req);
      run_session(conn, stop);
    } catch (const std::exception& e) {
      std::lock_guard<std::mutex> lock(err_mutex_);
      std::cerr << "adapmen serve: connection ended: " << e.what() << '\n';
    }
    conn.send_close();
  }

  void run_session(ws::Connection& conn, const std::atomic<bool>& stop) {
    std::optional<ClientMessage> hello;
    while (!stop.load() && !hello) {
      const auto r = conn.receive(100);
      if (r.status == ws::RecvStatus::closed) return;
      if (r.status == ws::RecvStatus::timeout) continue;
      try {
        const ClientMessage msg = parse_client_message(r.text);
        if (msg.kind != MessageKind::hello) {
          conn.send_text(make_error(error_code::not_started, "send hello first").dump());
          continue;
        }
        if (msg.version != kProtocolVersion) {
          conn.send_text(make_error(error_code::version_mismatch,
                                    "server speaks version " + std::to_string(kProtocolVersion))
                             .dump());
          return;
        }
        hello = msg;
      } catch (const std::invalid_argument& e) {
        conn.send_text(make_error(error_code::bad_message, e.what()).dump());
      }
    }
    if (!hello) return;

    const std::uint64_t id = next_id_.fetch_add(1);
    const std::uint64_t seed = hello->seed.value_or(config_.seeds.front());
    std::ofstream log(log_path(options_.log_dir, id));
    Session session(id, config_, seed, &log);
    send_all(conn, session.hello());

    const auto timeout = std::chrono::milliseconds(config_.session.timeout_ms);
    const int step_delay = static_cast<int>(config_.session.step_delay_ms);
    auto waiting_since = Clock::now();
    while (!stop.load() && conn.open()) {
      int wait_ms = 100;
      if (session.awaiting_human() && config_.session.timeout_ms > 0) {
        const auto left = std::chrono::duration_cast<std::chrono::milliseconds>(timeout - (Clock::now() - waiting_since));
        if (left.count() <= 0) {
          send_all(conn, session.timeout());
          waiting_since = Clock::now();
          continue;
        }
        wait_ms = std::min<int>(wait_ms, static_cast<int>(left.count()));
      } else if (!session.awaiting_human() && !session.done()) {
        wait_ms = step_delay;
      }
      const auto r = conn.receive(wait_ms);
      if (r.status == ws::RecvStatus::closed) break;
      if (r.status == ws::RecvStatus::message) {
        try {
          send_all(conn, session.handle(parse_client_message(r.text)));
        } catch (const std::invalid_argument& e) {
          conn.send_text(make_error(error_code::bad_message, e.what()).dump());
        }
        waiting_since = Clock::now();
        continue;
      }
      if (!session.awaiting_human() && !session.done()) {
        send_all(conn, session.step(std::nullopt));
        waiting_since = Clock::now();
      }
    }
    log.flush();
  }

  ExperimentConfig config_;
  ServerOptions options_;
  ws::Fd listener_;
  std::uint16_t port_;
  std::atomic<std::uint64_t> next_id_{1};
  std::mutex err_mutex_;
};

}  // namespace adapmen::hitl
