#include <gtest/gtest.h>

#include <arpa/inet.h>
#include <sys/socket.h>
#include <unistd.h>

#include <atomic>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <thread>

#include "adapmen/hitl/protocol.hpp"
#include "adapmen/hitl/server.hpp"
#include "adapmen/hitl/session.hpp"
#include "adapmen/hitl/websocket.hpp"

using namespace adapmen;
using namespace adapmen::hitl;

namespace {

ExperimentConfig small_config(SessionMode mode = SessionMode::adapmen_gated) {
  ExperimentConfig c;
  c.env.kind = EnvKind::cliffwalk;
  c.env.width = 4;
  c.env.horizon = 8;
  c.training.total_steps = 1200;
  c.training.update_interval = 200;
  c.training.criterion.warmup_steps = 100;
  c.training.learner.label_noise = 0.1;
  c.session.mode = mode;
  return c;
}

std::string temp_dir(const std::string& name) {
  const auto dir = std::filesystem::temp_directory_path() / ("adapmen-test-" + name + "-" + std::to_string(::getpid()));
  std::filesystem::remove_all(dir);
  std::filesystem::create_directories(dir);
  return dir.string();
}

std::string first_type(const std::vector<json>& msgs) { return msgs.empty() ? "" : msgs.front().value("type", ""); }

/// Answers every request with the exact expert action.
void drive_perfectly(Session& s) {
  while (!s.done()) {
    if (s.awaiting_human()) {
      const auto& st = s.state();
      const auto out = s.step(static_cast<std::int64_t>(s.optimal().expert.action(st.h, st.state)));
      ASSERT_NE(first_type(out), "error");
    } else {
      s.step(std::nullopt);
    }
  }
}

}  // namespace

TEST(Protocol, ParsesClientMessages) {
  EXPECT_EQ(parse_client_message(client_hello(5).dump()).seed, std::optional<std::uint64_t>(5));
  EXPECT_EQ(parse_client_message(action_submit(3).dump()).action, 3);
  EXPECT_TRUE(parse_client_message(takeover_toggle(true).dump()).active);
  EXPECT_THROW(parse_client_message("{"), std::invalid_argument);
  EXPECT_THROW(parse_client_message(R"({"type":"teleport"})"), std::invalid_argument);
  EXPECT_THROW(parse_client_message(R"({"type":"action_submit","action":"left"})"), std::invalid_argument);
  EXPECT_THROW(parse_client_message(R"({"type":"state_update"})"), std::invalid_argument);
  for (auto k : {MessageKind::hello, MessageKind::state_update, MessageKind::intervention_request})
    EXPECT_EQ(message_kind_from_string(to_string(k)), k);
}

TEST(Session, PerfectClientMatchesHeadlessTraining) {
  const ExperimentConfig cfg = small_config();
  Session s(1, cfg, 42);
  drive_perfectly(s);
  const Environment env = make_env(cfg.env);
  const OptimalSolution opt = value_iteration_finite(env.mdp);
  const TrainingResult ref = train_adapmen(env.mdp, opt, Session::session_training(cfg, 42));
  EXPECT_EQ(s.run().metrics(), ref.metrics);
  EXPECT_EQ(s.run().intervention_flags(), ref.intervention_flags);
  EXPECT_EQ(s.run().buffer().samples(), ref.buffer.samples());
  EXPECT_EQ(s.run().missed_labels(), 0u);
}

TEST(Session, SafetyHoldsOnline) {
  Session s(1, small_config(), 7);
  drive_perfectly(s);
  const double H = 8.0;
  ASSERT_FALSE(s.run().metrics().empty());
  for (const auto& m : s.run().metrics()) EXPECT_GE(m.J_teacher, m.J_expert - m.p * H - 1e-9);
}

TEST(Session, ReplayRebuildsTheLearner) {
  std::ostringstream log;
  const ExperimentConfig cfg = small_config();
  Session s(3, cfg, 9, &log);
  std::size_t k = 0;
  while (!s.done()) {
    if (s.awaiting_human()) {
      // Mix answers, wrong answers and timeouts.
      if (k++ % 5 == 4)
        s.timeout();
      else
        s.step(static_cast<std::int64_t>(k % 5));
    } else {
      s.step(std::nullopt);
    }
  }
  const ReplayResult r = replay_session(log.str());
  EXPECT_TRUE(r.complete);
  ASSERT_TRUE(r.learner.has_value());
  EXPECT_TRUE(*r.learner == s.run().learner());
  EXPECT_EQ(r.metrics, s.run().metrics());
  EXPECT_EQ(r.states.back(), s.state());
  EXPECT_EQ(r.states.size(), cfg.training.total_steps + 1);
}

TEST(Session, ReplayFlagsTruncationAndCorruption) {
  std::ostringstream log;
  Session s(4, small_config(), 1, &log);
  drive_perfectly(s);
  const std::string text = log.str();
  std::vector<std::string> lines;
  std::istringstream in(text);
  for (std::string l; std::getline(in, l);) lines.push_back(l);

  std::string truncated;
  for (std::size_t i = 0; i < 50; ++i) truncated += lines[i] + "\n";
  const ReplayResult r = replay_session(truncated);
  EXPECT_FALSE(r.complete);
  EXPECT_EQ(r.states.size(), 50u);

  std::string corrupted;
  for (std::size_t i = 0; i < lines.size(); ++i) {
    std::string l = lines[i];
    if (i == 20) {
      json ev = json::parse(l);
      ev["state"] = ev["state"].get<int>() + 1;
      l = ev.dump();
    }
    corrupted += l + "\n";
  }
  try {
    replay_session(corrupted);
    FAIL() << "expected a replay error";
  } catch (const ReplayError& e) {
    EXPECT_EQ(e.event_index(), 21u);
    EXPECT_NE(std::string(e.what()).find("event 21"), std::string::npos);
  }
  EXPECT_THROW(replay_session("not json\n"), ReplayError);
  const ReplayResult empty = replay_session(std::string());
  EXPECT_EQ(empty.states.size(), 1u);
  EXPECT_FALSE(empty.complete);
}

TEST(Session, RejectsBadInputWithoutSideEffects) {
  Session s(5, small_config(), 2);
  while (!s.awaiting_human()) s.step(std::nullopt);
  const SessionState before = s.state();
  auto out = s.step(static_cast<std::int64_t>(99));
  ASSERT_EQ(out.size(), 1u);
  EXPECT_EQ(out[0]["code"], error_code::illegal_action);
  EXPECT_EQ(s.step(std::nullopt)[0]["code"], error_code::illegal_action);
  EXPECT_EQ(s.toggle_takeover(true)[0]["code"], error_code::wrong_mode);
  EXPECT_EQ(s.state(), before);
  s.step(static_cast<std::int64_t>(0));
  while (s.awaiting_human()) s.step(static_cast<std::int64_t>(0));
  EXPECT_EQ(s.step(static_cast<std::int64_t>(0))[0]["code"], error_code::no_pending_request);
  EXPECT_EQ(s.timeout()[0]["code"], error_code::no_pending_request);
}

TEST(Session, MessageOrderAndPayloads) {
  Session s(6, small_config(), 3);
  const auto hello = s.hello();
  ASSERT_GE(hello.size(), 2u);
  EXPECT_EQ(hello[0]["type"], "hello");
  EXPECT_EQ(hello[0]["version"], kProtocolVersion);
  EXPECT_EQ(hello[1]["type"], "state_update");
  EXPECT_TRUE(hello[1].contains("row"));
  bool saw_metrics = false, saw_episode = false;
  while (!s.done()) {
    const auto out = s.awaiting_human()
                         ? s.step(static_cast<std::int64_t>(s.optimal().expert.action(s.state().h, s.state().state)))
                         : s.step(std::nullopt);
    std::size_t state_pos = out.size();
    for (std::size_t i = 0; i < out.size(); ++i) {
      const std::string t = out[i]["type"];
      if (t == "state_update") state_pos = i;
      if (t == "metrics_update" || t == "episode_end") EXPECT_LT(i, state_pos);
      if (t == "intervention_request") {
        EXPECT_EQ(i, state_pos + 1);
        EXPECT_EQ(out[i]["legal_actions"].size(), 5u);
      }
      saw_metrics = saw_metrics || t == "metrics_update";
      saw_episode = saw_episode || t == "episode_end";
    }
  }
  EXPECT_TRUE(saw_metrics);
  EXPECT_TRUE(saw_episode);
  EXPECT_EQ(s.step(std::nullopt)[0]["code"], error_code::finished);
}

TEST(Session, HighThresholdNeverAsks) {
  ExperimentConfig cfg = small_config();
  cfg.training.criterion.adaptive = false;
  cfg.training.criterion.threshold = static_cast<double>(cfg.env.horizon);
  Session s(7, cfg, 0);
  while (!s.done()) {
    ASSERT_FALSE(s.awaiting_human());
    s.step(std::nullopt);
  }
  EXPECT_TRUE(s.run().buffer().empty());
}

TEST(Session, HumanGatedTakeover) {
  std::ostringstream log;
  Session s(8, small_config(SessionMode::human_gated), 4, &log);
  for (int i = 0; i < 10; ++i) s.step(std::nullopt);
  EXPECT_TRUE(s.run().buffer().empty());
  s.toggle_takeover(true);
  EXPECT_TRUE(s.awaiting_human());
  for (int i = 0; i < 6; ++i) s.step(static_cast<std::int64_t>(0));
  EXPECT_EQ(s.run().buffer().size(), 6u);
  s.toggle_takeover(false);
  while (!s.done()) s.step(std::nullopt);
  const ReplayResult r = replay_session(log.str());
  EXPECT_TRUE(r.complete);
  EXPECT_TRUE(*r.learner == s.run().learner());
}

// ------------------------------------------------------------------ network

namespace {

struct RunningServer {
  explicit RunningServer(ExperimentConfig cfg, const std::string& log_dir)
      : server(std::move(cfg), ServerOptions{"127.0.0.1", 0, log_dir}), thread([this] { server.run(stop); }) {}
  ~RunningServer() {
    stop = true;
    thread.join();
  }
  std::atomic<bool> stop{false};
  Server server;
  std::thread thread;
};

json next_message(ws::Connection& c) {
  const auto r = c.receive(5000);
  if (r.status != ws::RecvStatus::message) throw std::runtime_error("no message from server");
  return json::parse(r.text);
}

/// Plays a whole session as the perfect expert; returns the final state_update.
json play_session(std::uint16_t port, std::uint64_t seed, const OptimalSolution& opt) {
  ws::Connection c = ws::connect_client("127.0.0.1", port);
  c.send_text(client_hello(seed).dump());
  for (;;) {
    const json m = next_message(c);
    const std::string type = m["type"];
    if (type == "error") throw std::runtime_error(m.dump());
    if (type == "intervention_request")
      c.send_text(action_submit(opt.expert.action(m["h"], m["state"])).dump());
    if (type == "state_update" && m["done"].get<bool>()) {
      c.send_close();
      return m;
    }
  }
}

std::string http_get(std::uint16_t port, const std::string& path) {
  const int fd = ::socket(AF_INET, SOCK_STREAM, 0);
  sockaddr_in addr{};
  addr.sin_family = AF_INET;
  addr.sin_port = htons(port);
  ::inet_pton(AF_INET, "127.0.0.1", &addr.sin_addr);
  if (::connect(fd, reinterpret_cast<sockaddr*>(&addr), sizeof addr) != 0) {
    ::close(fd);
    return "";
  }
  const std::string req = "GET " + path + " HTTP/1.1\r\nHost: localhost\r\nConnection: close\r\n\r\n";
  ::send(fd, req.data(), req.size(), 0);
  std::string out;
  char buf[1024];
  for (ssize_t n; (n = ::recv(fd, buf, sizeof buf, 0)) > 0;) out.append(buf, static_cast<std::size_t>(n));
  ::close(fd);
  return out;
}

}  // namespace

TEST(Server, HandshakeKey) {
  // Example key and answer from the WebSocket RFC.
  EXPECT_EQ(ws::accept_key("dGhlIHNhbXBsZSBub25jZQ=="), "s3pPLMBiTxaQ9kYGzzhZRbK+xOo=");
}

TEST(Server, LoopbackSessionMatchesHeadless) {
  const std::string dir = temp_dir("loop");
  ExperimentConfig cfg = small_config();
  cfg.training.total_steps = 600;
  const Environment env = make_env(cfg.env);
  const OptimalSolution opt = value_iteration_finite(env.mdp);
  {
    RunningServer srv(cfg, dir);
    const json last = play_session(srv.server.port(), 11, opt);
    EXPECT_EQ(last["env_steps"], 600);
    EXPECT_EQ(srv.server.sessions_started(), 1u);
  }
  std::ifstream log(Server::log_path(dir, 1));
  ASSERT_TRUE(log.good());
  const ReplayResult r = replay_session(log);
  EXPECT_TRUE(r.complete);
  const TrainingResult ref = train_adapmen(env.mdp, opt, Session::session_training(cfg, 11));
  EXPECT_EQ(r.metrics, ref.metrics);
  EXPECT_TRUE(*r.learner == ref.learner);
  std::filesystem::remove_all(dir);
}

TEST(Server, ConcurrentSessionsAndHealth) {
  const std::string dir = temp_dir("multi");
  ExperimentConfig cfg = small_config();
  cfg.training.total_steps = 400;
  const OptimalSolution opt = value_iteration_finite(make_env(cfg.env).mdp);
  RunningServer srv(cfg, dir);
  const std::string health = http_get(srv.server.port(), "/health");
  EXPECT_NE(health.find("200 OK"), std::string::npos);
  EXPECT_NE(health.find("\"version\":1"), std::string::npos);
  EXPECT_NE(http_get(srv.server.port(), "/nope").find("404"), std::string::npos);
  json a, b;
  std::thread ta([&] { a = play_session(srv.server.port(), 1, opt); });
  std::thread tb([&] { b = play_session(srv.server.port(), 2, opt); });
  ta.join();
  tb.join();
  EXPECT_TRUE(a["done"].get<bool>());
  EXPECT_TRUE(b["done"].get<bool>());
  EXPECT_NE(a["session"], b["session"]);
  EXPECT_EQ(srv.server.sessions_started(), 2u);
}

TEST(Server, VersionMismatchAndPortInUse) {
  const std::string dir = temp_dir("version");
  RunningServer srv(small_config(), dir);
  ws::Connection c = ws::connect_client("127.0.0.1", srv.server.port());
  c.send_text(json{{"type", "hello"}, {"version", 99}}.dump());
  const json err = next_message(c);
  EXPECT_EQ(err["type"], "error");
  EXPECT_EQ(err["code"], error_code::version_mismatch);
  EXPECT_EQ(c.receive(2000).status, ws::RecvStatus::closed);
  try {
    Server clash(small_config(), ServerOptions{"127.0.0.1", srv.server.port(), dir});
    FAIL() << "second bind should fail";
  } catch (const ws::SocketError& e) {
    EXPECT_NE(std::string(e.what()).find("in use"), std::string::npos) << e.what();
  }
}
