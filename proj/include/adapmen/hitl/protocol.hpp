#pragma once

#include <cstdint>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include "adapmen/environments.hpp"
#include "adapmen/training.hpp"
#include "json.hpp"

namespace adapmen::hitl {

using nlohmann::json;

/*
 * Wire protocol, one JSON object per WebSocket text frame. Every message has
 * a "type" field; the rest of the payload depends on the type. The full
 * schema with examples lives in docs/protocol.md.
 *
 *   client -> server   hello, action_submit, takeover_toggle
 *   server -> client   hello, state_update, intervention_request,
 *                      metrics_update, episode_end, error
 */
inline constexpr int kProtocolVersion = 1;

enum class MessageKind {
  hello,
  state_update,
  intervention_request,
  action_submit,
  takeover_toggle,
  metrics_update,
  episode_end,
  error
};

inline std::string to_string(MessageKind k) {
  switch (k) {
    case MessageKind::hello: return "hello";
    case MessageKind::state_update: return "state_update";
    case MessageKind::intervention_request: return "intervention_request";
    case MessageKind::action_submit: return "action_submit";
    case MessageKind::takeover_toggle: return "takeover_toggle";
    case MessageKind::metrics_update: return "metrics_update";
    case MessageKind::episode_end: return "episode_end";
    case MessageKind::error: return "error";
  }
  return "unknown";
}

inline std::optional<MessageKind> message_kind_from_string(const std::string& s) {
  for (auto k : {MessageKind::hello, MessageKind::state_update, MessageKind::intervention_request,
                 MessageKind::action_submit, MessageKind::takeover_toggle, MessageKind::metrics_update,
                 MessageKind::episode_end, MessageKind::error})
    if (to_string(k) == s) return k;
  return std::nullopt;
}

// Error codes carried in the "code" field of error messages.
namespace error_code {
inline constexpr const char* bad_message = "bad_message";
inline constexpr const char* version_mismatch = "version_mismatch";
inline constexpr const char* illegal_action = "illegal_action";
inline constexpr const char* no_pending_request = "no_pending_request";
inline constexpr const char* wrong_mode = "wrong_mode";
inline constexpr const char* not_started = "not_started";
inline constexpr const char* finished = "finished";
}  // namespace error_code

inline json make_error(const std::string& code, const std::string& message) {
  return {{"type", "error"}, {"code", code}, {"message", message}};
}

inline json metrics_payload(const IterationMetrics& m) {
  return {{"type", "metrics_update"},
          {"iteration", m.iteration},
          {"env_steps", m.env_steps},
          {"window_steps", m.window_steps},
          {"window_interventions", m.window_interventions},
          {"delta_estimate", m.delta_estimate},
          {"epsb_estimate", m.epsb_estimate},
          {"p", m.p},
          {"J_learner", m.J_learner},
          {"J_teacher", m.J_teacher},
          {"J_expert", m.J_expert},
          {"suboptimality_gap", m.suboptimality_gap},
          {"expert_action_usage", m.expert_action_usage},
          {"buffer_size", m.buffer_size},
          {"episodes", m.episodes}};
}

inline json geometry_payload(const GridGeometry& g) {
  return {{"rows", g.rows},
          {"cols", g.cols},
          {"cell_row", g.cell_row},
          {"cell_col", g.cell_col},
          {"cell_kind", g.cell_kind},
          {"action_names", g.action_names}};
}

/// Parsed client message. Throws std::invalid_argument with a short reason
/// when the message does not match the client half of the schema.
struct ClientMessage {
  MessageKind kind = MessageKind::hello;
  int version = 0;                      // hello
  std::optional<std::uint64_t> seed;    // hello, optional
  std::int64_t action = -1;             // action_submit
  bool active = false;                  // takeover_toggle
};

inline ClientMessage parse_client_message(const std::string& text) {
  const json j = json::parse(text, nullptr, false);
  if (j.is_discarded() || !j.is_object()) throw std::invalid_argument("message is not a JSON object");
  if (!j.contains("type") || !j["type"].is_string()) throw std::invalid_argument("missing string field 'type'");
  const auto kind = message_kind_from_string(j["type"].get<std::string>());
  if (!kind) throw std::invalid_argument("unknown message type '" + j["type"].get<std::string>() + "'");
  ClientMessage msg;
  msg.kind = *kind;
  switch (*kind) {
    case MessageKind::hello:
      if (!j.contains("version") || !j["version"].is_number_integer())
        throw std::invalid_argument("hello needs an integer 'version'");
      msg.version = j["version"].get<int>();
      if (j.contains("seed")) {
        if (!j["seed"].is_number_unsigned()) throw std::invalid_argument("hello 'seed' must be a non-negative integer");
        msg.seed = j["seed"].get<std::uint64_t>();
      }
      break;
    case MessageKind::action_submit:
      if (!j.contains("action") || !j["action"].is_number_integer())
        throw std::invalid_argument("action_submit needs an integer 'action'");
      msg.action = j["action"].get<std::int64_t>();
      break;
    case MessageKind::takeover_toggle:
      if (!j.contains("active") || !j["active"].is_boolean())
        throw std::invalid_argument("takeover_toggle needs a boolean 'active'");
      msg.active = j["active"].get<bool>();
      break;
    default: throw std::invalid_argument("'" + to_string(*kind) + "' is a server message");
  }
  return msg;
}

inline json client_hello(std::optional<std::uint64_t> seed = std::nullopt) {
  json j{{"type", "hello"}, {"version", kProtocolVersion}};
  if (seed) j["seed"] = *seed;
  return j;
}

inline json action_submit(std::int64_t action) { return {{"type", "action_submit"}, {"action", action}}; }

inline json takeover_toggle(bool active) { return {{"type", "takeover_toggle"}, {"active", active}}; }

}  // namespace adapmen::hitl
