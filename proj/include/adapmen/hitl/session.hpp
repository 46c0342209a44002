#pragma once

#include <cstdint>
#include <istream>
#include <memory>
#include <optional>
#include <ostream>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

#include "adapmen/config.hpp"
#include "adapmen/dp.hpp"
#include "adapmen/environments.hpp"
#include "adapmen/hitl/protocol.hpp"
#include "adapmen/training.hpp"

namespace adapmen::hitl {

/// Snapshot after each step. Equality is what replay is checked against.
struct SessionState {
  std::uint64_t session_id = 0;
  SessionMode mode = SessionMode::adapmen_gated;
  std::size_t h = 0;
  StateId state = 0;
  bool pending_intervention = false;
  bool takeover = false;
  bool done = false;
  double gap = 0.0;
  double delta_hat = 0.0;
  double p = 0.0;
  double episode_return = 0.0;
  std::size_t buffer_size = 0;
  std::size_t env_steps = 0;
  std::size_t episodes = 0;
  std::size_t missed_labels = 0;

  bool operator==(const SessionState&) const = default;
};

inline json state_payload(const SessionState& s, const GridGeometry& g) {
  json j{{"type", "state_update"},
         {"session", s.session_id},
         {"mode", to_string(s.mode)},
         {"h", s.h},
         {"state", s.state},
         {"pending", s.pending_intervention},
         {"takeover", s.takeover},
         {"done", s.done},
         {"delta_hat", s.delta_hat},
         {"p", s.p},
         {"episode_return", s.episode_return},
         {"buffer_size", s.buffer_size},
         {"env_steps", s.env_steps},
         {"episodes", s.episodes}};
  if (s.state < g.cell_row.size()) {
    j["row"] = g.cell_row[s.state];
    j["col"] = g.cell_col[s.state];
    j["cell"] = g.cell_kind[s.state];
  }
  return j;
}

/// How the executed action of one step was chosen; this is all the log
/// needs to replay a session.
enum class StepInput { learner, human, timeout, takeover };

inline std::string to_string(StepInput i) {
  switch (i) {
    case StepInput::learner: return "learner";
    case StepInput::human: return "human";
    case StepInput::timeout: return "timeout";
    case StepInput::takeover: return "takeover";
  }
  return "unknown";
}

inline std::optional<StepInput> step_input_from_string(const std::string& s) {
  for (auto i : {StepInput::learner, StepInput::human, StepInput::timeout, StepInput::takeover})
    if (to_string(i) == s) return i;
  return std::nullopt;
}

/**
 * One interactive training session. The AdapMen loop runs on a TrainingRun
 * whose expert labels come from the client; the gate always uses the exact
 * Q* of the environment. The environment is paused while a request is open.
 *
 * Every method returns the outbound messages in order. Rejected inputs
 * return a single error message and leave the state untouched.
 */
class Session {
 public:
  Session(std::uint64_t id, const ExperimentConfig& config, std::uint64_t seed, std::ostream* log = nullptr)
      : id_(id),
        config_(config),
        seed_(seed),
        mode_(config.session.mode),
        env_(make_env(config.env)),
        opt_(value_iteration_finite(env_.mdp)),
        run_(env_.mdp, opt_, session_training(config, seed)),
        log_(log) {
    json start{{"event", "start"},
               {"session", id_},
               {"version", kProtocolVersion},
               {"seed", seed_},
               {"config", config_to_json(config_)}};
    write_log(start);
    refresh();
  }

  Session(const Session&) = delete;
  Session& operator=(const Session&) = delete;

  static TrainingConfig session_training(const ExperimentConfig& config, std::uint64_t seed) {
    TrainingConfig t = config.training;
    t.algorithm = Algorithm::adapmen;
    t.gate_q_noise = 0.0;
    t.seed = seed;
    return t;
  }

  std::uint64_t id() const { return id_; }
  SessionMode mode() const { return mode_; }
  bool done() const { return run_.done(); }
  const SessionState& state() const { return state_; }
  const TrainingRun& run() const { return run_; }
  const Environment& environment() const { return env_; }
  const OptimalSolution& optimal() const { return opt_; }

  /// True while the session is blocked on the client: an open intervention
  /// request, or an active takeover in human-gated mode.
  bool awaiting_human() const {
    if (run_.done()) return false;
    return mode_ == SessionMode::adapmen_gated ? state_.pending_intervention : state_.takeover;
  }

  /// Greeting plus the first state (and request, if the first step gates).
  std::vector<json> hello() const {
    std::vector<json> out;
    out.push_back({{"type", "hello"},
                   {"version", kProtocolVersion},
                   {"session", id_},
                   {"mode", to_string(mode_)},
                   {"seed", seed_},
                   {"horizon", env_.mdp.horizon()},
                   {"num_states", env_.mdp.num_states()},
                   {"num_actions", env_.mdp.num_actions()},
                   {"total_steps", run_.config().total_steps},
                   {"update_interval", run_.config().update_interval},
                   {"geometry", geometry_payload(env_.geometry)}});
    append_state(out);
    return out;
  }

  /**
   * Advances one environment step. While a request (or takeover) is open an
   * action is required; otherwise none may be given and the learner acts.
   */
  std::vector<json> step(std::optional<std::int64_t> human_action) {
    if (run_.done()) return {make_error(error_code::finished, "session has finished")};
    if (!awaiting_human()) {
      if (human_action)
        return {make_error(error_code::no_pending_request, "no intervention request is pending")};
      return advance(StepInput::learner, std::nullopt);
    }
    if (!human_action) return {make_error(error_code::illegal_action, "an action is required for the open request")};
    if (*human_action < 0 || static_cast<std::size_t>(*human_action) >= env_.mdp.num_actions())
      return {make_error(error_code::illegal_action,
                         "action " + std::to_string(*human_action) + " is outside [0, " +
                             std::to_string(env_.mdp.num_actions()) + ")")};
    const auto a = static_cast<ActionId>(*human_action);
    return advance(mode_ == SessionMode::adapmen_gated ? StepInput::human : StepInput::takeover, a);
  }

  /// The client did not answer in time: the learner acts and the miss is logged.
  std::vector<json> timeout() {
    if (!awaiting_human()) return {make_error(error_code::no_pending_request, "nothing to time out")};
    return advance(StepInput::timeout, std::nullopt);
  }

  std::vector<json> toggle_takeover(bool active) {
    if (mode_ != SessionMode::human_gated)
      return {make_error(error_code::wrong_mode, "takeover_toggle is only valid in human_gated mode")};
    if (run_.done()) return {make_error(error_code::finished, "session has finished")};
    state_.takeover = active;
    write_log({{"event", "takeover"}, {"active", active}});
    std::vector<json> out;
    append_state(out);
    return out;
  }

  /// Dispatches a parsed client message (hello is handled by the server).
  std::vector<json> handle(const ClientMessage& msg) {
    switch (msg.kind) {
      case MessageKind::action_submit: return step(msg.action);
      case MessageKind::takeover_toggle: return toggle_takeover(msg.active);
      case MessageKind::hello: return hello();
      default: return {make_error(error_code::bad_message, "unexpected message")};
    }
  }

  /// Replays one logged step; throws std::invalid_argument on any mismatch.
  void apply_logged_step(StepInput input, std::optional<ActionId> action, std::size_t h, StateId s,
                         ActionId learner_action) {
    if (run_.done()) throw std::invalid_argument("step after the session finished");
    const auto& prop = run_.propose();
    if (prop.h != h || prop.state != s || prop.learner_action != learner_action)
      throw std::invalid_argument("step does not match the replayed trajectory");
    const bool waiting = awaiting_human();
    const bool wants_action = input == StepInput::human || input == StepInput::takeover;
    if (wants_action != action.has_value()) throw std::invalid_argument("action presence does not match input kind");
    if (action && *action >= env_.mdp.num_actions()) throw std::invalid_argument("action out of range");
    if ((input == StepInput::learner) == waiting) throw std::invalid_argument("input kind does not match the gate");
    if (input == StepInput::human && mode_ != SessionMode::adapmen_gated)
      throw std::invalid_argument("human input outside adapmen_gated mode");
    if (input == StepInput::takeover && mode_ != SessionMode::human_gated)
      throw std::invalid_argument("takeover input outside human_gated mode");
    advance(input, action);
  }

  void apply_logged_takeover(bool active) {
    if (mode_ != SessionMode::human_gated) throw std::invalid_argument("takeover event outside human_gated mode");
    if (run_.done()) throw std::invalid_argument("takeover after the session finished");
    state_.takeover = active;
  }

 private:
  std::vector<json> advance(StepInput input, std::optional<ActionId> action) {
    const auto& prop = run_.propose();
    const std::size_t h = prop.h;
    const StateId s = prop.state;
    const ActionId learner_action = prop.learner_action;
    const std::size_t episodes_before = run_.episodes();
    const std::size_t metrics_before = run_.metrics().size();

    StepRecord rec;
    switch (input) {
      case StepInput::learner:
        rec = mode_ == SessionMode::adapmen_gated ? run_.commit(std::nullopt) : run_.commit_learner();
        break;
      case StepInput::human: rec = run_.commit(action); break;
      case StepInput::timeout:
        rec = mode_ == SessionMode::adapmen_gated ? run_.commit(std::nullopt) : run_.commit_learner();
        break;
      case StepInput::takeover: rec = run_.commit_takeover(*action); break;
    }
    const double finished_return = run_.episode_return();

    json ev{{"event", "step"},
            {"step", run_.env_steps()},
            {"h", h},
            {"state", s},
            {"learner_action", learner_action},
            {"input", to_string(input)}};
    if (action) ev["action"] = *action;
    write_log(ev);

    std::vector<json> out;
    if (run_.episodes() > episodes_before)
      out.push_back({{"type", "episode_end"}, {"episode", run_.episodes()}, {"return", finished_return}});
    if (run_.metrics().size() > metrics_before) out.push_back(metrics_payload(run_.metrics().back()));
    refresh();
    if (run_.done()) write_log({{"event", "end"}, {"env_steps", run_.env_steps()}});
    append_state(out);
    return out;
  }

  void refresh() {
    state_.session_id = id_;
    state_.mode = mode_;
    state_.done = run_.done();
    state_.p = run_.threshold();
    state_.delta_hat = run_.metrics().empty() ? 0.0 : run_.metrics().back().delta_estimate;
    state_.buffer_size = run_.buffer().size();
    state_.env_steps = run_.env_steps();
    state_.episodes = run_.episodes();
    state_.missed_labels = run_.missed_labels();
    if (run_.done()) {
      state_.pending_intervention = false;
      state_.takeover = false;
      return;
    }
    const auto& prop = run_.propose();
    state_.h = prop.h;
    state_.state = prop.state;
    state_.gap = prop.gap;
    state_.pending_intervention = mode_ == SessionMode::adapmen_gated && prop.needs_label;
    state_.episode_return = prop.h == 1 ? 0.0 : run_.episode_return();
  }

  void append_state(std::vector<json>& out) const {
    out.push_back(state_payload(state_, env_.geometry));
    if (state_.pending_intervention) {
      std::vector<std::size_t> legal(env_.mdp.num_actions());
      for (std::size_t a = 0; a < legal.size(); ++a) legal[a] = a;
      out.push_back({{"type", "intervention_request"},
                     {"session", id_},
                     {"h", state_.h},
                     {"state", state_.state},
                     {"gap", state_.gap},
                     {"p", state_.p},
                     {"legal_actions", legal},
                     {"action_names", env_.geometry.action_names}});
    }
  }

  void write_log(const json& ev) {
    if (!log_) return;
    *log_ << ev.dump() << '\n';
    log_->flush();
  }

  std::uint64_t id_;
  ExperimentConfig config_;
  std::uint64_t seed_;
  SessionMode mode_;
  Environment env_;
  OptimalSolution opt_;
  TrainingRun run_;
  std::ostream* log_;
  SessionState state_;
};

// ------------------------------------------------------------------ replay

class ReplayError : public std::runtime_error {
 public:
  ReplayError(std::size_t event_index, const std::string& msg)
      : std::runtime_error("event " + std::to_string(event_index) + ": " + msg), event_index_(event_index) {}
  /// 1-based line number of the first bad event.
  std::size_t event_index() const { return event_index_; }

 private:
  std::size_t event_index_;
};

struct ReplayResult {
  std::vector<SessionState> states;  // initial state, then one per step
  std::optional<PolicyTable> learner;
  std::vector<IterationMetrics> metrics;
  bool complete = false;  // the log ends with an end event
};

/**
 * Rebuilds a session from its event log. An empty log yields the default
 * state only; a log without its end event replays the prefix and is flagged
 * incomplete; the first malformed or inconsistent event raises ReplayError.
 */
inline ReplayResult replay_session(std::istream& log) {
  ReplayResult result;
  std::unique_ptr<Session> session;
  std::string line;
  std::size_t index = 0;
  bool ended = false;
  while (std::getline(log, line)) {
    ++index;
    if (line.empty()) continue;
    if (ended) throw ReplayError(index, "event after the end event");
    const json ev = json::parse(line, nullptr, false);
    if (ev.is_discarded() || !ev.is_object()) throw ReplayError(index, "not a JSON object");
    if (!ev.contains("event") || !ev["event"].is_string()) throw ReplayError(index, "missing 'event'");
    const std::string kind = ev["event"].get<std::string>();
    try {
      if (kind == "start") {
        if (session) throw std::invalid_argument("second start event");
        if (ev.value("version", -1) != kProtocolVersion) throw std::invalid_argument("unsupported log version");
        const ExperimentConfig cfg = parse_config(ev.at("config"));
        session = std::make_unique<Session>(ev.at("session").get<std::uint64_t>(), cfg, ev.at("seed").get<std::uint64_t>());
        result.states.push_back(session->state());
        continue;
      }
      if (!session) throw std::invalid_argument("event before the start event");
      if (kind == "step") {
        const auto input = step_input_from_string(ev.at("input").get<std::string>());
        if (!input) throw std::invalid_argument("unknown input kind");
        if (ev.at("step").get<std::size_t>() != session->run().env_steps() + 1)
          throw std::invalid_argument("step counter out of sequence");
        std::optional<ActionId> action;
        if (ev.contains("action")) action = ev["action"].get<ActionId>();
        session->apply_logged_step(*input, action, ev.at("h").get<std::size_t>(), ev.at("state").get<StateId>(),
                                   ev.at("learner_action").get<ActionId>());
        result.states.push_back(session->state());
      } else if (kind == "takeover") {
        session->apply_logged_takeover(ev.at("active").get<bool>());
      } else if (kind == "end") {
        if (!session->done()) throw std::invalid_argument("end event before the run finished");
        if (ev.at("env_steps").get<std::size_t>() != session->run().env_steps())
          throw std::invalid_argument("end event step count mismatch");
        ended = true;
      } else {
        throw std::invalid_argument("unknown event '" + kind + "'");
      }
    } catch (const ReplayError&) {
      throw;
    } catch (const std::exception& e) {
      throw ReplayError(index, e.what());
    }
  }
  if (!session) {
    result.states.push_back(SessionState{});
    return result;
  }
  result.learner = session->run().learner();
  result.metrics = session->run().metrics();
  result.complete = ended;
  return result;
}

inline ReplayResult replay_session(const std::string& log_text) {
  std::istringstream in(log_text);
  return replay_session(in);
}

}  // namespace adapmen::hitl
