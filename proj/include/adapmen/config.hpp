#pragma once

#include <cstdint>
#include <fstream>
#include <optional>
#include <set>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

#include "adapmen/environments.hpp"
#include "adapmen/gating.hpp"
#include "adapmen/learner.hpp"
#include "adapmen/training.hpp"
#include "json.hpp"

namespace adapmen {

enum class SessionMode { adapmen_gated, human_gated };

inline std::string to_string(SessionMode m) { return m == SessionMode::adapmen_gated ? "adapmen_gated" : "human_gated"; }

inline SessionMode session_mode_from_string(const std::string& s) {
  if (s == "adapmen_gated") return SessionMode::adapmen_gated;
  if (s == "human_gated") return SessionMode::human_gated;
  throw std::invalid_argument("unknown session mode '" + s + "'");
}

struct SessionSettings {
  SessionMode mode = SessionMode::adapmen_gated;
  std::uint64_t timeout_ms = 0;  // 0 waits forever
  std::string log_dir = "sessions";
  std::uint64_t step_delay_ms = 0;  // pause between unattended steps
};

struct ExperimentConfig {
  EnvSpec env;
  TrainingConfig training;  // seed is filled per run
  std::vector<std::uint64_t> seeds{0};
  std::string output_dir = "runs/default";
  SessionSettings session;
};

/// Raised for any config problem; `field` is the dotted path at fault.
class ConfigError : public std::runtime_error {
 public:
  ConfigError(std::string field, const std::string& msg)
      : std::runtime_error("config field '" + field + "': " + msg), field_(std::move(field)) {}
  const std::string& field() const { return field_; }

 private:
  std::string field_;
};

namespace detail {

using nlohmann::json;

inline std::string join(const std::string& prefix, const std::string& key) {
  return prefix.empty() ? key : prefix + "." + key;
}

inline void reject_unknown(const json& obj, const std::string& path, const std::set<std::string>& allowed) {
  if (!obj.is_object()) throw ConfigError(path.empty() ? "<root>" : path, "expected an object");
  for (const auto& [key, value] : obj.items())
    if (!allowed.count(key)) throw ConfigError(join(path, key), "unknown key");
}

template <class T>
T get_as(const json& obj, const std::string& path, const std::string& key, T fallback) {
  if (!obj.contains(key)) return fallback;
  const json& v = obj.at(key);
  const std::string field = join(path, key);
  if constexpr (std::is_same_v<T, bool>) {
    if (!v.is_boolean()) throw ConfigError(field, "expected a boolean");
    return v.get<bool>();
  } else if constexpr (std::is_same_v<T, std::string>) {
    if (!v.is_string()) throw ConfigError(field, "expected a string");
    return v.get<std::string>();
  } else if constexpr (std::is_floating_point_v<T>) {
    if (!v.is_number()) throw ConfigError(field, "expected a number");
    return v.get<T>();
  } else {
    if (!v.is_number_integer() || (v.is_number_integer() && v.get<std::int64_t>() < 0 && !v.is_number_unsigned()))
      throw ConfigError(field, "expected a non-negative integer");
    return v.get<T>();
  }
}

template <class E, class F>
E get_enum(const json& obj, const std::string& path, const std::string& key, E fallback, F parse) {
  if (!obj.contains(key)) return fallback;
  const std::string text = get_as<std::string>(obj, path, key, "");
  try {
    return parse(text);
  } catch (const std::invalid_argument& e) {
    throw ConfigError(join(path, key), e.what());
  }
}

inline EnvSpec parse_env(const json& j, const std::string& path) {
  reject_unknown(j, path,
                 {"kind", "width", "rows", "cols", "num_states", "num_actions", "horizon", "slip", "reward_sparsity",
                  "seed"});
  EnvSpec e;
  e.kind = get_enum(j, path, "kind", e.kind, env_kind_from_string);
  e.width = get_as<std::size_t>(j, path, "width", e.width);
  e.rows = get_as<std::size_t>(j, path, "rows", e.rows);
  e.cols = get_as<std::size_t>(j, path, "cols", e.cols);
  e.num_states = get_as<std::size_t>(j, path, "num_states", e.num_states);
  e.num_actions = get_as<std::size_t>(j, path, "num_actions", e.num_actions);
  e.horizon = get_as<std::size_t>(j, path, "horizon", e.horizon);
  e.slip = get_as<double>(j, path, "slip", e.slip);
  e.reward_sparsity = get_as<double>(j, path, "reward_sparsity", e.reward_sparsity);
  e.seed = get_as<std::uint64_t>(j, path, "seed", e.seed);
  if (e.horizon == 0) throw ConfigError(join(path, "horizon"), "must be positive");
  if (!(e.slip >= 0.0 && e.slip < 1.0)) throw ConfigError(join(path, "slip"), "must lie in [0, 1)");
  if (!(e.reward_sparsity >= 0.0 && e.reward_sparsity <= 1.0))
    throw ConfigError(join(path, "reward_sparsity"), "must lie in [0, 1]");
  return e;
}

inline InterventionCriterion parse_criterion(const json& j, const std::string& path) {
  reject_unknown(j, path, {"kind", "threshold", "adaptive", "warmup_steps"});
  InterventionCriterion c;
  c.warmup_steps = 200;
  c.kind = get_enum(j, path, "kind", c.kind, criterion_kind_from_string);
  c.threshold = get_as<double>(j, path, "threshold", c.threshold);
  c.adaptive = get_as<bool>(j, path, "adaptive", c.adaptive);
  c.warmup_steps = get_as<std::size_t>(j, path, "warmup_steps", c.warmup_steps);
  if (!(c.threshold >= 0.0)) throw ConfigError(join(path, "threshold"), "must be non-negative");
  return c;
}

inline LearnerSettings parse_learner(const json& j, const std::string& path) {
  reject_unknown(j, path, {"kind", "smoothing", "learning_rate", "label_noise"});
  LearnerSettings l;
  l.kind = get_enum(j, path, "kind", l.kind, learner_kind_from_string);
  l.smoothing = get_as<double>(j, path, "smoothing", l.smoothing);
  l.learning_rate = get_as<double>(j, path, "learning_rate", l.learning_rate);
  l.label_noise = get_as<double>(j, path, "label_noise", l.label_noise);
  if (!(l.smoothing > 0.0)) throw ConfigError(join(path, "smoothing"), "must be positive");
  if (!(l.learning_rate > 0.0)) throw ConfigError(join(path, "learning_rate"), "must be positive");
  if (!(l.label_noise >= 0.0 && l.label_noise <= 1.0)) throw ConfigError(join(path, "label_noise"), "must lie in [0, 1]");
  return l;
}

inline SessionSettings parse_session(const json& j, const std::string& path) {
  reject_unknown(j, path, {"mode", "timeout_ms", "log_dir", "step_delay_ms"});
  SessionSettings s;
  s.mode = get_enum(j, path, "mode", s.mode, session_mode_from_string);
  s.timeout_ms = get_as<std::uint64_t>(j, path, "timeout_ms", s.timeout_ms);
  s.log_dir = get_as<std::string>(j, path, "log_dir", s.log_dir);
  s.step_delay_ms = get_as<std::uint64_t>(j, path, "step_delay_ms", s.step_delay_ms);
  return s;
}

/// "a.b.c" -> JSON pointer "/a/b/c".
inline json::json_pointer dotted_pointer(const std::string& key) {
  std::string ptr;
  std::stringstream ss(key);
  for (std::string part; std::getline(ss, part, '.');) {
    if (part.empty()) throw ConfigError(key, "empty path segment in override");
    ptr += "/" + part;
  }
  return json::json_pointer(ptr);
}

}  // namespace detail

/// Applies "key=value" overrides; the value is read as JSON when it parses,
/// otherwise as a bare string.
inline void apply_overrides(nlohmann::json& root, const std::vector<std::string>& overrides) {
  for (const auto& ov : overrides) {
    const auto eq = ov.find('=');
    if (eq == std::string::npos || eq == 0) throw ConfigError(ov, "override must look like key=value");
    const std::string key = ov.substr(0, eq), text = ov.substr(eq + 1);
    nlohmann::json value = nlohmann::json::parse(text, nullptr, false);
    if (value.is_discarded()) value = text;
    root[detail::dotted_pointer(key)] = value;
  }
}

inline ExperimentConfig parse_config(const nlohmann::json& j) {
  using namespace detail;
  reject_unknown(j, "",
                 {"env", "algorithm", "criterion", "learner", "total_steps", "update_interval", "buffer_capacity",
                  "gate_q_noise", "seeds", "output_dir", "session"});
  ExperimentConfig c;
  c.training.criterion.warmup_steps = 200;
  c.training.total_steps = 20000;
  if (j.contains("env")) c.env = parse_env(j.at("env"), "env");
  c.training.algorithm = get_enum(j, "", "algorithm", c.training.algorithm, algorithm_from_string);
  if (j.contains("criterion")) c.training.criterion = parse_criterion(j.at("criterion"), "criterion");
  if (j.contains("learner")) c.training.learner = parse_learner(j.at("learner"), "learner");
  c.training.total_steps = get_as<std::size_t>(j, "", "total_steps", c.training.total_steps);
  c.training.update_interval = get_as<std::size_t>(j, "", "update_interval", c.training.update_interval);
  if (c.training.update_interval == 0) throw ConfigError("update_interval", "must be positive");
  if (j.contains("buffer_capacity") && !j.at("buffer_capacity").is_null()) {
    const auto cap = get_as<std::size_t>(j, "", "buffer_capacity", 0);
    if (cap == 0) throw ConfigError("buffer_capacity", "must be positive or null");
    c.training.buffer_capacity = cap;
  }
  c.training.gate_q_noise = get_as<double>(j, "", "gate_q_noise", c.training.gate_q_noise);
  if (!(c.training.gate_q_noise >= 0.0)) throw ConfigError("gate_q_noise", "must be non-negative");
  if (j.contains("seeds")) {
    const auto& s = j.at("seeds");
    if (!s.is_array() || s.empty()) throw ConfigError("seeds", "expected a non-empty array of integers");
    c.seeds.clear();
    for (std::size_t i = 0; i < s.size(); ++i) {
      if (!s[i].is_number_unsigned() && !(s[i].is_number_integer() && s[i].get<std::int64_t>() >= 0))
        throw ConfigError("seeds[" + std::to_string(i) + "]", "expected a non-negative integer");
      c.seeds.push_back(s[i].get<std::uint64_t>());
    }
  }
  c.output_dir = get_as<std::string>(j, "", "output_dir", c.output_dir);
  if (j.contains("session")) c.session = parse_session(j.at("session"), "session");
  try {
    make_env(c.env);
  } catch (const std::invalid_argument& e) {
    throw ConfigError("env", e.what());
  }
  return c;
}

/// Inverse of parse_config: parse_config(config_to_json(c)) reproduces c.
inline nlohmann::json config_to_json(const ExperimentConfig& c) {
  const auto& e = c.env;
  const auto& t = c.training;
  nlohmann::json j;
  j["env"] = {{"kind", to_string(e.kind)},   {"width", e.width},
              {"rows", e.rows},              {"cols", e.cols},
              {"num_states", e.num_states},  {"num_actions", e.num_actions},
              {"horizon", e.horizon},        {"slip", e.slip},
              {"reward_sparsity", e.reward_sparsity}, {"seed", e.seed}};
  j["algorithm"] = to_string(t.algorithm);
  j["criterion"] = {{"kind", to_string(t.criterion.kind)},
                    {"threshold", t.criterion.threshold},
                    {"adaptive", t.criterion.adaptive},
                    {"warmup_steps", t.criterion.warmup_steps}};
  j["learner"] = {{"kind", to_string(t.learner.kind)},
                  {"smoothing", t.learner.smoothing},
                  {"learning_rate", t.learner.learning_rate},
                  {"label_noise", t.learner.label_noise}};
  j["total_steps"] = t.total_steps;
  j["update_interval"] = t.update_interval;
  j["buffer_capacity"] = t.buffer_capacity ? nlohmann::json(*t.buffer_capacity) : nlohmann::json(nullptr);
  j["gate_q_noise"] = t.gate_q_noise;
  j["seeds"] = c.seeds;
  j["output_dir"] = c.output_dir;
  j["session"] = {{"mode", to_string(c.session.mode)},
                  {"timeout_ms", c.session.timeout_ms},
                  {"log_dir", c.session.log_dir},
                  {"step_delay_ms", c.session.step_delay_ms}};
  return j;
}

inline nlohmann::json read_json_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("<file>", "cannot read '" + path + "'");
  nlohmann::json j = nlohmann::json::parse(in, nullptr, false);
  if (j.is_discarded()) throw ConfigError("<file>", "'" + path + "' is not valid JSON");
  return j;
}

inline ExperimentConfig load_config(const std::string& path, const std::vector<std::string>& overrides = {}) {
  nlohmann::json j = read_json_file(path);
  apply_overrides(j, overrides);
  return parse_config(j);
}

}  // namespace adapmen
