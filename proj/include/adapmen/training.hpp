#pragma once

#include <cstddef>
#include <cstdint>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include "adapmen/dp.hpp"
#include "adapmen/gating.hpp"
#include "adapmen/learner.hpp"
#include "adapmen/mdp.hpp"
#include "adapmen/rng.hpp"
#include "adapmen/rollout.hpp"
#include "adapmen/trace.hpp"

namespace adapmen {

enum class Algorithm { adapmen, bc, dagger };

inline std::string to_string(Algorithm a) {
  switch (a) {
    case Algorithm::adapmen: return "adapmen";
    case Algorithm::bc: return "bc";
    case Algorithm::dagger: return "dagger";
  }
  return "unknown";
}

inline Algorithm algorithm_from_string(const std::string& s) {
  if (s == "adapmen") return Algorithm::adapmen;
  if (s == "bc") return Algorithm::bc;
  if (s == "dagger") return Algorithm::dagger;
  throw std::invalid_argument("unknown algorithm '" + s + "'");
}

struct TrainingConfig {
  Algorithm algorithm = Algorithm::adapmen;
  InterventionCriterion criterion;  // threshold is the starting p
  LearnerSettings learner;
  std::size_t total_steps = 0;        // N
  std::size_t update_interval = 200;  // K
  std::optional<std::size_t> buffer_capacity;
  double gate_q_noise = 0.0;  // half-width of uniform noise added to the gate's Q table
  std::uint64_t seed = 0;
};

inline void validate_training_config(const TrainingConfig& c) {
  if (c.update_interval == 0) throw std::invalid_argument("update_interval must be positive");
  if (!(c.criterion.threshold >= 0.0)) throw std::invalid_argument("criterion.threshold must be non-negative");
  if (!(c.learner.smoothing > 0.0)) throw std::invalid_argument("learner.smoothing must be positive");
  if (!(c.learner.learning_rate > 0.0)) throw std::invalid_argument("learner.learning_rate must be positive");
  if (!(c.learner.label_noise >= 0.0 && c.learner.label_noise <= 1.0))
    throw std::invalid_argument("learner.label_noise must lie in [0,1]");
  if (!(c.gate_q_noise >= 0.0)) throw std::invalid_argument("gate_q_noise must be non-negative");
  if (c.buffer_capacity && *c.buffer_capacity == 0) throw std::invalid_argument("buffer_capacity must be positive");
}

struct IterationMetrics {
  std::size_t iteration = 0;
  std::size_t env_steps = 0;
  std::size_t window_steps = 0;
  std::size_t window_interventions = 0;
  double delta_estimate = 0.0;
  double epsb_estimate = 0.0;
  double p = 0.0;
  double J_learner = 0.0;
  double J_teacher = 0.0;
  double J_expert = 0.0;
  double suboptimality_gap = 0.0;
  std::size_t expert_action_usage = 0;
  std::size_t buffer_size = 0;
  std::size_t episodes = 0;
  bool operator==(const IterationMetrics&) const = default;
};

/// Uniform perturbation of every entry in [-scale, scale]; scale 0 draws nothing.
inline QTable perturb_q(const QTable& q, double scale, Rng& rng) {
  QTable out = q;
  if (scale <= 0.0) return out;
  for (std::size_t h = 1; h <= q.horizon(); ++h)
    for (StateId s = 0; s < q.num_states(); ++s)
      for (ActionId a = 0; a < q.num_actions(); ++a) out.at(h, s, a) += scale * (2.0 * rng.uniform01() - 1.0);
  return out;
}

// Generator streams derived from the run seed.
inline constexpr std::uint64_t kRolloutStream = 1;
inline constexpr std::uint64_t kLabelNoiseStream = 2;
inline constexpr std::uint64_t kGateNoiseStream = 3;

/**
 * The switching-teacher training loop as an explicit stepper. `propose()` samples the learner action and
 * evaluates the gate at the current step; `commit()` supplies the expert
 * label (when one was requested), executes, and advances. The headless
 * trainers and the interactive session both drive this class, which is what
 * makes them step-for-step identical.
 */
class TrainingRun {
 public:
  struct Proposal {
    std::size_t h = 1;
    StateId state = 0;
    ActionId learner_action = 0;
    double gap = 0.0;
    bool needs_label = false;
    ActionId expert_action = 0;  // what the exact expert would answer
  };

  TrainingRun(const TabularMDP& mdp, const OptimalSolution& opt, TrainingConfig config)
      : mdp_(mdp),
        opt_(opt),
        cfg_(std::move(config)),
        buffer_(cfg_.buffer_capacity),
        learner_(PolicyTable::uniform(mdp.num_states(), mdp.num_actions())),
        rollout_rng_(derive_seed(cfg_.seed, kRolloutStream)),
        noise_rng_(derive_seed(cfg_.seed, kLabelNoiseStream)) {
    validate_training_config(cfg_);
    Rng gate_rng(derive_seed(cfg_.seed, kGateNoiseStream));
    gate_q_ = perturb_q(opt_.q, cfg_.gate_q_noise, gate_rng);
    p_ = cfg_.criterion.threshold;
    in_warmup_ = adaptive() && cfg_.criterion.warmup_steps > 0;
    j_expert_ = policy_value(mdp_, opt_.expert);
  }

  const TrainingConfig& config() const { return cfg_; }
  bool done() const { return env_steps_ >= cfg_.total_steps; }
  bool has_proposal() const { return pending_.has_value(); }
  bool in_warmup() const { return in_warmup_; }
  double threshold() const { return in_warmup_ ? 0.0 : p_; }
  std::size_t env_steps() const { return env_steps_; }
  std::size_t episodes() const { return episodes_; }
  std::size_t expert_action_usage() const { return buffer_.total_added(); }
  double episode_return() const { return episode_return_; }
  const PolicyTable& learner() const { return learner_; }
  const InterventionBuffer& buffer() const { return buffer_; }
  const QTable& gate_q() const { return gate_q_; }
  const std::vector<IterationMetrics>& metrics() const { return metrics_; }
  const std::vector<bool>& intervention_flags() const { return flags_; }
  std::size_t missed_labels() const { return missed_; }
  GateContext gate_context() const { return {gate_q_, opt_.expert}; }

  /// Current (h, s) and gate decision; idempotent until the next commit.
  const Proposal& propose() {
    if (done()) throw std::logic_error("training run already finished");
    if (pending_) return *pending_;
    if (h_ == 0) {
      state_ = sample_initial_state(mdp_, rollout_rng_);
      h_ = 1;
      episode_return_ = 0.0;
    }
    Proposal prop;
    prop.h = h_;
    prop.state = state_;
    prop.expert_action = opt_.expert.action(h_, state_);
    const GateDecision d =
        gate_step(learner_, gate_context(), cfg_.criterion.kind, threshold(), state_, h_, rollout_rng_);
    prop.learner_action = d.learner_action;
    prop.gap = d.gap;
    prop.needs_label = cfg_.algorithm == Algorithm::adapmen ? d.intervene : true;
    pending_ = prop;
    return *pending_;
  }

  /**
   * Completes the proposed step. `label` must be present when a label was
   * requested; an absent label on such a step is the timeout fallback: the
   * learner acts, nothing is stored, and the miss is counted.
   */
  StepRecord commit(std::optional<ActionId> label) {
    if (label && *label >= mdp_.num_actions()) throw std::out_of_range("label action out of range");
    if (label && !propose().needs_label) throw std::logic_error("label supplied but none was requested");
    const Proposal prop = take_pending();
    StepRecord rec = base_record(prop);
    if (prop.needs_label && !label) {
      ++missed_;
      rec.executed_action = prop.learner_action;
    } else if (prop.needs_label) {
      rec.expert_action = *label;
      buffer_add(prop, *label);
      if (cfg_.algorithm == Algorithm::dagger) {
        rec.executed_action = prop.learner_action;
      } else {
        rec.intervened = true;
        rec.executed_action = *label;
      }
    } else {
      rec.executed_action = prop.learner_action;
    }
    return finish(rec);
  }

  /// Human-gated takeover: the label is executed and stored whatever the gate said.
  StepRecord commit_takeover(ActionId label) {
    if (label >= mdp_.num_actions()) throw std::out_of_range("label action out of range");
    const Proposal prop = take_pending();
    StepRecord rec = base_record(prop);
    rec.expert_action = label;
    rec.intervened = true;
    rec.executed_action = label;
    buffer_add(prop, label);
    return finish(rec);
  }

  /// Learner acts regardless of the gate (human-gated mode without takeover).
  StepRecord commit_learner() {
    const Proposal prop = take_pending();
    StepRecord rec = base_record(prop);
    rec.executed_action = prop.learner_action;
    return finish(rec);
  }

  /// Runs to completion with the exact expert answering every request.
  void run_headless() {
    while (!done()) {
      const Proposal& prop = propose();
      commit(prop.needs_label ? std::optional<ActionId>(prop.expert_action) : std::nullopt);
    }
  }

 private:
  bool adaptive() const { return cfg_.algorithm == Algorithm::adapmen && cfg_.criterion.adaptive; }

  std::size_t window_target() const {
    return in_warmup_ ? cfg_.criterion.warmup_steps : cfg_.update_interval;
  }

  Proposal take_pending() {
    if (!pending_) propose();
    Proposal prop = *pending_;
    pending_.reset();
    return prop;
  }

  StepRecord base_record(const Proposal& prop) const {
    StepRecord rec;
    rec.h = prop.h;
    rec.state = prop.state;
    rec.learner_action = prop.learner_action;
    rec.gap = prop.gap;
    return rec;
  }

  void buffer_add(const Proposal& prop, ActionId label) {
    const InterventionBuffer::Sample sample{prop.state, label, prop.h};
    buffer_.add(sample);
    window_samples_.push_back(sample);
  }

  StepRecord finish(StepRecord rec) {
    rec.reward = mdp_.reward(rec.state, rec.executed_action);
    episode_return_ += rec.reward;
    ++env_steps_;
    ++window_steps_;
    window_interventions_ += rec.intervened ? 1 : 0;
    flags_.push_back(rec.intervened);
    window_trace_.steps.push_back(rec);
    if (h_ < mdp_.horizon()) {
      state_ = sample_next_state(mdp_, state_, rec.executed_action, rollout_rng_);
      ++h_;
    } else {
      h_ = 0;
      ++episodes_;
      last_episode_return_ = episode_return_;
    }
    if (window_steps_ >= window_target() || done()) close_window();
    return rec;
  }

  void refit() {
    if (cfg_.learner.kind == LearnerKind::mle_tabular) {
      learner_ = fit_mle(buffer_, mdp_.num_states(), mdp_.num_actions(), cfg_.learner.smoothing,
                         cfg_.learner.label_noise, noise_rng_);
    } else {
      eg_update(learner_, window_samples_, cfg_.learner.label_noise, cfg_.learner.learning_rate, noise_rng_);
    }
  }

  void close_window() {
    refit();
    const double delta = static_cast<double>(window_interventions_) / static_cast<double>(window_steps_);
    const double epsb = buffer_.empty() ? 0.0 : estimate_epsb(buffer_, learner_);
    const std::size_t H = mdp_.horizon();
    if (in_warmup_) {
      const RolloutTrace* first = &window_trace_;
      p_ = init_p(std::span<const RolloutTrace>(first, 1), learner_, H);
      in_warmup_ = false;
    } else if (adaptive()) {
      adaptive_state_.last_delta_estimate = delta;
      adaptive_state_.last_epsb_estimate = epsb;
      adaptive_state_.steps_observed += window_steps_;
      p_ = adapt_threshold(p_, adaptive_state_, H);
    }

    IterationMetrics m;
    m.iteration = metrics_.size() + 1;
    m.env_steps = env_steps_;
    m.window_steps = window_steps_;
    m.window_interventions = window_interventions_;
    m.delta_estimate = delta;
    m.epsb_estimate = epsb;
    m.J_learner = policy_value(mdp_, learner_);
    m.J_expert = j_expert_;
    switch (cfg_.algorithm) {
      case Algorithm::adapmen:
        m.p = p_;
        m.J_teacher = policy_value(mdp_, teacher_policy(learner_, gate_context(), cfg_.criterion.kind, p_));
        break;
      case Algorithm::bc: m.J_teacher = j_expert_; break;
      case Algorithm::dagger: m.J_teacher = m.J_learner; break;
    }
    m.suboptimality_gap = j_expert_ - m.J_learner;
    m.expert_action_usage = buffer_.total_added();
    m.buffer_size = buffer_.size();
    m.episodes = episodes_;
    metrics_.push_back(m);

    window_steps_ = 0;
    window_interventions_ = 0;
    window_samples_.clear();
    window_trace_.steps.clear();
  }

  const TabularMDP& mdp_;
  const OptimalSolution& opt_;
  TrainingConfig cfg_;
  InterventionBuffer buffer_;
  PolicyTable learner_;
  QTable gate_q_;
  Rng rollout_rng_;
  Rng noise_rng_;
  double p_ = 0.0;
  double j_expert_ = 0.0;
  bool in_warmup_ = false;
  AdaptiveState adaptive_state_;

  std::size_t h_ = 0;  // 0 between episodes
  StateId state_ = 0;
  double episode_return_ = 0.0;
  double last_episode_return_ = 0.0;
  std::optional<Proposal> pending_;

  std::size_t env_steps_ = 0;
  std::size_t episodes_ = 0;
  std::size_t missed_ = 0;
  std::size_t window_steps_ = 0;
  std::size_t window_interventions_ = 0;
  std::vector<InterventionBuffer::Sample> window_samples_;
  RolloutTrace window_trace_;
  std::vector<bool> flags_;
  std::vector<IterationMetrics> metrics_;
};

struct TrainingResult {
  std::vector<IterationMetrics> metrics;
  PolicyTable learner;
  InterventionBuffer buffer;
  std::vector<bool> intervention_flags;
};

inline TrainingResult train(const TabularMDP& mdp, const OptimalSolution& opt, const TrainingConfig& config) {
  TrainingRun run(mdp, opt, config);
  run.run_headless();
  return {run.metrics(), run.learner(), run.buffer(), run.intervention_flags()};
}

inline TrainingResult train_adapmen(const TabularMDP& mdp, const OptimalSolution& opt, TrainingConfig config) {
  config.algorithm = Algorithm::adapmen;
  return train(mdp, opt, config);
}

inline TrainingResult train_bc(const TabularMDP& mdp, const OptimalSolution& opt, TrainingConfig config) {
  config.algorithm = Algorithm::bc;
  return train(mdp, opt, config);
}

inline TrainingResult train_dagger(const TabularMDP& mdp, const OptimalSolution& opt, TrainingConfig config) {
  config.algorithm = Algorithm::dagger;
  return train(mdp, opt, config);
}

}  // namespace adapmen
