#pragma once

#include <cstddef>
#include <limits>
#include <optional>

#include "adapmen/gating.hpp"
#include "adapmen/learner.hpp"
#include "adapmen/mdp.hpp"
#include "adapmen/rng.hpp"
#include "adapmen/trace.hpp"

namespace adapmen {

/// Gate outcome for one (s, h) before any expert label is consumed.
struct GateDecision {
  ActionId learner_action = 0;
  double gap = 0.0;
  bool intervene = false;
};

/**
 * The learner action is always sampled first, so the generator advances by
 * the same amount whether or not the gate fires.
 */
template <PolicyLike P>
GateDecision gate_step(const P& learner, const GateContext& ctx, CriterionKind kind, double threshold, StateId s,
                       std::size_t h, Rng& rng) {
  GateDecision d;
  const auto row = learner.row(h, s);
  d.learner_action = rng.categorical(row);
  d.gap = criterion_gap(kind, ctx, row, s, h);
  d.intervene = should_intervene(threshold, d.gap);
  return d;
}

struct TeacherStep {
  ActionId executed_action = 0;
  bool intervened = false;
  double gap = 0.0;
  ActionId learner_action = 0;
};

template <PolicyLike P>
TeacherStep teacher_step(const P& learner, const GateContext& ctx, const InterventionCriterion& criterion, StateId s,
                         std::size_t h, Rng& rng) {
  const GateDecision d = gate_step(learner, ctx, criterion.kind, criterion.threshold, s, h, rng);
  return {d.intervene ? ctx.expert.action(h, s) : d.learner_action, d.intervene, d.gap, d.learner_action};
}

inline StateId sample_initial_state(const TabularMDP& mdp, Rng& rng) { return rng.categorical(mdp.initial_dist()); }

inline StateId sample_next_state(const TabularMDP& mdp, StateId s, ActionId a, Rng& rng) {
  return rng.categorical(mdp.transition(s, a));
}

/**
 * One H-step episode of the switching teacher. Every intervention appends
 * (s, expert action, h) to `buffer`.
 */
template <PolicyLike P>
RolloutTrace rollout_episode(const TabularMDP& mdp, const P& learner, const GateContext& ctx,
                             const InterventionCriterion& criterion, InterventionBuffer& buffer, Rng& rng) {
  RolloutTrace trace;
  trace.steps.reserve(mdp.horizon());
  StateId s = sample_initial_state(mdp, rng);
  for (std::size_t h = 1; h <= mdp.horizon(); ++h) {
    const TeacherStep t = teacher_step(learner, ctx, criterion, s, h, rng);
    StepRecord rec;
    rec.h = h;
    rec.state = s;
    rec.learner_action = t.learner_action;
    rec.gap = t.gap;
    rec.intervened = t.intervened;
    rec.executed_action = t.executed_action;
    if (t.intervened) {
      rec.expert_action = t.executed_action;
      buffer.add({s, t.executed_action, h});
    }
    rec.reward = mdp.reward(s, rec.executed_action);
    trace.episode_return += rec.reward;
    trace.steps.push_back(rec);
    if (h < mdp.horizon()) s = sample_next_state(mdp, s, rec.executed_action, rng);
  }
  return trace;
}

/// The state-wise mixture "expert where gap > p, learner elsewhere" as an
/// explicit time-indexed policy, so its value is exact under DP.
template <PolicyLike P>
TimedPolicy teacher_policy(const P& learner, const GateContext& ctx, CriterionKind kind, double threshold) {
  const std::size_t H = ctx.q.horizon(), S = learner.num_states(), A = learner.num_actions();
  TimedPolicy out(H, S, A);
  for (std::size_t h = 1; h <= H; ++h)
    for (StateId s = 0; s < S; ++s) {
      const auto row = learner.row(h, s);
      auto dst = out.row(h, s);
      if (should_intervene(threshold, criterion_gap(kind, ctx, row, s, h))) {
        const auto e = ctx.expert.row(h, s);
        std::copy(e.begin(), e.end(), dst.begin());
      } else {
        std::copy(row.begin(), row.end(), dst.begin());
      }
    }
  return out;
}

/// Learner policy unrolled over time, for places that need a TimedPolicy.
inline TimedPolicy as_timed(const PolicyTable& pi, std::size_t horizon) {
  TimedPolicy out(horizon, pi.num_states(), pi.num_actions());
  for (std::size_t h = 1; h <= horizon; ++h)
    for (StateId s = 0; s < pi.num_states(); ++s) std::copy(pi.row(s).begin(), pi.row(s).end(), out.row(h, s).begin());
  return out;
}

}  // namespace adapmen
