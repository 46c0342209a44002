#pragma once

#include <algorithm>
#include <cmath>
#include <limits>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "adapmen/divergence.hpp"
#include "adapmen/mdp.hpp"
#include "adapmen/trace.hpp"

namespace adapmen {

enum class CriterionKind { q_diff, tv_surrogate, sqrt_kl_surrogate };

inline std::string to_string(CriterionKind k) {
  switch (k) {
    case CriterionKind::q_diff: return "q_diff";
    case CriterionKind::tv_surrogate: return "tv_surrogate";
    case CriterionKind::sqrt_kl_surrogate: return "sqrt_kl_surrogate";
  }
  return "unknown";
}

inline CriterionKind criterion_kind_from_string(const std::string& s) {
  if (s == "q_diff") return CriterionKind::q_diff;
  if (s == "tv_surrogate") return CriterionKind::tv_surrogate;
  if (s == "sqrt_kl_surrogate") return CriterionKind::sqrt_kl_surrogate;
  throw std::invalid_argument("unknown criterion kind '" + s + "'");
}

struct InterventionCriterion {
  CriterionKind kind = CriterionKind::q_diff;
  double threshold = 0.0;  // p
  bool adaptive = true;
  std::size_t warmup_steps = 0;
};

struct AdaptiveState {
  double last_delta_estimate = 0.0;
  double last_epsb_estimate = 0.0;
  std::size_t steps_observed = 0;
};

/// What the teacher consults: a Q table for the expert (exact or perturbed)
/// and the expert's own deterministic policy.
struct GateContext {
  const QTable& q;
  const ExpertPolicy& expert;
};

/// D_Q = Q_h(s, pi*) - sum_a pi(a|s) Q_h(s, a), clamped at 0 against rounding.
inline double dq_gap(const QTable& q, const ExpertPolicy& expert, std::span<const double> learner_row, StateId s,
                     std::size_t h) {
  const double expert_value = q.at(h, s, expert.action(h, s));
  return std::max(0.0, expert_value - q.expected(h, s, learner_row));
}

template <PolicyLike P>
double dq_gap(const QTable& q, const ExpertPolicy& expert, const P& learner, StateId s, std::size_t h) {
  return dq_gap(q, expert, learner.row(h, s), s, h);
}

/// Remaining-horizon factor H - h + 1 used by both divergence surrogates.
inline double remaining_steps(std::size_t h, std::size_t horizon) {
  if (h < 1 || h > horizon) throw std::out_of_range("timestep out of range");
  return static_cast<double>(horizon - h + 1);
}

inline double surrogate_gap_tv(const ExpertPolicy& expert, std::span<const double> learner_row, StateId s,
                               std::size_t h, std::size_t horizon) {
  return tv_divergence(expert.row(h, s), learner_row) * remaining_steps(h, horizon);
}

inline double surrogate_gap_sqrt_kl(const ExpertPolicy& expert, std::span<const double> learner_row, StateId s,
                                    std::size_t h, std::size_t horizon) {
  const double kl = kl_divergence(expert.row(h, s), learner_row);
  if (std::isinf(kl)) return kl;
  return std::sqrt(kl) * remaining_steps(h, horizon);
}

/// Gap value of the configured criterion at (s, h).
inline double criterion_gap(CriterionKind kind, const GateContext& ctx, std::span<const double> learner_row,
                            StateId s, std::size_t h) {
  switch (kind) {
    case CriterionKind::q_diff: return dq_gap(ctx.q, ctx.expert, learner_row, s, h);
    case CriterionKind::tv_surrogate: return surrogate_gap_tv(ctx.expert, learner_row, s, h, ctx.q.horizon());
    case CriterionKind::sqrt_kl_surrogate:
      return surrogate_gap_sqrt_kl(ctx.expert, learner_row, s, h, ctx.q.horizon());
  }
  throw std::invalid_argument("unknown criterion kind");
}

/// Intervene iff gap > p (strict).
inline bool should_intervene(double threshold, double gap) { return gap > threshold; }
inline bool should_intervene(const InterventionCriterion& c, double gap) { return should_intervene(c.threshold, gap); }

/// p = delta * eps_b * H.
inline double update_p(const AdaptiveState& state, std::size_t horizon) {
  if (state.steps_observed < 1) throw std::invalid_argument("update_p: no observed steps");
  return state.last_delta_estimate * state.last_epsb_estimate * static_cast<double>(horizon);
}

/**
 * Threshold schedule used by the training loop: the update_p formula, except
 * that a window without any intervention keeps the previous p.
 */
inline double adapt_threshold(double previous_p, const AdaptiveState& state, std::size_t horizon) {
  if (state.last_delta_estimate <= 0.0) return previous_p;
  return update_p(state, horizon);
}

/**
 * Initial threshold from warmup traces collected with an always-intervening
 * teacher: (fraction of steps with gap > 0) * (mean loss of `learner` on the
 * labelled steps) * H. When that loss is 0 the median positive gap is used,
 * and 0 when no gap was positive.
 */
inline double init_p(std::span<const RolloutTrace> warmup, const PolicyTable& learner, std::size_t horizon) {
  std::size_t steps = 0, positive = 0, labelled = 0;
  double loss = 0.0;
  std::vector<double> positive_gaps;
  for (const auto& trace : warmup) {
    for (const auto& rec : trace.steps) {
      ++steps;
      if (rec.gap > 0.0) {
        ++positive;
        positive_gaps.push_back(rec.gap);
      }
      if (rec.expert_action) {
        ++labelled;
        loss += 1.0 - learner.prob(rec.state, *rec.expert_action);
      }
    }
  }
  if (steps == 0) throw std::invalid_argument("init_p: empty warmup window");
  const double mean_loss = labelled == 0 ? 0.0 : loss / static_cast<double>(labelled);
  if (mean_loss > 0.0)
    return static_cast<double>(positive) / static_cast<double>(steps) * mean_loss * static_cast<double>(horizon);
  if (positive_gaps.empty()) return 0.0;
  std::sort(positive_gaps.begin(), positive_gaps.end());
  const std::size_t n = positive_gaps.size();
  return n % 2 == 1 ? positive_gaps[n / 2] : 0.5 * (positive_gaps[n / 2 - 1] + positive_gaps[n / 2]);
}

}  // namespace adapmen
