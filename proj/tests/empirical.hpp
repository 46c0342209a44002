#pragma once

// Monte Carlo checks shared by the unit tests and the acceptance binary.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <vector>

#include "adapmen/analysis.hpp"
#include "adapmen/divergence.hpp"
#include "adapmen/dp.hpp"
#include "adapmen/environments.hpp"
#include "adapmen/rollout.hpp"
#include "adapmen/training.hpp"

namespace empirical {

using namespace adapmen;

struct FixedTeacherRun {
  double beta_tv = 0.0;  // TV(empirical buffer states, exact beta)
  double delta_exact = 0.0;
  double delta_mc = 0.0;
  double j_exact = 0.0;
  double j_mc = 0.0;
  double j_mc_stderr = 0.0;
  std::size_t steps = 0;
  std::size_t samples = 0;
};

/**
 * Rolls the switching teacher for a fixed learner and threshold on a 12-state
 * random model until `min_steps` environment steps are collected, and compares
 * the buffer, the intervention rate and the returns with their DP values.
 */
inline FixedTeacherRun fixed_teacher_run(std::uint64_t seed, std::size_t min_steps = 50000) {
  const std::size_t S = 12, A = 3, H = 6;
  const TabularMDP mdp = make_random_mdp(S, A, H, seed, 0.3);
  const OptimalSolution opt = value_iteration_finite(mdp);
  Rng prng(derive_seed(seed, 1));
  const PolicyTable learner = make_random_policy(S, A, prng);
  // Threshold at the median D_Q over all (h, s), so the gate fires on a
  // sizeable share of states.
  std::vector<double> gaps;
  for (std::size_t h = 1; h <= H; ++h)
    for (StateId s = 0; s < S; ++s) gaps.push_back(dq_gap(opt.q, opt.expert, learner, s, h));
  std::nth_element(gaps.begin(), gaps.begin() + gaps.size() / 2, gaps.end());
  const double p = gaps[gaps.size() / 2];
  const TeacherAnalysis exact = analyze_teacher(mdp, opt, learner, p);

  InterventionCriterion crit;
  crit.threshold = p;
  const GateContext ctx{opt.q, opt.expert};
  InterventionBuffer buffer;
  Rng rng(derive_seed(seed, 2));
  FixedTeacherRun out;
  std::size_t fired = 0, episodes = 0;
  double sum = 0.0, sumsq = 0.0;
  while (out.steps < min_steps) {
    const RolloutTrace t = rollout_episode(mdp, learner, ctx, crit, buffer, rng);
    for (const auto& r : t.steps) fired += r.intervened ? 1 : 0;
    out.steps += t.steps.size();
    sum += t.episode_return;
    sumsq += t.episode_return * t.episode_return;
    ++episodes;
  }
  const double n = static_cast<double>(episodes);
  out.samples = buffer.size();
  out.beta_tv = tv_divergence(buffer_state_distribution(buffer, S), exact.beta);
  out.delta_exact = exact.delta;
  out.delta_mc = static_cast<double>(fired) / static_cast<double>(out.steps);
  out.j_exact = exact.J_teacher;
  out.j_mc = sum / n;
  out.j_mc_stderr = std::sqrt(std::max(0.0, sumsq / n - out.j_mc * out.j_mc) / n);
  return out;
}

struct TrendResult {
  double first_window_delta = 0.0;  // seed mean over the first 200 steps
  double last_window_delta = 0.0;   // seed mean over the final 200 steps
  bool p_finite = true;
  std::size_t seeds = 0;
};

/// Adaptive q_diff runs on cliffwalk(8, 16) without label noise.
inline TrendResult intervention_trend(std::size_t seeds, std::uint64_t base_seed = 0) {
  const TabularMDP mdp = make_cliffwalk(8, 16, 0.0);
  const OptimalSolution opt = value_iteration_finite(mdp);
  const std::size_t window = 200;
  TrendResult out;
  out.seeds = seeds;
  for (std::size_t s = 0; s < seeds; ++s) {
    TrainingConfig tc;
    tc.total_steps = 20000;
    tc.update_interval = window;
    tc.criterion.warmup_steps = window;
    tc.seed = derive_seed(base_seed, s);
    const TrainingResult r = train_adapmen(mdp, opt, tc);
    const auto& f = r.intervention_flags;
    std::size_t first = 0, last = 0;
    for (std::size_t i = 0; i < window; ++i) {
      first += f[i] ? 1 : 0;
      last += f[f.size() - window + i] ? 1 : 0;
    }
    out.first_window_delta += static_cast<double>(first) / window;
    out.last_window_delta += static_cast<double>(last) / window;
    for (const auto& m : r.metrics) out.p_finite = out.p_finite && std::isfinite(m.p);
  }
  out.first_window_delta /= static_cast<double>(seeds);
  out.last_window_delta /= static_cast<double>(seeds);
  return out;
}

}  // namespace empirical
