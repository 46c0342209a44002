#pragma once

#include <algorithm>
#include <cstddef>
#include <span>
#include <vector>

#include "adapmen/mdp.hpp"

namespace adapmen {

/// Absolute tolerance under which two action values count as tied.
inline constexpr double kTieTolerance = 1e-12;

struct OptimalSolution {
  QTable q;
  ExpertPolicy expert;
};

namespace detail {

inline bool is_near_max(double value, double best) { return value >= best - kTieTolerance; }

// Bellman backup of one (h, s, a) entry given the next-step state values.
inline double backup(const TabularMDP& mdp, StateId s, ActionId a, std::span<const double> next_values) {
  double v = mdp.reward(s, a);
  if (next_values.empty()) return v;
  const auto row = mdp.transition(s, a);
  for (StateId n = 0; n < mdp.num_states(); ++n) v += row[n] * next_values[n];
  return v;
}

}  // namespace detail

/**
 * Backward induction for the optimal finite-horizon action values.
 *
 * Q*_H(s,a) = r(s,a); Q*_h(s,a) = r(s,a) + sum_s' P(s'|s,a) max_a' Q*_{h+1}(s',a').
 *
 * Expert extraction: at h = 1 the lowest-index maximiser; at later steps the
 * previous step's action is kept while it remains a maximiser, otherwise the
 * lowest-index maximiser. This yields a stationary expert whenever ties allow.
 */
inline OptimalSolution value_iteration_finite(const TabularMDP& mdp) {
  const std::size_t H = mdp.horizon(), S = mdp.num_states(), A = mdp.num_actions();
  OptimalSolution sol{QTable(H, S, A), ExpertPolicy(H, S, A)};
  std::vector<double> next_values;  // empty at h = H
  std::vector<double> values(S);
  for (std::size_t h = H; h >= 1; --h) {
    for (StateId s = 0; s < S; ++s) {
      double best = 0.0;
      for (ActionId a = 0; a < A; ++a) {
        const double q = detail::backup(mdp, s, a, next_values);
        sol.q.at(h, s, a) = q;
        best = a == 0 ? q : std::max(best, q);
      }
      values[s] = best;
    }
    next_values = values;
  }
  for (std::size_t h = 1; h <= H; ++h) {
    for (StateId s = 0; s < S; ++s) {
      const auto q = sol.q.row(h, s);
      const double best = *std::max_element(q.begin(), q.end());
      ActionId chosen = 0;
      if (h > 1 && detail::is_near_max(q[sol.expert.action(h - 1, s)], best)) {
        chosen = sol.expert.action(h - 1, s);
      } else {
        while (!detail::is_near_max(q[chosen], best)) ++chosen;
      }
      sol.expert.set_action(h, s, chosen);
    }
  }
  return sol;
}

/// Q^pi_h(s,a) = r(s,a) + sum_s' P(s'|s,a) sum_a' pi_{h+1}(a'|s') Q^pi_{h+1}(s',a').
template <PolicyLike P>
QTable policy_q(const TabularMDP& mdp, const P& policy) {
  const std::size_t H = mdp.horizon(), S = mdp.num_states(), A = mdp.num_actions();
  QTable q(H, S, A);
  std::vector<double> next_values;
  std::vector<double> values(S);
  for (std::size_t h = H; h >= 1; --h) {
    for (StateId s = 0; s < S; ++s) {
      for (ActionId a = 0; a < A; ++a) q.at(h, s, a) = detail::backup(mdp, s, a, next_values);
      values[s] = q.expected(h, s, policy.row(h, s));
    }
    next_values = values;
  }
  return q;
}

/// J(pi) = E_{s ~ rho} Q^pi_1(s, pi).
template <PolicyLike P>
double policy_value(const TabularMDP& mdp, const P& policy) {
  const QTable q = policy_q(mdp, policy);
  double j = 0.0;
  const auto rho = mdp.initial_dist();
  for (StateId s = 0; s < mdp.num_states(); ++s)
    if (rho[s] > 0.0) j += rho[s] * q.expected(1, s, policy.row(1, s));
  return j;
}

/// d_1 = rho; d_{h+1}(s') = sum_{s,a} d_h(s) pi_h(a|s) P(s'|s,a).
template <PolicyLike P>
OccupancyTable occupancy(const TabularMDP& mdp, const P& policy) {
  const std::size_t H = mdp.horizon(), S = mdp.num_states(), A = mdp.num_actions();
  OccupancyTable occ(H, S);
  std::copy(mdp.initial_dist().begin(), mdp.initial_dist().end(), occ.step(1).begin());
  for (std::size_t h = 1; h < H; ++h) {
    const auto cur = occ.step(h);
    auto next = occ.step(h + 1);
    for (StateId s = 0; s < S; ++s) {
      if (cur[s] == 0.0) continue;
      const auto pi = policy.row(h, s);
      for (ActionId a = 0; a < A; ++a) {
        const double w = cur[s] * pi[a];
        if (w == 0.0) continue;
        const auto row = mdp.transition(s, a);
        for (StateId n = 0; n < S; ++n) next[n] += w * row[n];
      }
    }
  }
  auto avg = occ.average();
  for (std::size_t h = 1; h <= H; ++h) {
    const auto d = occ.step(h);
    for (StateId s = 0; s < S; ++s) avg[s] += d[s] / static_cast<double>(H);
  }
  return occ;
}

/// Greedy (lowest-index tie-break) deterministic policy of a Q table.
inline ExpertPolicy greedy_policy(const QTable& q) {
  ExpertPolicy g(q.horizon(), q.num_states(), q.num_actions());
  for (std::size_t h = 1; h <= q.horizon(); ++h)
    for (StateId s = 0; s < q.num_states(); ++s) {
      const auto r = q.row(h, s);
      g.set_action(h, s, static_cast<ActionId>(std::max_element(r.begin(), r.end()) - r.begin()));
    }
  return g;
}

}  // namespace adapmen
