#pragma once

// Test-only reference computations. Nothing here calls the library's DP; the
// only library pieces used are the MDP container and the policy row accessor.

#include <cstddef>
#include <vector>

#include "adapmen/mdp.hpp"

namespace oracle {

using adapmen::ActionId;
using adapmen::StateId;
using adapmen::TabularMDP;

/// The 2-state example: self-loops everywhere, r(s0, a0) = 1, H = 2, start s0.
inline TabularMDP hand_mdp() {
  TabularMDP m(2, 2, 2);
  for (StateId s = 0; s < 2; ++s)
    for (ActionId a = 0; a < 2; ++a) m.set_deterministic(s, a, s);
  m.set_reward(0, 0, 1.0);
  m.set_initial_state(0);
  return m;
}

namespace detail {

// Expected reward collected from step h onward, starting in s with action a
// already chosen, summed over every continuation path.
template <class P>
double paths_from(const TabularMDP& m, const P& pi, std::size_t h, StateId s, ActionId a) {
  double total = m.reward(s, a);
  if (h == m.horizon()) return total;
  const auto next = m.transition(s, a);
  for (StateId s2 = 0; s2 < m.num_states(); ++s2) {
    if (next[s2] == 0.0) continue;
    const auto row = pi.row(h + 1, s2);
    for (ActionId a2 = 0; a2 < m.num_actions(); ++a2) {
      if (row[a2] == 0.0) continue;
      total += next[s2] * row[a2] * paths_from(m, pi, h + 1, s2, a2);
    }
  }
  return total;
}

}  // namespace detail

/// Q^pi_h(s, a) by enumerating every trajectory suffix.
template <class P>
double enumerate_q(const TabularMDP& m, const P& pi, std::size_t h, StateId s, ActionId a) {
  return detail::paths_from(m, pi, h, s, a);
}

/// J(pi) by enumerating every trajectory from the initial distribution.
template <class P>
double enumerate_value(const TabularMDP& m, const P& pi) {
  double j = 0.0;
  for (StateId s = 0; s < m.num_states(); ++s) {
    const double rho = m.initial_dist()[s];
    if (rho == 0.0) continue;
    const auto row = pi.row(1, s);
    for (ActionId a = 0; a < m.num_actions(); ++a)
      if (row[a] != 0.0) j += rho * row[a] * detail::paths_from(m, pi, 1, s, a);
  }
  return j;
}

/// Optimal Q by enumerating every deterministic continuation: max over
/// actions at each later step of the expected enumerated return.
inline double enumerate_optimal_q(const TabularMDP& m, std::size_t h, StateId s, ActionId a) {
  double total = m.reward(s, a);
  if (h == m.horizon()) return total;
  const auto next = m.transition(s, a);
  for (StateId s2 = 0; s2 < m.num_states(); ++s2) {
    if (next[s2] == 0.0) continue;
    double best = -1e300;
    for (ActionId a2 = 0; a2 < m.num_actions(); ++a2) {
      const double q = enumerate_optimal_q(m, h + 1, s2, a2);
      if (q > best) best = q;
    }
    total += next[s2] * best;
  }
  return total;
}

/// Occupancy d_h(s) by forward enumeration of path probabilities.
template <class P>
std::vector<std::vector<double>> enumerate_occupancy(const TabularMDP& m, const P& pi) {
  const std::size_t S = m.num_states(), H = m.horizon();
  std::vector<std::vector<double>> d(H + 1, std::vector<double>(S, 0.0));
  struct Walk {
    const TabularMDP& m;
    const P& pi;
    std::vector<std::vector<double>>& d;
    void go(std::size_t h, StateId s, double prob) {
      d[h][s] += prob;
      if (h == m.horizon()) return;
      const auto row = pi.row(h, s);
      for (ActionId a = 0; a < m.num_actions(); ++a) {
        if (row[a] == 0.0) continue;
        const auto next = m.transition(s, a);
        for (StateId s2 = 0; s2 < m.num_states(); ++s2)
          if (next[s2] != 0.0) go(h + 1, s2, prob * row[a] * next[s2]);
      }
    }
  } walk{m, pi, d};
  for (StateId s = 0; s < S; ++s)
    if (m.initial_dist()[s] != 0.0) walk.go(1, s, m.initial_dist()[s]);
  return d;
}

}  // namespace oracle
