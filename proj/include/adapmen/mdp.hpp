#pragma once

#include <algorithm>
#include <cmath>
#include <concepts>
#include <cstddef>
#include <numeric>
#include <sstream>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

namespace adapmen {

using StateId = std::size_t;
using ActionId = std::size_t;

/// Tolerance for "sums to one" and "non-negative" checks on distributions.
inline constexpr double kProbTolerance = 1e-9;

/**
 * Finite-horizon tabular MDP (S, A, P, H, r, rho).
 *
 * Timesteps are 1-based throughout the library: h ranges over [1, H].
 * Rewards are expected to lie in [0, 1]; validate_mdp reports violations
 * instead of the constructor rejecting them so that broken inputs can be
 * diagnosed in full.
 */
class TabularMDP {
 public:
  TabularMDP() = default;
  TabularMDP(std::size_t num_states, std::size_t num_actions, std::size_t horizon)
      : num_states_(num_states),
        num_actions_(num_actions),
        horizon_(horizon),
        transition_(num_states * num_actions * num_states, 0.0),
        reward_(num_states * num_actions, 0.0),
        initial_(num_states, 0.0) {
    if (num_states == 0 || num_actions == 0 || horizon == 0)
      throw std::invalid_argument("TabularMDP: counts and horizon must be positive");
  }

  std::size_t num_states() const { return num_states_; }
  std::size_t num_actions() const { return num_actions_; }
  std::size_t horizon() const { return horizon_; }

  std::span<const double> transition(StateId s, ActionId a) const {
    return {transition_.data() + row_offset(s, a), num_states_};
  }
  std::span<double> transition(StateId s, ActionId a) {
    return {transition_.data() + row_offset(s, a), num_states_};
  }
  double transition(StateId s, ActionId a, StateId next) const {
    return transition_[row_offset(s, a) + next];
  }
  void set_transition(StateId s, ActionId a, StateId next, double p) {
    transition_[row_offset(s, a) + check_state(next)] = p;
  }
  /// Replaces the row P(.|s,a) by a point mass on `next`.
  void set_deterministic(StateId s, ActionId a, StateId next) {
    auto row = transition(s, a);
    std::fill(row.begin(), row.end(), 0.0);
    row[check_state(next)] = 1.0;
  }

  double reward(StateId s, ActionId a) const { return reward_[check_state(s) * num_actions_ + check_action(a)]; }
  void set_reward(StateId s, ActionId a, double r) {
    reward_[check_state(s) * num_actions_ + check_action(a)] = r;
  }

  std::span<const double> initial_dist() const { return initial_; }
  std::span<double> initial_dist() { return initial_; }
  void set_initial_state(StateId s) {
    std::fill(initial_.begin(), initial_.end(), 0.0);
    initial_[check_state(s)] = 1.0;
  }

  bool operator==(const TabularMDP&) const = default;

 private:
  std::size_t row_offset(StateId s, ActionId a) const {
    return (check_state(s) * num_actions_ + check_action(a)) * num_states_;
  }
  StateId check_state(StateId s) const {
    if (s >= num_states_) throw std::out_of_range("state index out of range");
    return s;
  }
  ActionId check_action(ActionId a) const {
    if (a >= num_actions_) throw std::out_of_range("action index out of range");
    return a;
  }

  std::size_t num_states_ = 0;
  std::size_t num_actions_ = 0;
  std::size_t horizon_ = 0;
  std::vector<double> transition_;
  std::vector<double> reward_;
  std::vector<double> initial_;
};

/// Report of violated TabularMDP invariants; empty iff the model is valid.
struct ValidationReport {
  std::vector<std::string> issues;
  bool ok() const { return issues.empty(); }
};

inline ValidationReport validate_mdp(const TabularMDP& mdp) {
  ValidationReport report;
  const auto add = [&](const std::string& msg) { report.issues.push_back(msg); };
  for (StateId s = 0; s < mdp.num_states(); ++s) {
    for (ActionId a = 0; a < mdp.num_actions(); ++a) {
      const auto row = mdp.transition(s, a);
      double sum = 0.0;
      bool negative = false;
      for (double p : row) {
        if (!std::isfinite(p) || p < -kProbTolerance) negative = true;
        sum += p;
      }
      if (negative) {
        std::ostringstream os;
        os << "transition row (s=" << s << ",a=" << a << ") has a negative or non-finite entry";
        add(os.str());
      }
      if (!(std::abs(sum - 1.0) <= kProbTolerance)) {
        std::ostringstream os;
        os << "transition row (s=" << s << ",a=" << a << ") sums to " << sum;
        add(os.str());
      }
      const double r = mdp.reward(s, a);
      if (!(r >= 0.0 && r <= 1.0)) {
        std::ostringstream os;
        os << "reward (s=" << s << ",a=" << a << ") = " << r << " outside [0,1]";
        add(os.str());
      }
    }
  }
  double init_sum = 0.0;
  bool init_negative = false;
  for (double p : mdp.initial_dist()) {
    if (!std::isfinite(p) || p < -kProbTolerance) init_negative = true;
    init_sum += p;
  }
  if (init_negative) add("initial distribution has a negative or non-finite entry");
  if (!(std::abs(init_sum - 1.0) <= kProbTolerance)) {
    std::ostringstream os;
    os << "initial distribution sums to " << init_sum;
    add(os.str());
  }
  return report;
}

/// Any policy type usable by the DP routines: a distribution over actions
/// for every (timestep, state).
template <class P>
concept PolicyLike = requires(const P& p, std::size_t h, StateId s) {
  { p.row(h, s) } -> std::convertible_to<std::span<const double>>;
  { p.num_states() } -> std::convertible_to<std::size_t>;
  { p.num_actions() } -> std::convertible_to<std::size_t>;
};

/// Stationary stochastic policy pi(a|s).
class PolicyTable {
 public:
  PolicyTable() = default;
  PolicyTable(std::size_t num_states, std::size_t num_actions)
      : num_states_(num_states), num_actions_(num_actions), probs_(num_states * num_actions, 0.0) {}

  static PolicyTable uniform(std::size_t num_states, std::size_t num_actions) {
    PolicyTable p(num_states, num_actions);
    std::fill(p.probs_.begin(), p.probs_.end(), 1.0 / static_cast<double>(num_actions));
    return p;
  }

  static PolicyTable deterministic(std::span<const ActionId> actions, std::size_t num_actions) {
    PolicyTable p(actions.size(), num_actions);
    for (StateId s = 0; s < actions.size(); ++s) p.probs_[s * num_actions + actions[s]] = 1.0;
    return p;
  }

  std::size_t num_states() const { return num_states_; }
  std::size_t num_actions() const { return num_actions_; }

  std::span<const double> row(StateId s) const { return {probs_.data() + s * num_actions_, num_actions_}; }
  std::span<double> row(StateId s) { return {probs_.data() + s * num_actions_, num_actions_}; }
  std::span<const double> row(std::size_t /*h*/, StateId s) const { return row(s); }
  double prob(StateId s, ActionId a) const { return probs_[s * num_actions_ + a]; }

  /// Lowest-index action of maximal probability.
  ActionId argmax(StateId s) const {
    const auto r = row(s);
    return static_cast<ActionId>(std::max_element(r.begin(), r.end()) - r.begin());
  }

  bool is_deterministic() const {
    for (StateId s = 0; s < num_states_; ++s) {
      const auto r = row(s);
      if (std::none_of(r.begin(), r.end(), [](double p) { return std::abs(p - 1.0) <= kProbTolerance; }))
        return false;
    }
    return true;
  }

  /// Row-wise invariant check; returns a description of each bad row.
  std::vector<std::string> validate() const {
    std::vector<std::string> issues;
    for (StateId s = 0; s < num_states_; ++s) {
      const auto r = row(s);
      const double sum = std::accumulate(r.begin(), r.end(), 0.0);
      const bool negative = std::any_of(r.begin(), r.end(), [](double p) { return !(p >= -kProbTolerance); });
      if (negative || !(std::abs(sum - 1.0) <= kProbTolerance))
        issues.push_back("policy row " + std::to_string(s) + " is not a distribution");
    }
    return issues;
  }

  bool operator==(const PolicyTable&) const = default;

 private:
  std::size_t num_states_ = 0;
  std::size_t num_actions_ = 0;
  std::vector<double> probs_;
};

/// Non-stationary stochastic policy pi_h(a|s); used for the teacher mixture.
class TimedPolicy {
 public:
  TimedPolicy() = default;
  TimedPolicy(std::size_t horizon, std::size_t num_states, std::size_t num_actions)
      : horizon_(horizon),
        num_states_(num_states),
        num_actions_(num_actions),
        probs_(horizon * num_states * num_actions, 0.0) {}

  std::size_t horizon() const { return horizon_; }
  std::size_t num_states() const { return num_states_; }
  std::size_t num_actions() const { return num_actions_; }

  std::span<const double> row(std::size_t h, StateId s) const { return {probs_.data() + offset(h, s), num_actions_}; }
  std::span<double> row(std::size_t h, StateId s) { return {probs_.data() + offset(h, s), num_actions_}; }

 private:
  std::size_t offset(std::size_t h, StateId s) const {
    if (h < 1 || h > horizon_) throw std::out_of_range("timestep out of range");
    return ((h - 1) * num_states_ + s) * num_actions_;
  }

  std::size_t horizon_ = 0;
  std::size_t num_states_ = 0;
  std::size_t num_actions_ = 0;
  std::vector<double> probs_;
};

/**
 * Deterministic, possibly time-indexed expert policy.
 *
 * The greedy expert extracted from backward induction is stationary whenever
 * the tie-breaking allows it (see dp.hpp); the time index keeps it exact when
 * the optimal action genuinely changes with the remaining horizon.
 */
class ExpertPolicy {
 public:
  ExpertPolicy() = default;
  ExpertPolicy(std::size_t horizon, std::size_t num_states, std::size_t num_actions)
      : horizon_(horizon),
        num_states_(num_states),
        num_actions_(num_actions),
        actions_(horizon * num_states, 0),
        identity_(num_actions * num_actions, 0.0) {
    for (ActionId a = 0; a < num_actions; ++a) identity_[a * num_actions + a] = 1.0;
  }

  /// Lifts a stationary action table to every timestep.
  static ExpertPolicy stationary(std::size_t horizon, std::span<const ActionId> actions, std::size_t num_actions) {
    ExpertPolicy e(horizon, actions.size(), num_actions);
    for (std::size_t h = 1; h <= horizon; ++h)
      for (StateId s = 0; s < actions.size(); ++s) e.set_action(h, s, actions[s]);
    return e;
  }

  std::size_t horizon() const { return horizon_; }
  std::size_t num_states() const { return num_states_; }
  std::size_t num_actions() const { return num_actions_; }

  ActionId action(std::size_t h, StateId s) const { return actions_[offset(h, s)]; }
  void set_action(std::size_t h, StateId s, ActionId a) {
    if (a >= num_actions_) throw std::out_of_range("action index out of range");
    actions_[offset(h, s)] = a;
  }
  std::span<const double> row(std::size_t h, StateId s) const {
    return {identity_.data() + action(h, s) * num_actions_, num_actions_};
  }

  bool is_stationary() const {
    for (std::size_t h = 2; h <= horizon_; ++h)
      for (StateId s = 0; s < num_states_; ++s)
        if (action(h, s) != action(1, s)) return false;
    return true;
  }

  /// The h = 1 slice as a stationary one-hot table.
  PolicyTable first_step_table() const {
    std::vector<ActionId> acts(num_states_);
    for (StateId s = 0; s < num_states_; ++s) acts[s] = action(1, s);
    return PolicyTable::deterministic(acts, num_actions_);
  }

  bool operator==(const ExpertPolicy&) const = default;

 private:
  std::size_t offset(std::size_t h, StateId s) const {
    if (h < 1 || h > horizon_) throw std::out_of_range("timestep out of range");
    if (s >= num_states_) throw std::out_of_range("state index out of range");
    return (h - 1) * num_states_ + s;
  }

  std::size_t horizon_ = 0;
  std::size_t num_states_ = 0;
  std::size_t num_actions_ = 0;
  std::vector<ActionId> actions_;
  std::vector<double> identity_;
};

/// Time-indexed action values Q_h(s,a), h in [1, H].
class QTable {
 public:
  QTable() = default;
  QTable(std::size_t horizon, std::size_t num_states, std::size_t num_actions)
      : horizon_(horizon),
        num_states_(num_states),
        num_actions_(num_actions),
        values_(horizon * num_states * num_actions, 0.0) {}

  std::size_t horizon() const { return horizon_; }
  std::size_t num_states() const { return num_states_; }
  std::size_t num_actions() const { return num_actions_; }

  double at(std::size_t h, StateId s, ActionId a) const { return values_[offset(h, s) + a]; }
  double& at(std::size_t h, StateId s, ActionId a) { return values_[offset(h, s) + a]; }
  std::span<const double> row(std::size_t h, StateId s) const { return {values_.data() + offset(h, s), num_actions_}; }
  std::span<double> row(std::size_t h, StateId s) { return {values_.data() + offset(h, s), num_actions_}; }

  /// Q_h(s, pi) = sum_a pi(a) Q_h(s, a).
  double expected(std::size_t h, StateId s, std::span<const double> action_probs) const {
    const auto q = row(h, s);
    double v = 0.0;
    for (ActionId a = 0; a < num_actions_; ++a) v += action_probs[a] * q[a];
    return v;
  }

  std::span<const double> values() const { return values_; }

 private:
  std::size_t offset(std::size_t h, StateId s) const {
    if (h < 1 || h > horizon_) throw std::out_of_range("timestep out of range");
    return ((h - 1) * num_states_ + s) * num_actions_;
  }

  std::size_t horizon_ = 0;
  std::size_t num_states_ = 0;
  std::size_t num_actions_ = 0;
  std::vector<double> values_;
};

/// Per-step state distributions d_h(s) and their average over the horizon.
class OccupancyTable {
 public:
  OccupancyTable() = default;
  OccupancyTable(std::size_t horizon, std::size_t num_states)
      : horizon_(horizon), num_states_(num_states), per_step_(horizon * num_states, 0.0), average_(num_states, 0.0) {}

  std::size_t horizon() const { return horizon_; }
  std::size_t num_states() const { return num_states_; }

  double at(std::size_t h, StateId s) const { return step(h)[s]; }
  std::span<const double> step(std::size_t h) const {
    if (h < 1 || h > horizon_) throw std::out_of_range("timestep out of range");
    return {per_step_.data() + (h - 1) * num_states_, num_states_};
  }
  std::span<double> step(std::size_t h) {
    if (h < 1 || h > horizon_) throw std::out_of_range("timestep out of range");
    return {per_step_.data() + (h - 1) * num_states_, num_states_};
  }
  std::span<const double> average() const { return average_; }
  std::span<double> average() { return average_; }

 private:
  std::size_t horizon_ = 0;
  std::size_t num_states_ = 0;
  std::vector<double> per_step_;
  std::vector<double> average_;
};

}  // namespace adapmen
