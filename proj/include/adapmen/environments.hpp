#pragma once

#include <algorithm>
#include <cstdint>
#include <stdexcept>
#include <string>
#include <vector>

#include "adapmen/dp.hpp"
#include "adapmen/mdp.hpp"
#include "adapmen/rng.hpp"

namespace adapmen {

enum class EnvKind { cliffwalk, chain, gridworld, random };

inline std::string to_string(EnvKind k) {
  switch (k) {
    case EnvKind::cliffwalk: return "cliffwalk";
    case EnvKind::chain: return "chain";
    case EnvKind::gridworld: return "gridworld";
    case EnvKind::random: return "random";
  }
  return "unknown";
}

inline EnvKind env_kind_from_string(const std::string& s) {
  if (s == "cliffwalk") return EnvKind::cliffwalk;
  if (s == "chain") return EnvKind::chain;
  if (s == "gridworld") return EnvKind::gridworld;
  if (s == "random") return EnvKind::random;
  throw std::invalid_argument("unknown environment kind '" + s + "'");
}

struct EnvSpec {
  EnvKind kind = EnvKind::cliffwalk;
  std::size_t width = 5;        // cliffwalk
  std::size_t rows = 4;         // gridworld
  std::size_t cols = 4;         // gridworld
  std::size_t num_states = 6;   // chain, random
  std::size_t num_actions = 3;  // random
  std::size_t horizon = 10;
  double slip = 0.0;
  double reward_sparsity = 0.0;  // random
  std::uint64_t seed = 0;        // random

  bool operator==(const EnvSpec&) const = default;
};

/// Display coordinates for grid-shaped environments (row 0 at the top).
struct GridGeometry {
  std::size_t rows = 0;
  std::size_t cols = 0;
  std::vector<std::size_t> cell_row;  // per state
  std::vector<std::size_t> cell_col;  // per state
  std::vector<std::string> cell_kind;  // per state, e.g. "edge", "field", "cliff", "goal"
  std::vector<std::string> action_names;
};

struct Environment {
  TabularMDP mdp;
  GridGeometry geometry;
};

// ---------------------------------------------------------------- cliffwalk

/**
 * Cliff corridor.
 *
 * Layout: a ledge of `width - 1` cells runs between a rock wall (north) and a
 * drop (south) and ends on a plateau cell. Above the plateau rises a column
 * of `kCliffFieldDepth` scrub cells. One absorbing "fallen" state.
 *
 * Actions: 0 east, 1 south, 2 north, 3 west, 4 stay.
 *   ledge:   east advances, south falls, west steps back, north and stay
 *            stay put; with probability `slip` any action ends in the fallen
 *            state instead.
 *   plateau: north enters the scrub, west steps back onto the ledge,
 *            everything else stays.
 *   scrub at depth r: south climbs back to depth r-1 (depth 0 is the
 *            plateau); every other action pushes one cell deeper.
 *   fallen:  absorbing.
 * Rewards: 1 for any action on the ledge or the plateau, 0 elsewhere. The
 * walker starts on ledge cell 0, so the expert collects exactly H. Falling at
 * step h keeps the reward of step h and loses the remaining H - h.
 */
inline constexpr std::size_t kCliffFieldDepth = 4;
inline constexpr std::size_t kCliffActions = 5;

struct CliffwalkLayout {
  std::size_t width;
  std::size_t depth = kCliffFieldDepth;
  StateId edge(std::size_t col) const { return col; }
  StateId plateau() const { return width - 1; }
  StateId field(std::size_t r) const { return width + (r - 1); }
  StateId fallen() const { return width + depth; }
  std::size_t num_states() const { return fallen() + 1; }
};

inline Environment make_cliffwalk_env(std::size_t width, std::size_t horizon, double slip) {
  if (width < 3) throw std::invalid_argument("cliffwalk: width must be at least 3");
  if (horizon < 1) throw std::invalid_argument("cliffwalk: horizon must be positive");
  if (!(slip >= 0.0 && slip < 0.5)) throw std::invalid_argument("cliffwalk: slip must lie in [0, 0.5)");
  enum : ActionId { kEast = 0, kSouth = 1, kNorth = 2, kWest = 3, kStay = 4 };
  const CliffwalkLayout L{width};
  Environment env{TabularMDP(L.num_states(), kCliffActions, horizon), {}};
  auto& m = env.mdp;
  const StateId fallen = L.fallen();
  const std::size_t end = width - 1;

  for (std::size_t c = 0; c < end; ++c) {
    const StateId s = L.edge(c);
    const auto move = [&](ActionId a, StateId nominal) {
      if (slip == 0.0 || nominal == fallen) {
        m.set_deterministic(s, a, nominal);
        return;
      }
      m.set_transition(s, a, nominal, 1.0 - slip);
      m.set_transition(s, a, fallen, slip);
    };
    move(kEast, L.edge(c + 1));
    move(kSouth, fallen);
    move(kNorth, s);
    move(kWest, L.edge(c == 0 ? 0 : c - 1));
    move(kStay, s);
  }
  const StateId top = L.plateau();
  for (ActionId a = 0; a < kCliffActions; ++a) m.set_deterministic(top, a, top);
  m.set_deterministic(top, kNorth, L.field(1));
  m.set_deterministic(top, kWest, L.edge(end - 1));
  for (std::size_t c = 0; c < width; ++c)
    for (ActionId a = 0; a < kCliffActions; ++a) m.set_reward(L.edge(c), a, 1.0);

  for (std::size_t r = 1; r <= L.depth; ++r) {
    const StateId s = L.field(r);
    const StateId down = r == 1 ? top : L.field(r - 1);
    const StateId up = L.field(std::min(r + 1, L.depth));
    for (ActionId a = 0; a < kCliffActions; ++a) m.set_deterministic(s, a, a == kSouth ? down : up);
  }
  for (ActionId a = 0; a < kCliffActions; ++a) m.set_deterministic(fallen, a, fallen);
  m.set_initial_state(L.edge(0));

  auto& g = env.geometry;
  g.rows = L.depth + 2;
  g.cols = width;
  g.cell_row.resize(L.num_states());
  g.cell_col.resize(L.num_states());
  g.cell_kind.resize(L.num_states());
  for (std::size_t c = 0; c < width; ++c) {
    g.cell_row[L.edge(c)] = L.depth;
    g.cell_col[L.edge(c)] = c;
    g.cell_kind[L.edge(c)] = c == end ? "goal" : "edge";
  }
  for (std::size_t r = 1; r <= L.depth; ++r) {
    g.cell_row[L.field(r)] = L.depth - r;
    g.cell_col[L.field(r)] = end;
    g.cell_kind[L.field(r)] = "field";
  }
  g.cell_row[fallen] = L.depth + 1;
  g.cell_col[fallen] = 0;
  g.cell_kind[fallen] = "cliff";
  g.action_names = {"east", "south", "north", "west", "stay"};
  return env;
}

inline TabularMDP make_cliffwalk(std::size_t width, std::size_t horizon, double slip) {
  return make_cliffwalk_env(width, horizon, slip).mdp;
}

// ---------------------------------------------------------------- chain

/**
 * River-swim style chain of `n` states. Action 0 moves left, action 1 tries
 * to move right and succeeds with probability 1 - slip (otherwise stays).
 * Reward 1 for any action in the rightmost state, 0.05 for moving left in
 * the leftmost state, 0 elsewhere. Starts in state 0.
 */
inline Environment make_chain_env(std::size_t n, std::size_t horizon, double slip) {
  if (n < 2) throw std::invalid_argument("chain: need at least 2 states");
  if (!(slip >= 0.0 && slip < 1.0)) throw std::invalid_argument("chain: slip must lie in [0, 1)");
  Environment env{TabularMDP(n, 2, horizon), {}};
  auto& m = env.mdp;
  for (StateId s = 0; s < n; ++s) {
    m.set_deterministic(s, 0, s == 0 ? 0 : s - 1);
    const StateId right = std::min(s + 1, n - 1);
    if (right == s || slip == 0.0) {
      m.set_deterministic(s, 1, right);
    } else {
      m.set_transition(s, 1, right, 1.0 - slip);
      m.set_transition(s, 1, s, slip);
    }
  }
  m.set_reward(0, 0, 0.05);
  m.set_reward(n - 1, 0, 1.0);
  m.set_reward(n - 1, 1, 1.0);
  m.set_initial_state(0);
  auto& g = env.geometry;
  g.rows = 1;
  g.cols = n;
  for (StateId s = 0; s < n; ++s) {
    g.cell_row.push_back(0);
    g.cell_col.push_back(s);
    g.cell_kind.push_back(s == n - 1 ? "goal" : "floor");
  }
  g.action_names = {"left", "right"};
  return env;
}

// ---------------------------------------------------------------- gridworld

/**
 * rows x cols grid, actions 0 east, 1 south, 2 north, 3 west. With
 * probability `slip` the move goes in a uniformly random direction instead.
 * Bumping into the border stays put. The bottom-right cell is an absorbing
 * goal paying 1 per step; start is the top-left cell.
 */
inline Environment make_gridworld_env(std::size_t rows, std::size_t cols, std::size_t horizon, double slip) {
  if (rows < 1 || cols < 1 || rows * cols < 2) throw std::invalid_argument("gridworld: need at least 2 cells");
  if (!(slip >= 0.0 && slip < 1.0)) throw std::invalid_argument("gridworld: slip must lie in [0, 1)");
  const std::size_t n = rows * cols;
  Environment env{TabularMDP(n, 4, horizon), {}};
  auto& m = env.mdp;
  const StateId goal = n - 1;
  const auto step = [&](StateId s, ActionId dir) -> StateId {
    std::size_t r = s / cols, c = s % cols;
    switch (dir) {
      case 0: c = std::min(c + 1, cols - 1); break;
      case 1: r = std::min(r + 1, rows - 1); break;
      case 2: r = r == 0 ? 0 : r - 1; break;
      default: c = c == 0 ? 0 : c - 1; break;
    }
    return r * cols + c;
  };
  for (StateId s = 0; s < n; ++s) {
    for (ActionId a = 0; a < 4; ++a) {
      if (s == goal) {
        m.set_deterministic(s, a, goal);
        m.set_reward(s, a, 1.0);
        continue;
      }
      auto row = m.transition(s, a);
      row[step(s, a)] += 1.0 - slip;
      for (ActionId d = 0; d < 4; ++d) row[step(s, d)] += slip / 4.0;
    }
  }
  m.set_initial_state(0);
  auto& g = env.geometry;
  g.rows = rows;
  g.cols = cols;
  for (StateId s = 0; s < n; ++s) {
    g.cell_row.push_back(s / cols);
    g.cell_col.push_back(s % cols);
    g.cell_kind.push_back(s == goal ? "goal" : "floor");
  }
  g.action_names = {"east", "south", "north", "west"};
  return env;
}

// ---------------------------------------------------------------- random

/**
 * Random MDP drawn from the pinned generator.
 *
 * Draw order: for each (s, a) in row-major order, S transition weights
 * w = u^3 + 1e-6 (normalised), then the reward u, then one sparsity draw
 * that zeroes the reward when it falls below `reward_sparsity`. Finally S
 * initial-distribution weights u + 1e-6 (normalised). `u` is uniform01().
 */
inline TabularMDP make_random_mdp(std::size_t num_states, std::size_t num_actions, std::size_t horizon,
                                  std::uint64_t seed, double reward_sparsity) {
  if (num_states < 2 || num_actions < 2) throw std::invalid_argument("random mdp: counts must be at least 2");
  if (!(reward_sparsity >= 0.0 && reward_sparsity <= 1.0))
    throw std::invalid_argument("random mdp: reward_sparsity must lie in [0, 1]");
  TabularMDP m(num_states, num_actions, horizon);
  Rng rng(seed);
  for (StateId s = 0; s < num_states; ++s) {
    for (ActionId a = 0; a < num_actions; ++a) {
      auto row = m.transition(s, a);
      double total = 0.0;
      for (auto& p : row) {
        const double u = rng.uniform01();
        p = u * u * u + 1e-6;
        total += p;
      }
      for (auto& p : row) p /= total;
      const double r = rng.uniform01();
      const bool zeroed = rng.uniform01() < reward_sparsity;
      m.set_reward(s, a, zeroed ? 0.0 : r);
    }
  }
  auto rho = m.initial_dist();
  double total = 0.0;
  for (auto& p : rho) {
    p = rng.uniform01() + 1e-6;
    total += p;
  }
  for (auto& p : rho) p /= total;
  return m;
}

/// Random stochastic policy with rows drawn like random-MDP transition rows.
inline PolicyTable make_random_policy(std::size_t num_states, std::size_t num_actions, Rng& rng) {
  PolicyTable pi(num_states, num_actions);
  for (StateId s = 0; s < num_states; ++s) {
    auto row = pi.row(s);
    double total = 0.0;
    for (auto& p : row) {
      const double u = rng.uniform01();
      p = u * u * u + 1e-6;
      total += p;
    }
    for (auto& p : row) p /= total;
  }
  return pi;
}

inline Environment make_env(const EnvSpec& spec) {
  switch (spec.kind) {
    case EnvKind::cliffwalk: return make_cliffwalk_env(spec.width, spec.horizon, spec.slip);
    case EnvKind::chain: return make_chain_env(spec.num_states, spec.horizon, spec.slip);
    case EnvKind::gridworld: return make_gridworld_env(spec.rows, spec.cols, spec.horizon, spec.slip);
    case EnvKind::random: {
      Environment env{make_random_mdp(spec.num_states, spec.num_actions, spec.horizon, spec.seed,
                                      spec.reward_sparsity),
                      {}};
      env.geometry.rows = 1;
      env.geometry.cols = spec.num_states;
      for (StateId s = 0; s < spec.num_states; ++s) {
        env.geometry.cell_row.push_back(0);
        env.geometry.cell_col.push_back(s);
        env.geometry.cell_kind.push_back("floor");
      }
      for (ActionId a = 0; a < spec.num_actions; ++a) env.geometry.action_names.push_back("a" + std::to_string(a));
      return env;
    }
  }
  throw std::invalid_argument("unknown environment kind");
}

/// mu = max over (h, s, a) of Q*_h(s, pi*) - Q*_h(s, a).
inline double mu_recoverability(const TabularMDP& mdp, const QTable& q_star, const ExpertPolicy& expert) {
  double mu = 0.0;
  for (std::size_t h = 1; h <= mdp.horizon(); ++h)
    for (StateId s = 0; s < mdp.num_states(); ++s) {
      const double best = q_star.at(h, s, expert.action(h, s));
      for (ActionId a = 0; a < mdp.num_actions(); ++a) mu = std::max(mu, best - q_star.at(h, s, a));
    }
  return mu;
}

}  // namespace adapmen
