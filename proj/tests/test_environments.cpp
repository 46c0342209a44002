#include <gtest/gtest.h>

#include <set>

#include "adapmen/dp.hpp"
#include "adapmen/environments.hpp"
#include "oracles.hpp"

using namespace adapmen;

TEST(Environments, AllKindsValidate) {
  for (EnvKind kind : {EnvKind::cliffwalk, EnvKind::chain, EnvKind::gridworld, EnvKind::random}) {
    EnvSpec spec;
    spec.kind = kind;
    spec.slip = 0.1;
    const Environment env = make_env(spec);
    EXPECT_TRUE(validate_mdp(env.mdp).ok()) << to_string(kind);
    EXPECT_EQ(env.geometry.cell_row.size(), env.mdp.num_states());
    EXPECT_EQ(env.geometry.cell_kind.size(), env.mdp.num_states());
    EXPECT_EQ(env.geometry.action_names.size(), env.mdp.num_actions());
    EXPECT_EQ(env_kind_from_string(to_string(kind)), kind);
  }
  EXPECT_THROW(env_kind_from_string("maze"), std::invalid_argument);
}

TEST(Environments, RandomIsReproducible) {
  EXPECT_TRUE(make_random_mdp(4, 3, 5, 9, 0.5) == make_random_mdp(4, 3, 5, 9, 0.5));
  EXPECT_FALSE(make_random_mdp(4, 3, 5, 9, 0.5) == make_random_mdp(4, 3, 5, 10, 0.5));
}

TEST(Cliffwalk, LayoutAndRewards) {
  const Environment env = make_cliffwalk_env(4, 6, 0.0);
  const CliffwalkLayout L{4};
  const auto& m = env.mdp;
  EXPECT_EQ(m.num_states(), L.num_states());
  EXPECT_EQ(m.initial_dist()[L.edge(0)], 1.0);
  EXPECT_EQ(m.transition(L.edge(0), 0, L.edge(1)), 1.0);   // east
  EXPECT_EQ(m.transition(L.edge(1), 1, L.fallen()), 1.0);  // south drops
  EXPECT_EQ(m.transition(L.edge(1), 2, L.edge(1)), 1.0);   // north is a wall
  EXPECT_EQ(m.transition(L.plateau(), 2, L.field(1)), 1.0);
  EXPECT_EQ(m.transition(L.field(1), 1, L.plateau()), 1.0);
  EXPECT_EQ(m.transition(L.field(L.depth), 0, L.field(L.depth)), 1.0);
  for (ActionId a = 0; a < kCliffActions; ++a) {
    EXPECT_EQ(m.reward(L.edge(2), a), 1.0);
    EXPECT_EQ(m.reward(L.plateau(), a), 1.0);
    EXPECT_EQ(m.reward(L.field(2), a), 0.0);
    EXPECT_EQ(m.reward(L.fallen(), a), 0.0);
    EXPECT_EQ(m.transition(L.fallen(), a, L.fallen()), 1.0);
  }
  std::set<std::pair<std::size_t, std::size_t>> cells;
  for (StateId s = 0; s < m.num_states(); ++s) cells.insert({env.geometry.cell_row[s], env.geometry.cell_col[s]});
  EXPECT_EQ(cells.size(), m.num_states());
  EXPECT_EQ(env.geometry.cell_kind[L.fallen()], "cliff");
  EXPECT_EQ(env.geometry.cell_kind[L.plateau()], "goal");
}

TEST(Cliffwalk, OneMistakeCostsTheRestOfTheEpisode) {
  const std::size_t H = 9;
  const TabularMDP m = make_cliffwalk(5, H, 0.0);
  const auto opt = value_iteration_finite(m);
  for (std::size_t h = 1; h <= H; ++h) {
    const double v = opt.q.at(h, 0, opt.expert.action(h, 0));
    EXPECT_EQ(v, static_cast<double>(H - h + 1));
    EXPECT_EQ(v - opt.q.at(h, 0, 1), static_cast<double>(H - h));
    EXPECT_EQ(v, oracle::enumerate_optimal_q(m, h, 0, opt.expert.action(h, 0)));
  }
}

TEST(Cliffwalk, RejectsBadParameters) {
  EXPECT_THROW(make_cliffwalk(2, 5, 0.0), std::invalid_argument);
  EXPECT_THROW(make_cliffwalk(4, 0, 0.0), std::invalid_argument);
  EXPECT_THROW(make_cliffwalk(4, 5, 0.6), std::invalid_argument);
}

TEST(Chain, ExpertRunsRight) {
  const Environment env = make_chain_env(5, 12, 0.0);
  const auto opt = value_iteration_finite(env.mdp);
  EXPECT_EQ(opt.expert.action(1, 0), 1u);
  EXPECT_EQ(policy_value(env.mdp, opt.expert), 12.0 - 4.0);
}

TEST(Gridworld, ExpertReachesGoal) {
  const Environment env = make_gridworld_env(3, 3, 8, 0.0);
  const auto opt = value_iteration_finite(env.mdp);
  EXPECT_EQ(policy_value(env.mdp, opt.expert), 8.0 - 4.0);
}
