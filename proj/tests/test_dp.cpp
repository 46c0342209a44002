#include <gtest/gtest.h>

#include <cmath>
#include <vector>

#include "adapmen/dp.hpp"
#include "adapmen/environments.hpp"
#include "adapmen/rollout.hpp"
#include "oracles.hpp"

using namespace adapmen;

TEST(HandMdp, OptimalQ) {
  const TabularMDP m = oracle::hand_mdp();
  const auto opt = value_iteration_finite(m);
  EXPECT_EQ(opt.q.at(1, 0, 0), 2.0);
  EXPECT_EQ(opt.q.at(1, 0, 1), 1.0);
  EXPECT_EQ(opt.q.at(2, 0, 0), 1.0);
  EXPECT_EQ(opt.expert.action(1, 0), 0u);
  // Enumeration over every deterministic continuation agrees.
  for (std::size_t h = 1; h <= 2; ++h)
    for (StateId s = 0; s < 2; ++s)
      for (ActionId a = 0; a < 2; ++a) EXPECT_EQ(opt.q.at(h, s, a), oracle::enumerate_optimal_q(m, h, s, a));
}

TEST(HandMdp, PolicyQForStubbornLearner) {
  const TabularMDP m = oracle::hand_mdp();
  const std::vector<ActionId> acts{1, 1};
  const auto pi = PolicyTable::deterministic(acts, 2);
  const QTable q = policy_q(m, pi);
  EXPECT_EQ(q.at(1, 0, 0), 1.0);
  EXPECT_EQ(q.at(1, 0, 1), 0.0);
  EXPECT_EQ(policy_value(m, pi), 0.0);
}

TEST(HandMdp, ExpertValue) {
  const TabularMDP m = oracle::hand_mdp();
  const auto opt = value_iteration_finite(m);
  EXPECT_EQ(policy_value(m, opt.expert), 2.0);
  EXPECT_EQ(oracle::enumerate_value(m, opt.expert), 2.0);
}

TEST(Occupancy, RowsSumToOne) {
  TabularMDP m = oracle::hand_mdp();
  m.initial_dist()[0] = 0.5;
  m.initial_dist()[1] = 0.5;
  const auto d = occupancy(m, PolicyTable::uniform(2, 2));
  for (std::size_t h = 1; h <= 2; ++h) {
    double sum = 0.0;
    for (double v : d.step(h)) sum += v;
    EXPECT_NEAR(sum, 1.0, 1e-15);
  }
}

TEST(Oracle, RandomModelsMatchEnumeration) {
  for (std::uint64_t seed = 0; seed < 20; ++seed) {
    Rng shape(seed + 1000);
    const std::size_t S = 2 + shape.uniform_index(4), A = 2 + shape.uniform_index(2), H = 1 + shape.uniform_index(5);
    const TabularMDP m = make_random_mdp(S, A, H, seed, 0.2);
    Rng prng(seed);
    const PolicyTable pi = make_random_policy(S, A, prng);
    EXPECT_NEAR(policy_value(m, pi), oracle::enumerate_value(m, pi), 1e-9);
    const QTable q = policy_q(m, pi);
    for (std::size_t h = 1; h <= H; ++h)
      for (StateId s = 0; s < S; ++s)
        for (ActionId a = 0; a < A; ++a) EXPECT_NEAR(q.at(h, s, a), oracle::enumerate_q(m, pi, h, s, a), 1e-9);
    const auto d = occupancy(m, pi);
    const auto d_ref = oracle::enumerate_occupancy(m, pi);
    for (std::size_t h = 1; h <= H; ++h)
      for (StateId s = 0; s < S; ++s) EXPECT_NEAR(d.at(h, s), d_ref[h][s], 1e-12);
    const auto opt = value_iteration_finite(m);
    for (StateId s = 0; s < S; ++s)
      for (ActionId a = 0; a < A; ++a) EXPECT_NEAR(opt.q.at(1, s, a), oracle::enumerate_optimal_q(m, 1, s, a), 1e-9);
  }
}

TEST(Oracle, TimedPoliciesMatchEnumeration) {
  const TabularMDP m = make_random_mdp(3, 2, 4, 77, 0.0);
  TimedPolicy pi(4, 3, 2);
  Rng rng(5);
  for (std::size_t h = 1; h <= 4; ++h)
    for (StateId s = 0; s < 3; ++s) {
      const double u = rng.uniform01();
      pi.row(h, s)[0] = u;
      pi.row(h, s)[1] = 1.0 - u;
    }
  EXPECT_NEAR(policy_value(m, pi), oracle::enumerate_value(m, pi), 1e-12);
}

TEST(Expert, StickyTieBreak) {
  // All actions identical: the lowest index wins at every step.
  TabularMDP m(2, 3, 3);
  for (StateId s = 0; s < 2; ++s)
    for (ActionId a = 0; a < 3; ++a) m.set_deterministic(s, a, s);
  m.set_initial_state(0);
  const auto opt = value_iteration_finite(m);
  for (std::size_t h = 1; h <= 3; ++h) EXPECT_EQ(opt.expert.action(h, 0), 0u);
  EXPECT_TRUE(opt.expert.is_stationary());
}

TEST(Expert, TimeIndexedWhenOptimalActionChanges) {
  // s0: a0 pays 0.6 and stays; a1 pays 0 and moves to s1, where everything pays 1.
  // With one step left a0 is best; with more left a1 is.
  TabularMDP m(2, 2, 3);
  m.set_deterministic(0, 0, 0);
  m.set_reward(0, 0, 0.6);
  m.set_deterministic(0, 1, 1);
  for (ActionId a = 0; a < 2; ++a) {
    m.set_deterministic(1, a, 1);
    m.set_reward(1, a, 1.0);
  }
  m.set_initial_state(0);
  const auto opt = value_iteration_finite(m);
  EXPECT_EQ(opt.expert.action(1, 0), 1u);
  EXPECT_EQ(opt.expert.action(3, 0), 0u);
  EXPECT_FALSE(opt.expert.is_stationary());
  EXPECT_NEAR(policy_value(m, opt.expert), 2.0, 1e-15);
}

TEST(Cliffwalk, ExpertValueAndRecoverability) {
  for (std::size_t H : {4u, 10u, 25u}) {
    const TabularMDP m = make_cliffwalk(5, H, 0.0);
    ASSERT_TRUE(validate_mdp(m).ok());
    const auto opt = value_iteration_finite(m);
    EXPECT_EQ(policy_value(m, opt.expert), static_cast<double>(H));
    EXPECT_EQ(mu_recoverability(m, opt.q, opt.expert), static_cast<double>(H - 1));
  }
}

TEST(Cliffwalk, RecoverabilityGrowsLinearly) {
  std::vector<double> mus;
  for (std::size_t H : {8u, 16u, 32u, 64u}) {
    const TabularMDP m = make_cliffwalk(3, H, 0.0);
    const auto opt = value_iteration_finite(m);
    mus.push_back(mu_recoverability(m, opt.q, opt.expert));
  }
  for (std::size_t i = 1; i < mus.size(); ++i) {
    const double slope = std::log(mus[i] / mus[i - 1]) / std::log(2.0);
    EXPECT_NEAR(slope, 1.0, 0.1);
  }
}

TEST(HandMdp, Recoverability) {
  const TabularMDP m = oracle::hand_mdp();
  const auto opt = value_iteration_finite(m);
  EXPECT_EQ(mu_recoverability(m, opt.q, opt.expert), 1.0);
}
