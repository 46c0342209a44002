#include <gtest/gtest.h>

#include <cmath>
#include <vector>

#include "adapmen/dp.hpp"
#include "adapmen/gating.hpp"
#include "adapmen/rollout.hpp"
#include "oracles.hpp"

using namespace adapmen;

namespace {

struct HandFixture {
  TabularMDP mdp = oracle::hand_mdp();
  OptimalSolution opt = value_iteration_finite(mdp);
  GateContext ctx() const { return {opt.q, opt.expert}; }
};

}  // namespace

TEST(DqGap, HandValues) {
  const HandFixture f;
  const std::vector<double> wrong{0.0, 1.0}, uniform{0.5, 0.5}, right{1.0, 0.0};
  EXPECT_EQ(dq_gap(f.opt.q, f.opt.expert, wrong, 0, 1), 1.0);
  EXPECT_EQ(dq_gap(f.opt.q, f.opt.expert, uniform, 0, 1), 0.5);
  EXPECT_EQ(dq_gap(f.opt.q, f.opt.expert, right, 0, 1), 0.0);
  // In s1 every action is worth the same, so nothing is ever lost there.
  EXPECT_EQ(dq_gap(f.opt.q, f.opt.expert, wrong, 1, 1), 0.0);
}

TEST(DqGap, StrictGateExecutesExpert) {
  const HandFixture f;
  const auto uniform = PolicyTable::uniform(2, 2);
  InterventionCriterion crit;
  crit.threshold = 0.4;
  Rng rng(1);
  const TeacherStep t = teacher_step(uniform, f.ctx(), crit, 0, 1, rng);
  EXPECT_TRUE(t.intervened);
  EXPECT_EQ(t.executed_action, 0u);
  EXPECT_EQ(t.gap, 0.5);
  // gap == p does not fire.
  crit.threshold = 0.5;
  EXPECT_FALSE(teacher_step(uniform, f.ctx(), crit, 0, 1, rng).intervened);
  EXPECT_FALSE(should_intervene(0.0, 0.0));
  EXPECT_TRUE(should_intervene(0.0, 1e-300));
}

TEST(Surrogates, HandValues) {
  const HandFixture f;
  const std::vector<double> wrong{0.0, 1.0}, uniform{0.5, 0.5};
  EXPECT_EQ(surrogate_gap_tv(f.opt.expert, wrong, 0, 1, 2), 2.0);
  EXPECT_EQ(surrogate_gap_tv(f.opt.expert, uniform, 0, 2, 2), 0.5);
  EXPECT_NEAR(surrogate_gap_sqrt_kl(f.opt.expert, uniform, 0, 1, 2), 2.0 * std::sqrt(std::log(2.0)), 1e-15);
  EXPECT_TRUE(std::isinf(surrogate_gap_sqrt_kl(f.opt.expert, wrong, 0, 1, 2)));
  EXPECT_THROW(remaining_steps(0, 2), std::out_of_range);
  EXPECT_THROW(remaining_steps(3, 2), std::out_of_range);
  EXPECT_EQ(criterion_gap(CriterionKind::tv_surrogate, f.ctx(), uniform, 0, 1), 1.0);
}

TEST(Surrogates, KindNames) {
  for (CriterionKind k : {CriterionKind::q_diff, CriterionKind::tv_surrogate, CriterionKind::sqrt_kl_surrogate})
    EXPECT_EQ(criterion_kind_from_string(to_string(k)), k);
  EXPECT_THROW(criterion_kind_from_string("entropy"), std::invalid_argument);
}

TEST(Threshold, UpdateRule) {
  AdaptiveState st;
  EXPECT_THROW(update_p(st, 10), std::invalid_argument);
  st.steps_observed = 100;
  st.last_delta_estimate = 1.0;
  st.last_epsb_estimate = 1.0;
  EXPECT_EQ(update_p(st, 10), 10.0);
  st.last_delta_estimate = 0.3;
  st.last_epsb_estimate = 0.2;
  EXPECT_NEAR(update_p(st, 10), 0.6, 1e-15);
  EXPECT_NEAR(adapt_threshold(4.0, st, 10), 0.6, 1e-15);
  st.last_delta_estimate = 0.0;
  EXPECT_EQ(update_p(st, 10), 0.0);
  EXPECT_EQ(adapt_threshold(4.0, st, 10), 4.0);
}

TEST(Threshold, InitFromWarmup) {
  RolloutTrace trace;
  // Four steps, two with a positive gap, labels at all four.
  for (int i = 0; i < 4; ++i) {
    StepRecord r;
    r.h = 1;
    r.state = static_cast<StateId>(i % 2);
    r.gap = i < 2 ? 1.0 : 0.0;
    r.expert_action = 0;
    trace.steps.push_back(r);
  }
  const std::vector<RolloutTrace> window{trace};
  // Learner puts 0.75 on the label at both states: loss 0.25.
  PolicyTable pi(2, 2);
  for (StateId s = 0; s < 2; ++s) {
    pi.row(s)[0] = 0.75;
    pi.row(s)[1] = 0.25;
  }
  EXPECT_NEAR(init_p(window, pi, 8), 0.5 * 0.25 * 8.0, 1e-15);
  // Perfect learner falls back to the median positive gap.
  const std::vector<ActionId> zeros{0, 0};
  EXPECT_EQ(init_p(window, PolicyTable::deterministic(zeros, 2), 8), 1.0);
  EXPECT_THROW(init_p(std::vector<RolloutTrace>{}, pi, 8), std::invalid_argument);
}

TEST(Teacher, PolicyMixesByGate) {
  const HandFixture f;
  const std::vector<ActionId> ones{1, 1};
  const auto learner = PolicyTable::deterministic(ones, 2);
  const TimedPolicy t = teacher_policy(learner, f.ctx(), CriterionKind::q_diff, 0.5);
  EXPECT_EQ(t.row(1, 0)[0], 1.0);  // gap 1 > 0.5: expert
  EXPECT_EQ(t.row(2, 0)[0], 1.0);  // gap 1 at the last step too
  EXPECT_EQ(t.row(1, 1)[1], 1.0);  // gap 0: learner
  EXPECT_EQ(policy_value(f.mdp, t), 2.0);
  const TimedPolicy lax = teacher_policy(learner, f.ctx(), CriterionKind::q_diff, 1.0);
  EXPECT_EQ(policy_value(f.mdp, lax), 0.0);
}
