#include <gtest/gtest.h>

#include <cmath>
#include <vector>

#include "adapmen/learner.hpp"

using namespace adapmen;

TEST(Buffer, EvictsOldestFirst) {
  InterventionBuffer buf(std::size_t{2});
  buf.add({0, 0, 1});
  buf.add({1, 1, 2});
  buf.add({2, 0, 3});
  ASSERT_EQ(buf.size(), 2u);
  EXPECT_EQ(buf.total_added(), 3u);
  EXPECT_EQ(buf.samples().front().state, 1u);
  EXPECT_THROW(InterventionBuffer(std::size_t{0}), std::invalid_argument);
  InterventionBuffer unbounded;
  for (int i = 0; i < 1000; ++i) unbounded.add({0, 0, 1});
  EXPECT_EQ(unbounded.size(), 1000u);
}

TEST(Mle, SmoothedCounts) {
  InterventionBuffer buf;
  for (int i = 0; i < 3; ++i) buf.add({0, 0, 1});
  buf.add({0, 1, 1});
  Rng rng(0);
  const PolicyTable pi = fit_mle(buf, 2, 2, 0.1, 0.0, rng);
  EXPECT_NEAR(pi.prob(0, 0), 3.1 / 4.2, 1e-15);
  EXPECT_NEAR(pi.prob(0, 1), 1.1 / 4.2, 1e-15);
  EXPECT_EQ(pi.prob(1, 0), 0.5);  // unseen state stays uniform
  EXPECT_THROW(fit_mle(buf, 2, 2, 0.0, 0.0, rng), std::invalid_argument);
}

TEST(Mle, NoiseMatchesClosedFormExpectation) {
  // Two actions, flip probability q: E[count(a0)] = n (1 - q), so
  // E[pi(a0|s)] = (n (1 - q) + c) / (n + 2c).
  InterventionBuffer buf;
  const int n = 10;
  for (int i = 0; i < n; ++i) buf.add({0, 0, 1});
  for (double q : {0.5, 0.2}) {
    Rng rng(99);
    double mean = 0.0;
    const int reps = 20000;
    for (int r = 0; r < reps; ++r) mean += fit_mle(buf, 1, 2, 0.1, q, rng).prob(0, 0);
    mean /= reps;
    EXPECT_NEAR(mean, (n * (1.0 - q) + 0.1) / (n + 0.2), 0.005) << q;
  }
}

TEST(Mle, NoisyLabelNeverKeepsWhenForced) {
  Rng rng(4);
  for (int i = 0; i < 100; ++i) {
    const ActionId a = noisy_label(2, 5, 1.0, rng);
    EXPECT_NE(a, 2u);
    EXPECT_LT(a, 5u);
  }
  Rng untouched(4), reference(4);
  EXPECT_EQ(noisy_label(1, 3, 0.0, untouched), 1u);
  EXPECT_EQ(untouched.next_u64(), reference.next_u64());
}

TEST(Eg, SingleStepExample) {
  const std::vector<double> w{0.5, 0.5}, z{1.0, 0.0};
  const auto out = fit_eg_step(w, z, 0.5);
  const double a = 0.5 * std::exp(-0.5);
  EXPECT_NEAR(out[0], a / (a + 0.5), 1e-15);
  EXPECT_NEAR(out[0], 0.3775, 1e-4);
  EXPECT_NEAR(out[1], 0.6225, 1e-4);
  const std::vector<double> bad{1.5, 0.0};
  EXPECT_THROW(fit_eg_step(w, bad, 0.5), std::invalid_argument);
}

TEST(Eg, UpdateMovesTowardLabels) {
  PolicyTable pi = PolicyTable::uniform(2, 3);
  const std::vector<InterventionBuffer::Sample> window{{0, 2, 1}, {0, 2, 1}};
  Rng rng(0);
  for (int i = 0; i < 50; ++i) eg_update(pi, window, 0.0, 0.5, rng);
  EXPECT_GT(pi.prob(0, 2), 0.99);
  EXPECT_EQ(pi.prob(1, 0), 1.0 / 3.0);  // untouched
  double sum = 0.0;
  for (double v : pi.row(0)) sum += v;
  EXPECT_NEAR(sum, 1.0, 1e-12);
}

TEST(Estimators, EpsbAndDelta) {
  InterventionBuffer buf;
  buf.add({0, 0, 1});
  buf.add({1, 1, 1});
  PolicyTable pi(2, 2);
  pi.row(0)[0] = 0.8;
  pi.row(0)[1] = 0.2;
  pi.row(1)[0] = 0.6;
  pi.row(1)[1] = 0.4;
  EXPECT_NEAR(estimate_epsb(buf, pi), (0.2 + 0.6) / 2.0, 1e-15);
  EXPECT_EQ(argmax_mismatch(buf, pi), 0.5);
  EXPECT_THROW(estimate_epsb(InterventionBuffer{}, pi), std::invalid_argument);

  RolloutTrace t;
  for (int i = 0; i < 10; ++i) {
    StepRecord r;
    r.intervened = i < 3;
    t.steps.push_back(r);
  }
  const std::vector<RolloutTrace> w{t};
  EXPECT_NEAR(estimate_delta(w), 0.3, 1e-15);
  EXPECT_THROW(estimate_delta(std::vector<RolloutTrace>{}), std::invalid_argument);
}

TEST(Learner, KindNames) {
  EXPECT_EQ(learner_kind_from_string("eg_tabular"), LearnerKind::eg_tabular);
  EXPECT_EQ(to_string(LearnerKind::mle_tabular), "mle_tabular");
  EXPECT_THROW(learner_kind_from_string("mlp"), std::invalid_argument);
}
