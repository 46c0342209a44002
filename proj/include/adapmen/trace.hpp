#pragma once

#include <cstddef>
#include <limits>
#include <optional>
#include <vector>

#include "adapmen/mdp.hpp"

namespace adapmen {

/// One environment step as seen by the teacher.
struct StepRecord {
  std::size_t h = 1;
  StateId state = 0;
  ActionId learner_action = 0;
  std::optional<ActionId> expert_action;  // present iff an expert label was obtained
  double gap = 0.0;
  bool intervened = false;
  ActionId executed_action = 0;
  double reward = 0.0;
};

struct RolloutTrace {
  std::vector<StepRecord> steps;
  double episode_return = 0.0;
};

}  // namespace adapmen
