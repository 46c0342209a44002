#pragma once

#include <algorithm>
#include <cstdint>
#include <string>
#include <vector>

#include "adapmen/analysis.hpp"
#include "adapmen/dp.hpp"
#include "adapmen/environments.hpp"
#include "adapmen/rng.hpp"

namespace adapmen {

/// Shape and seed of one random verification instance.
struct InstanceParams {
  std::size_t index = 0;
  std::uint64_t seed = 0;
  std::size_t num_states = 2;
  std::size_t num_actions = 2;
  std::size_t horizon = 1;
};

/// Instance `index` of a sweep: S in [2, 5], A in [2, 3], H in [1, 6].
inline InstanceParams sweep_instance(std::uint64_t base_seed, std::size_t index) {
  InstanceParams p;
  p.index = index;
  p.seed = derive_seed(base_seed, index);
  Rng rng(derive_seed(p.seed, 0));
  p.num_states = 2 + rng.uniform_index(4);
  p.num_actions = 2 + rng.uniform_index(2);
  p.horizon = 1 + rng.uniform_index(6);
  return p;
}

inline constexpr double kSweepRewardSparsity = 0.3;
inline constexpr std::size_t kPGridPoints = 11;

struct SweepInstance {
  InstanceParams params;
  TabularMDP mdp;
  OptimalSolution opt;
  PolicyTable learner;
  PolicyTable other;  // second policy for the difference identity
};

inline SweepInstance build_instance(const InstanceParams& params) {
  TabularMDP mdp = make_random_mdp(params.num_states, params.num_actions, params.horizon, params.seed,
                                   kSweepRewardSparsity);
  OptimalSolution opt = value_iteration_finite(mdp);
  Rng rng(derive_seed(params.seed, 1));
  PolicyTable learner = make_random_policy(params.num_states, params.num_actions, rng);
  PolicyTable other = make_random_policy(params.num_states, params.num_actions, rng);
  return {params, std::move(mdp), std::move(opt), std::move(learner), std::move(other)};
}

/// p = H k / 10 for k = 0..10.
inline std::vector<double> p_grid(std::size_t horizon) {
  std::vector<double> grid;
  for (std::size_t k = 0; k < kPGridPoints; ++k)
    grid.push_back(static_cast<double>(horizon) * static_cast<double>(k) / static_cast<double>(kPGridPoints - 1));
  return grid;
}

struct SweepViolation {
  InstanceParams instance;
  BoundReport report;
};

struct BoundsSweepResult {
  std::size_t instances = 0;
  std::vector<BoundReport> reports;  // every check, tagged with its instance
  std::vector<SweepViolation> violations;
  std::size_t fixed_point_brackets = 0;
};

inline void tag_instance(BoundReport& r, const InstanceParams& p) {
  r.inputs["instance"] = static_cast<double>(p.index);
  r.inputs["S"] = static_cast<double>(p.num_states);
  r.inputs["A"] = static_cast<double>(p.num_actions);
  r.inputs["H"] = static_cast<double>(p.horizon);
}

/// surrogate_tv <= surrogate_sqrt_kl at every (h, s), worst slack reported.
template <PolicyLike P>
BoundReport verify_pinsker_surrogates(const TabularMDP& mdp, const OptimalSolution& opt, const P& learner) {
  const std::size_t H = mdp.horizon();
  BoundReport worst;
  bool first = true, all = true;
  for (std::size_t h = 1; h <= H; ++h)
    for (StateId s = 0; s < mdp.num_states(); ++s) {
      const auto row = learner.row(h, s);
      BoundReport r = make_bound("surrogate_order", surrogate_gap_tv(opt.expert, row, s, h, H),
                                 surrogate_gap_sqrt_kl(opt.expert, row, s, h, H),
                                 {{"h", static_cast<double>(h)}, {"s", static_cast<double>(s)}});
      all = all && r.holds;
      if (first || r.slack < worst.slack) worst = r;
      first = false;
    }
  worst.holds = all;
  return worst;
}

/**
 * Every theorem-backed check on `count` random instances: the bound and the
 * safety guarantee over the p grid, the p = 0 degeneration, per-state
 * divergence dominance, surrogate ordering, the policy difference identity,
 * the self-consistent p envelope and the DAgger envelope.
 */
inline BoundsSweepResult run_bounds_sweep(std::size_t count, std::uint64_t base_seed) {
  BoundsSweepResult out;
  out.instances = count;
  const auto add = [&](BoundReport r, const InstanceParams& p) {
    tag_instance(r, p);
    if (!r.holds) out.violations.push_back({p, r});
    out.reports.push_back(std::move(r));
  };
  for (std::size_t i = 0; i < count; ++i) {
    const SweepInstance inst = build_instance(sweep_instance(base_seed, i));
    const auto& [params, mdp, opt, learner, other] = inst;
    for (double p : p_grid(mdp.horizon())) {
      add(verify_thm_suboptimality(mdp, opt, learner, p), params);
      add(verify_safety(mdp, opt, learner, p), params);
    }
    const GateContext ctx{opt.q, opt.expert};
    const double j_teacher0 = policy_value(mdp, teacher_policy(learner, ctx, CriterionKind::q_diff, 0.0));
    add(make_equality("safety_p0_equality", j_teacher0 - policy_value(mdp, opt.expert)), params);
    add(verify_policy_divergence_bound(mdp, opt, learner).aggregate, params);
    add(verify_pinsker_surrogates(mdp, opt, learner), params);
    add(verify_policy_difference_lemma(mdp, learner, other), params);
    const FixedPointReport fp = verify_p_choice(mdp, opt, learner);
    ++out.fixed_point_brackets;
    add(fp.bound, params);
    add(verify_dagger_envelope(mdp, opt, learner), params);
  }
  return out;
}

struct TailSweepResult {
  std::vector<InstanceParams> instances;
  std::vector<TailReport> reports;
  std::vector<InstanceParams> non_monotone;
};

inline bool survival_monotone(const TailReport& rep) {
  for (std::size_t i = 1; i < rep.grid.size(); ++i)
    if (rep.grid[i].survival > rep.grid[i - 1].survival) return false;
  return true;
}

inline constexpr std::size_t kTailSamples = 4000;

/// Teacher-weighted D_Q tails at p = H/5 on random instances.
inline TailSweepResult run_tail_sweep(std::size_t count, std::uint64_t base_seed,
                                      std::size_t samples = kTailSamples) {
  TailSweepResult out;
  for (std::size_t i = 0; i < count; ++i) {
    const SweepInstance inst = build_instance(sweep_instance(base_seed, i));
    const double p = static_cast<double>(inst.mdp.horizon()) / 5.0;
    TailReport rep = dq_tail_analysis(inst.mdp, inst.opt, inst.learner, TailWeighting::teacher, p, samples,
                                      derive_seed(inst.params.seed, 2));
    if (!survival_monotone(rep)) out.non_monotone.push_back(inst.params);
    out.instances.push_back(inst.params);
    out.reports.push_back(std::move(rep));
  }
  return out;
}

// Slope windows for the horizon scaling check.
inline constexpr double kBcMinSlope = 1.7;
inline constexpr double kAdapmenMaxSlope = 1.3;

struct ScalingVerdict {
  std::vector<BoundReport> checks;
  bool pass = true;
};

inline ScalingVerdict judge_scaling(const std::vector<ScalingReport>& reports) {
  ScalingVerdict v;
  for (const auto& rep : reports) {
    if (rep.algorithm == "bc") {
      BoundReport r = make_bound("bc_slope_min", kBcMinSlope, rep.slope, {{"slope", rep.slope}});
      r.holds = r.holds && !rep.degenerate;
      v.checks.push_back(r);
    } else if (rep.algorithm == "adapmen") {
      BoundReport r = make_bound("adapmen_slope_max", rep.slope, kAdapmenMaxSlope, {{"slope", rep.slope}});
      r.holds = r.holds && !rep.degenerate;
      v.checks.push_back(r);
    } else if (rep.algorithm == "dagger") {
      double worst = 0.0;
      bool holds = true;
      for (const auto& pt : rep.points) {
        worst = std::max(worst, pt.max_envelope_ratio);
        holds = holds && pt.envelope_holds;
      }
      BoundReport r = make_bound("dagger_envelope_ratio", worst, 1.0, {{"slope", rep.slope}});
      r.holds = holds;
      v.checks.push_back(r);
    }
  }
  for (const auto& c : v.checks) v.pass = v.pass && c.holds;
  return v;
}

}  // namespace adapmen
