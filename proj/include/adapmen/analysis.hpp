#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <limits>
#include <map>
#include <optional>
#include <string>
#include <thread>
#include <vector>

#include "adapmen/dp.hpp"
#include "adapmen/environments.hpp"
#include "adapmen/gating.hpp"
#include "adapmen/mdp.hpp"
#include "adapmen/rng.hpp"
#include "adapmen/rollout.hpp"
#include "adapmen/training.hpp"

namespace adapmen {

inline constexpr double kBoundTolerance = 1e-9;

struct BoundReport {
  std::string name;
  double lhs = 0.0;
  double rhs = 0.0;
  double slack = 0.0;
  bool holds = true;
  std::map<std::string, double> inputs;
};

inline BoundReport make_bound(std::string name, double lhs, double rhs, std::map<std::string, double> inputs = {}) {
  BoundReport r{std::move(name), lhs, rhs, rhs - lhs, false, std::move(inputs)};
  r.holds = r.slack >= -kBoundTolerance;
  return r;
}

/// lhs of an equality-form report is the absolute residual; rhs is 0.
inline BoundReport make_equality(std::string name, double residual, std::map<std::string, double> inputs = {}) {
  return make_bound(std::move(name), std::abs(residual), 0.0, std::move(inputs));
}

// ---------------------------------------------------------------- exact teacher quantities

/**
 * Everything the bounds need about the teacher built from `learner` and `p`,
 * computed by DP. The intervention indicator and the loss are taken per
 * (h, s); beta and delta follow the (1/H) sum over h form.
 */
struct TeacherAnalysis {
  TimedPolicy teacher;
  OccupancyTable occupancy;  // of the teacher
  double delta = 0.0;
  double epsb = 0.0;          // E_beta [1 - pi(pi*_h(s) | s)]
  std::vector<double> beta;   // per state, sums to 1 when delta > 0
  double J_teacher = 0.0;
};

template <PolicyLike P>
TeacherAnalysis analyze_teacher(const TabularMDP& mdp, const OptimalSolution& opt, const P& learner, double p,
                                CriterionKind kind = CriterionKind::q_diff) {
  const GateContext ctx{opt.q, opt.expert};
  const std::size_t H = mdp.horizon(), S = mdp.num_states();
  TeacherAnalysis out;
  out.teacher = teacher_policy(learner, ctx, kind, p);
  out.occupancy = occupancy(mdp, out.teacher);
  out.beta.assign(S, 0.0);
  double mass = 0.0, loss = 0.0;
  for (std::size_t h = 1; h <= H; ++h)
    for (StateId s = 0; s < S; ++s) {
      const double d = out.occupancy.at(h, s);
      if (d == 0.0) continue;
      const auto row = learner.row(h, s);
      if (!should_intervene(p, criterion_gap(kind, ctx, row, s, h))) continue;
      mass += d;
      out.beta[s] += d;
      loss += d * (1.0 - row[opt.expert.action(h, s)]);
    }
  out.delta = mass / static_cast<double>(H);
  if (mass > 0.0) {
    for (auto& b : out.beta) b /= mass;
    out.epsb = loss / mass;
  }
  out.J_teacher = policy_value(mdp, out.teacher);
  return out;
}

// ---------------------------------------------------------------- verifiers

/// J(pi*) - J(pi) <= pH + delta eps_b H^2, every term exact.
template <PolicyLike P>
BoundReport verify_thm_suboptimality(const TabularMDP& mdp, const OptimalSolution& opt, const P& learner, double p) {
  const double H = static_cast<double>(mdp.horizon());
  const TeacherAnalysis t = analyze_teacher(mdp, opt, learner, p);
  const double j_star = policy_value(mdp, opt.expert);
  const double j = policy_value(mdp, learner);
  return make_bound("suboptimality", j_star - j, p * H + t.delta * t.epsb * H * H,
                    {{"p", p}, {"delta", t.delta}, {"epsb", t.epsb}, {"H", H}});
}

/// J(pi') >= J(pi*) - pH.
template <PolicyLike P>
BoundReport verify_safety(const TabularMDP& mdp, const OptimalSolution& opt, const P& learner, double p) {
  const double H = static_cast<double>(mdp.horizon());
  const GateContext ctx{opt.q, opt.expert};
  const double j_teacher = policy_value(mdp, teacher_policy(learner, ctx, CriterionKind::q_diff, p));
  const double j_star = policy_value(mdp, opt.expert);
  return make_bound("safety", j_star - p * H, j_teacher, {{"p", p}, {"H", H}});
}

struct DivergenceBoundReport {
  std::vector<BoundReport> per_step;  // one per (h, s)
  BoundReport aggregate;
};

/// D_Q(s,h) <= TV(pi*(.|s), pi(.|s)) (H - h + 1) at every (s, h).
template <PolicyLike P>
DivergenceBoundReport verify_policy_divergence_bound(const TabularMDP& mdp, const OptimalSolution& opt,
                                                     const P& learner) {
  const std::size_t H = mdp.horizon();
  DivergenceBoundReport out;
  double worst = std::numeric_limits<double>::infinity();
  BoundReport worst_report;
  for (std::size_t h = 1; h <= H; ++h)
    for (StateId s = 0; s < mdp.num_states(); ++s) {
      const auto row = learner.row(h, s);
      const double lhs = dq_gap(opt.q, opt.expert, row, s, h);
      const double rhs = surrogate_gap_tv(opt.expert, row, s, h, H);
      out.per_step.push_back(
          make_bound("policy_divergence", lhs, rhs, {{"h", static_cast<double>(h)}, {"s", static_cast<double>(s)}}));
      if (out.per_step.back().slack < worst) {
        worst = out.per_step.back().slack;
        worst_report = out.per_step.back();
      }
    }
  out.aggregate = worst_report;
  out.aggregate.name = "policy_divergence_all";
  out.aggregate.holds = std::all_of(out.per_step.begin(), out.per_step.end(), [](const BoundReport& r) { return r.holds; });
  return out;
}

/// |J(pi1) - J(pi2) - sum_h E_{d_h^pi1}[Q^pi2_h(s,pi1) - Q^pi2_h(s,pi2)]|.
template <PolicyLike P1, PolicyLike P2>
BoundReport verify_policy_difference_lemma(const TabularMDP& mdp, const P1& pi1, const P2& pi2) {
  const QTable q2 = policy_q(mdp, pi2);
  const OccupancyTable d1 = occupancy(mdp, pi1);
  double sum = 0.0;
  for (std::size_t h = 1; h <= mdp.horizon(); ++h)
    for (StateId s = 0; s < mdp.num_states(); ++s) {
      const double d = d1.at(h, s);
      if (d == 0.0) continue;
      sum += d * (q2.expected(h, s, pi1.row(h, s)) - q2.expected(h, s, pi2.row(h, s)));
    }
  const double diff = policy_value(mdp, pi1) - policy_value(mdp, pi2);
  return make_equality("policy_difference_lemma", diff - sum, {{"J_diff", diff}, {"advantage_sum", sum}});
}

struct FixedPointReport {
  BoundReport bound;  // gap <= 2 p H at the upper end of the bracket
  double p_low = 0.0;
  double p_high = 0.0;
  bool converged = false;  // bracket narrower than the tolerance with a continuous residual
};

/**
 * Bisection on g(p) = p - delta(p) eps_b(p) H over [0, H]; g(0) <= 0 and
 * g(H) >= 0. When the residual jumps across the root, the final bracket is
 * reported and the envelope is checked at its upper end, where
 * delta eps_b H <= p still holds.
 */
template <PolicyLike P>
FixedPointReport verify_p_choice(const TabularMDP& mdp, const OptimalSolution& opt, const P& learner,
                                 double tolerance = 1e-10, int max_iter = 200) {
  const double H = static_cast<double>(mdp.horizon());
  const auto residual = [&](double p) {
    const TeacherAnalysis t = analyze_teacher(mdp, opt, learner, p);
    return p - t.delta * t.epsb * H;
  };
  FixedPointReport out;
  double lo = 0.0, hi = H;
  double g_lo = residual(lo);
  if (g_lo >= 0.0) {
    hi = lo;
  } else {
    for (int i = 0; i < max_iter && hi - lo > tolerance; ++i) {
      const double mid = 0.5 * (lo + hi);
      const double g = residual(mid);
      if (g >= 0.0) {
        hi = mid;
      } else {
        lo = mid;
        g_lo = g;
      }
    }
  }
  out.p_low = lo;
  out.p_high = hi;
  const double g_hi = residual(hi);
  out.converged = hi - lo <= tolerance && std::abs(g_hi) <= 1e-6 && std::abs(g_lo) <= 1e-6;
  const double j_star = policy_value(mdp, opt.expert);
  const double j = policy_value(mdp, learner);
  out.bound = make_bound("p_choice", j_star - j, 2.0 * hi * H, {{"p", hi}, {"p_low", lo}, {"H", H}});
  return out;
}

/// DAgger envelope mu H eps_b with eps_b measured under the learner's own occupancy.
template <PolicyLike P>
BoundReport verify_dagger_envelope(const TabularMDP& mdp, const OptimalSolution& opt, const P& learner) {
  const double H = static_cast<double>(mdp.horizon());
  const double mu = mu_recoverability(mdp, opt.q, opt.expert);
  const OccupancyTable d = occupancy(mdp, learner);
  double loss = 0.0;
  for (std::size_t h = 1; h <= mdp.horizon(); ++h)
    for (StateId s = 0; s < mdp.num_states(); ++s)
      loss += d.at(h, s) * (1.0 - learner.row(h, s)[opt.expert.action(h, s)]);
  const double epsb = loss / H;
  const double gap = policy_value(mdp, opt.expert) - policy_value(mdp, learner);
  return make_bound("dagger_envelope", gap, mu * H * epsb, {{"mu", mu}, {"epsb", epsb}, {"H", H}});
}

// ---------------------------------------------------------------- tail analysis

enum class TailWeighting { teacher, learner };

struct TailPoint {
  double p = 0.0;
  double survival = 0.0;
  double envelope = 0.0;
  bool satisfied = true;
};

struct TailReport {
  std::size_t sample_count = 0;
  double mean = 0.0;
  double scale = 0.0;  // sample standard deviation
  std::vector<TailPoint> grid;
  std::vector<double> samples;
};

inline constexpr std::size_t kTailGridPoints = 41;

/// min(1, exp(-(p - mean) / scale)); a zero scale gives a step at the mean.
inline double exponential_envelope(double p, double mean, double scale) {
  if (scale <= 0.0) return p > mean ? 0.0 : 1.0;
  return std::min(1.0, std::exp(-(p - mean) / scale));
}

/**
 * D_Q samples at (h, s) drawn from the exact averaged occupancy of either the
 * teacher (built with threshold `p`) or the learner itself. The grid spans
 * [0, max sample] in kTailGridPoints steps.
 */
template <PolicyLike P>
TailReport dq_tail_analysis(const TabularMDP& mdp, const OptimalSolution& opt, const P& learner,
                            TailWeighting weighting, double p, std::size_t sample_count, std::uint64_t seed) {
  if (sample_count == 0) throw std::invalid_argument("dq_tail_analysis: sample_count must be positive");
  const std::size_t H = mdp.horizon(), S = mdp.num_states();
  const GateContext ctx{opt.q, opt.expert};
  const OccupancyTable occ = weighting == TailWeighting::teacher
                                 ? occupancy(mdp, teacher_policy(learner, ctx, CriterionKind::q_diff, p))
                                 : occupancy(mdp, learner);
  std::vector<double> weights(H * S);
  for (std::size_t h = 1; h <= H; ++h)
    for (StateId s = 0; s < S; ++s) weights[(h - 1) * S + s] = occ.at(h, s);

  Rng rng(seed);
  TailReport rep;
  rep.sample_count = sample_count;
  rep.samples.reserve(sample_count);
  for (std::size_t i = 0; i < sample_count; ++i) {
    const std::size_t k = rng.categorical(weights);
    const std::size_t h = k / S + 1;
    const StateId s = k % S;
    rep.samples.push_back(dq_gap(opt.q, opt.expert, learner.row(h, s), s, h));
  }
  double sum = 0.0;
  for (double x : rep.samples) sum += x;
  rep.mean = sum / static_cast<double>(sample_count);
  double ss = 0.0;
  for (double x : rep.samples) ss += (x - rep.mean) * (x - rep.mean);
  rep.scale = sample_count > 1 ? std::sqrt(ss / static_cast<double>(sample_count - 1)) : 0.0;

  std::vector<double> sorted = rep.samples;
  std::sort(sorted.begin(), sorted.end());
  const double top = sorted.back();
  for (std::size_t i = 0; i < kTailGridPoints; ++i) {
    TailPoint pt;
    pt.p = top * static_cast<double>(i) / static_cast<double>(kTailGridPoints - 1);
    const auto above = sorted.end() - std::upper_bound(sorted.begin(), sorted.end(), pt.p);
    pt.survival = static_cast<double>(above) / static_cast<double>(sample_count);
    pt.envelope = exponential_envelope(pt.p, rep.mean, rep.scale);
    pt.satisfied = pt.survival <= pt.envelope;
    rep.grid.push_back(pt);
  }
  return rep;
}

// ---------------------------------------------------------------- empirical checks

/// Share of buffered samples at each state.
inline std::vector<double> buffer_state_distribution(const InterventionBuffer& buffer, std::size_t num_states) {
  std::vector<double> dist(num_states, 0.0);
  if (buffer.empty()) return dist;
  for (const auto& sample : buffer.samples()) dist.at(sample.state) += 1.0;
  for (auto& d : dist) d /= static_cast<double>(buffer.size());
  return dist;
}

// ---------------------------------------------------------------- scaling experiment

struct ScalingPoint {
  std::size_t horizon = 0;
  double mean_gap = 0.0;
  double std_gap = 0.0;
  double mean_epsb = 0.0;  // buffer estimate at the end of training
  double mu = 0.0;
  double max_envelope_ratio = 0.0;  // DAgger only: max over seeds of gap / (mu H eps_b)
  bool envelope_holds = true;       // DAgger only
};

struct ScalingReport {
  std::string algorithm;
  std::vector<ScalingPoint> points;
  double slope = 0.0;
  double intercept = 0.0;
  bool degenerate = false;
};

struct LinearFit {
  double slope = 0.0;
  double intercept = 0.0;
  bool degenerate = false;
};

/// Least-squares fit of log(y) on log(x); flagged degenerate when any y <= 0
/// or fewer than three distinct x values are present.
inline LinearFit fit_log_log(const std::vector<double>& x, const std::vector<double>& y) {
  LinearFit fit;
  std::vector<double> xs = x;
  std::sort(xs.begin(), xs.end());
  const auto distinct = std::unique(xs.begin(), xs.end()) - xs.begin();
  if (x.size() != y.size() || distinct < 3 || std::any_of(y.begin(), y.end(), [](double v) { return !(v > 0.0); })) {
    fit.degenerate = true;
    return fit;
  }
  const double n = static_cast<double>(x.size());
  double mx = 0.0, my = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    mx += std::log(x[i]);
    my += std::log(y[i]);
  }
  mx /= n;
  my /= n;
  double sxy = 0.0, sxx = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    const double dx = std::log(x[i]) - mx;
    sxy += dx * (std::log(y[i]) - my);
    sxx += dx * dx;
  }
  fit.slope = sxy / sxx;
  fit.intercept = my - fit.slope * mx;
  return fit;
}

struct ScalingSettings {
  std::size_t width = 3;
  std::vector<std::size_t> horizons{8, 16, 32, 64};
  std::vector<Algorithm> algorithms{Algorithm::bc, Algorithm::dagger, Algorithm::adapmen};
  std::size_t seeds = 10;
  std::uint64_t base_seed = 0;
  double label_noise = 0.1;
  std::size_t total_steps = 20000;
  std::size_t update_interval = 200;
  std::size_t warmup_steps = 200;
  std::size_t threads = 0;  // 0 picks the hardware concurrency
};

/**
 * Final learner gap per (algorithm, H, seed) on cliffwalk(width, H), then a
 * log-log fit of the seed mean against H. Runs are independent and fan out
 * over threads; results are merged by index.
 */
inline std::vector<ScalingReport> scaling_experiment(const ScalingSettings& cfg) {
  if (cfg.horizons.size() < 3) throw std::invalid_argument("scaling_experiment: need at least three horizons");
  if (cfg.seeds == 0) throw std::invalid_argument("scaling_experiment: need at least one seed");
  struct Cell {
    TabularMDP mdp;
    OptimalSolution opt;
    double mu = 0.0;
  };
  std::vector<Cell> cells;
  for (std::size_t H : cfg.horizons) {
    TabularMDP mdp = make_cliffwalk(cfg.width, H, 0.0);
    OptimalSolution opt = value_iteration_finite(mdp);
    const double mu = mu_recoverability(mdp, opt.q, opt.expert);
    cells.push_back({std::move(mdp), std::move(opt), mu});
  }
  const std::size_t nA = cfg.algorithms.size(), nH = cfg.horizons.size(), nS = cfg.seeds;
  struct Outcome {
    double gap = 0.0;
    double epsb = 0.0;
    double envelope_ratio = 0.0;
    bool envelope_holds = true;
  };
  std::vector<Outcome> outcomes(nA * nH * nS);
  const auto job = [&](std::size_t idx) {
    const std::size_t a = idx / (nH * nS), h = (idx / nS) % nH, s = idx % nS;
    const Cell& cell = cells[h];
    TrainingConfig tc;
    tc.algorithm = cfg.algorithms[a];
    tc.total_steps = cfg.total_steps;
    tc.update_interval = cfg.update_interval;
    tc.criterion.warmup_steps = cfg.warmup_steps;
    tc.learner.label_noise = cfg.label_noise;
    tc.seed = derive_seed(cfg.base_seed, s);
    const TrainingResult r = train(cell.mdp, cell.opt, tc);
    Outcome& o = outcomes[idx];
    o.gap = r.metrics.empty() ? 0.0 : r.metrics.back().suboptimality_gap;
    o.epsb = r.metrics.empty() ? 0.0 : r.metrics.back().epsb_estimate;
    if (tc.algorithm == Algorithm::dagger) {
      const BoundReport env = verify_dagger_envelope(cell.mdp, cell.opt, r.learner);
      o.envelope_holds = env.holds;
      o.envelope_ratio = env.rhs > 0.0 ? env.lhs / env.rhs : 0.0;
    }
  };
  std::size_t threads = cfg.threads ? cfg.threads : std::max(1u, std::thread::hardware_concurrency());
  threads = std::min(threads, outcomes.size());
  std::vector<std::thread> pool;
  for (std::size_t t = 0; t < threads; ++t)
    pool.emplace_back([&, t] {
      for (std::size_t idx = t; idx < outcomes.size(); idx += threads) job(idx);
    });
  for (auto& th : pool) th.join();

  std::vector<ScalingReport> reports;
  for (std::size_t a = 0; a < nA; ++a) {
    ScalingReport rep;
    rep.algorithm = to_string(cfg.algorithms[a]);
    std::vector<double> xs, ys;
    for (std::size_t h = 0; h < nH; ++h) {
      ScalingPoint pt;
      pt.horizon = cfg.horizons[h];
      pt.mu = cells[h].mu;
      double sum = 0.0, sumsq = 0.0, eps = 0.0;
      for (std::size_t s = 0; s < nS; ++s) {
        const Outcome& o = outcomes[(a * nH + h) * nS + s];
        sum += o.gap;
        sumsq += o.gap * o.gap;
        eps += o.epsb;
        pt.max_envelope_ratio = std::max(pt.max_envelope_ratio, o.envelope_ratio);
        pt.envelope_holds = pt.envelope_holds && o.envelope_holds;
      }
      const double n = static_cast<double>(nS);
      pt.mean_gap = sum / n;
      pt.std_gap = nS > 1 ? std::sqrt(std::max(0.0, (sumsq - n * pt.mean_gap * pt.mean_gap) / (n - 1.0))) : 0.0;
      pt.mean_epsb = eps / n;
      rep.points.push_back(pt);
      xs.push_back(static_cast<double>(pt.horizon));
      ys.push_back(pt.mean_gap);
    }
    const LinearFit fit = fit_log_log(xs, ys);
    rep.slope = fit.slope;
    rep.intercept = fit.intercept;
    rep.degenerate = fit.degenerate;
    reports.push_back(std::move(rep));
  }
  return reports;
}

// ---------------------------------------------------------------- approximate-Q robustness

struct NoisyQResult {
  double noise = 0.0;
  double mean_gap = 0.0;
  double mean_final_p = 0.0;
  double mean_expert_usage = 0.0;
  std::vector<IterationMetrics> first_seed_metrics;
};

/// AdapMen with the gate's Q table perturbed at each noise level; the expert's
/// actions are left untouched.
inline std::vector<NoisyQResult> noisy_q_experiment(const TabularMDP& mdp, const OptimalSolution& opt,
                                                    const std::vector<double>& noise_levels,
                                                    const TrainingConfig& base, std::size_t seeds = 1) {
  if (seeds == 0) throw std::invalid_argument("noisy_q_experiment: need at least one seed");
  std::vector<NoisyQResult> out;
  for (double noise : noise_levels) {
    if (!(noise >= 0.0)) throw std::invalid_argument("noisy_q_experiment: noise levels must be non-negative");
    NoisyQResult res;
    res.noise = noise;
    for (std::size_t s = 0; s < seeds; ++s) {
      TrainingConfig tc = base;
      tc.algorithm = Algorithm::adapmen;
      tc.gate_q_noise = noise;
      tc.seed = base.seed + s;
      const TrainingResult r = train(mdp, opt, tc);
      if (r.metrics.empty()) continue;
      res.mean_gap += r.metrics.back().suboptimality_gap;
      res.mean_final_p += r.metrics.back().p;
      res.mean_expert_usage += static_cast<double>(r.metrics.back().expert_action_usage);
      if (s == 0) res.first_seed_metrics = r.metrics;
    }
    res.mean_gap /= static_cast<double>(seeds);
    res.mean_final_p /= static_cast<double>(seeds);
    res.mean_expert_usage /= static_cast<double>(seeds);
    out.push_back(std::move(res));
  }
  return out;
}

}  // namespace adapmen
