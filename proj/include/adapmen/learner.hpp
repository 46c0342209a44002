#pragma once

#include <cmath>
#include <cstddef>
#include <deque>
#include <optional>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "adapmen/mdp.hpp"
#include "adapmen/rng.hpp"
#include "adapmen/trace.hpp"

namespace adapmen {

/// Expert-labelled samples; oldest are evicted first once `capacity` is hit.
class InterventionBuffer {
 public:
  struct Sample {
    StateId state = 0;
    ActionId action = 0;
    std::size_t h = 1;
    bool operator==(const Sample&) const = default;
  };

  InterventionBuffer() = default;
  explicit InterventionBuffer(std::optional<std::size_t> capacity) : capacity_(capacity) {
    if (capacity_ && *capacity_ == 0) throw std::invalid_argument("buffer capacity must be positive");
  }

  void add(Sample sample) {
    samples_.push_back(sample);
    ++total_added_;
    if (capacity_ && samples_.size() > *capacity_) samples_.pop_front();
  }

  std::size_t size() const { return samples_.size(); }
  bool empty() const { return samples_.empty(); }
  std::size_t total_added() const { return total_added_; }
  std::optional<std::size_t> capacity() const { return capacity_; }
  const std::deque<Sample>& samples() const { return samples_; }

 private:
  std::optional<std::size_t> capacity_;
  std::deque<Sample> samples_;
  std::size_t total_added_ = 0;
};

enum class LearnerKind { mle_tabular, eg_tabular };

inline std::string to_string(LearnerKind k) { return k == LearnerKind::mle_tabular ? "mle_tabular" : "eg_tabular"; }

inline LearnerKind learner_kind_from_string(const std::string& s) {
  if (s == "mle_tabular") return LearnerKind::mle_tabular;
  if (s == "eg_tabular") return LearnerKind::eg_tabular;
  throw std::invalid_argument("unknown learner kind '" + s + "'");
}

struct LearnerSettings {
  LearnerKind kind = LearnerKind::mle_tabular;
  double smoothing = 0.1;
  double learning_rate = 0.5;
  double label_noise = 0.0;
};

/// Label after optional noise injection: with probability `label_noise` a
/// uniformly random other action. Draws nothing when label_noise == 0.
inline ActionId noisy_label(ActionId label, std::size_t num_actions, double label_noise, Rng& rng) {
  if (label_noise <= 0.0 || num_actions < 2) return label;
  if (!rng.bernoulli(label_noise)) return label;
  const ActionId other = rng.uniform_index(num_actions - 1);
  return other >= label ? other + 1 : other;
}

/// Per-state label counts after noise injection, in buffer order.
inline std::vector<double> noisy_label_counts(const InterventionBuffer& buffer, std::size_t num_states,
                                              std::size_t num_actions, double label_noise, Rng& rng) {
  std::vector<double> counts(num_states * num_actions, 0.0);
  for (const auto& sample : buffer.samples()) {
    if (sample.state >= num_states || sample.action >= num_actions)
      throw std::out_of_range("buffer sample outside the model");
    counts[sample.state * num_actions + noisy_label(sample.action, num_actions, label_noise, rng)] += 1.0;
  }
  return counts;
}

/**
 * Smoothed count estimator: pi(a|s) proportional to count(s,a) + smoothing,
 * where each buffered label is first flipped with probability label_noise.
 * States with no samples get the uniform distribution.
 */
inline PolicyTable fit_mle(const InterventionBuffer& buffer, std::size_t num_states, std::size_t num_actions,
                           double smoothing, double label_noise, Rng& rng) {
  if (!(smoothing > 0.0)) throw std::invalid_argument("fit_mle: smoothing must be positive");
  const auto counts = noisy_label_counts(buffer, num_states, num_actions, label_noise, rng);
  PolicyTable pi = PolicyTable::uniform(num_states, num_actions);
  for (StateId s = 0; s < num_states; ++s) {
    double total = 0.0;
    for (ActionId a = 0; a < num_actions; ++a) total += counts[s * num_actions + a];
    if (total == 0.0) continue;
    auto row = pi.row(s);
    const double denom = total + smoothing * static_cast<double>(num_actions);
    for (ActionId a = 0; a < num_actions; ++a) row[a] = (counts[s * num_actions + a] + smoothing) / denom;
  }
  return pi;
}

/// Normalised exponentiated-gradient step: w_a <- w_a exp(-eta z_a) / Z.
inline std::vector<double> fit_eg_step(std::span<const double> weights, std::span<const double> loss,
                                       double eta = 0.5) {
  if (weights.size() != loss.size()) throw std::invalid_argument("fit_eg_step: length mismatch");
  for (double z : loss)
    if (!(z >= 0.0 && z <= 1.0)) throw std::invalid_argument("fit_eg_step: loss entries must lie in [0,1]");
  std::vector<double> out(weights.size());
  double total = 0.0;
  for (std::size_t i = 0; i < weights.size(); ++i) {
    out[i] = weights[i] * std::exp(-eta * loss[i]);
    total += out[i];
  }
  for (auto& w : out) w /= total;
  return out;
}

/**
 * One pass of normalised EG over every state. The per-state loss vector is
 * z(s) = beta(s) * (1 - nu(.|s)), with beta(s) the share of the window's
 * samples at s and nu(.|s) the empirical (noisy) label distribution there.
 */
inline void eg_update(PolicyTable& policy, std::span<const InterventionBuffer::Sample> window, double label_noise,
                      double eta, Rng& rng) {
  if (window.empty()) return;
  const std::size_t S = policy.num_states(), A = policy.num_actions();
  std::vector<double> counts(S * A, 0.0);
  for (const auto& sample : window) counts[sample.state * A + noisy_label(sample.action, A, label_noise, rng)] += 1.0;
  const double n = static_cast<double>(window.size());
  std::vector<double> z(A);
  for (StateId s = 0; s < S; ++s) {
    double at_state = 0.0;
    for (ActionId a = 0; a < A; ++a) at_state += counts[s * A + a];
    if (at_state == 0.0) continue;
    const double beta = at_state / n;
    for (ActionId a = 0; a < A; ++a) z[a] = beta * (1.0 - counts[s * A + a] / at_state);
    const auto updated = fit_eg_step(policy.row(s), z, eta);
    std::copy(updated.begin(), updated.end(), policy.row(s).begin());
  }
}

/// Mean expected 0-1 loss 1 - pi(label|s) over the buffer; equals the mean
/// TV distance between pi(.|s) and the one-hot label.
inline double estimate_epsb(const InterventionBuffer& buffer, const PolicyTable& pi) {
  if (buffer.empty()) throw std::invalid_argument("estimate_epsb: empty buffer");
  double loss = 0.0;
  for (const auto& sample : buffer.samples()) loss += 1.0 - pi.prob(sample.state, sample.action);
  return loss / static_cast<double>(buffer.size());
}

/// Fraction of buffered labels that differ from the learner's argmax action.
inline double argmax_mismatch(const InterventionBuffer& buffer, const PolicyTable& pi) {
  if (buffer.empty()) throw std::invalid_argument("argmax_mismatch: empty buffer");
  std::size_t wrong = 0;
  for (const auto& sample : buffer.samples()) wrong += pi.argmax(sample.state) != sample.action ? 1 : 0;
  return static_cast<double>(wrong) / static_cast<double>(buffer.size());
}

/// Fraction of intervened steps in a window of gate decisions.
inline double estimate_delta(std::span<const RolloutTrace> window) {
  std::size_t steps = 0, fired = 0;
  for (const auto& trace : window)
    for (const auto& rec : trace.steps) {
      ++steps;
      fired += rec.intervened ? 1 : 0;
    }
  if (steps == 0) throw std::invalid_argument("estimate_delta: empty window");
  return static_cast<double>(fired) / static_cast<double>(steps);
}

}  // namespace adapmen
