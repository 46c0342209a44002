#pragma once

#include <cmath>
#include <limits>
#include <span>
#include <stdexcept>

namespace adapmen {

/// Total variation distance 0.5 * sum |p_i - q_i|.
inline double tv_divergence(std::span<const double> p, std::span<const double> q) {
  if (p.size() != q.size()) throw std::invalid_argument("tv_divergence: length mismatch");
  double sum = 0.0;
  for (std::size_t i = 0; i < p.size(); ++i) sum += std::abs(p[i] - q[i]);
  return 0.5 * sum;
}

/// KL(p || q) with 0 log 0 = 0; +infinity when p puts mass where q has none.
inline double kl_divergence(std::span<const double> p, std::span<const double> q) {
  if (p.size() != q.size()) throw std::invalid_argument("kl_divergence: length mismatch");
  double sum = 0.0;
  for (std::size_t i = 0; i < p.size(); ++i) {
    if (p[i] <= 0.0) continue;
    if (q[i] <= 0.0) return std::numeric_limits<double>::infinity();
    sum += p[i] * std::log(p[i] / q[i]);
  }
  // Rounding can push a true zero slightly negative.
  return sum < 0.0 ? 0.0 : sum;
}

}  // namespace adapmen
