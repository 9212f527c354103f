#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <span>
#include <vector>

namespace gfn {

/// Relative comparison with an absolute floor: |a-b| <= tol * max(1,|a|,|b|).
/// Flow values span many orders of magnitude, so a pure relative test would be
/// too strict near zero and a pure absolute one too loose for large flows.
inline bool close(double a, double b, double tol) {
  return std::abs(a - b) <= tol * std::max({1.0, std::abs(a), std::abs(b)});
}

inline double log_sum_exp(std::span<const double> xs) {
  double m = -HUGE_VAL;
  for (double x : xs) m = std::max(m, x);
  if (!std::isfinite(m)) return m;
  double s = 0.0;
  for (double x : xs) s += std::exp(x - m);
  return m + std::log(s);
}

/// Normalized probabilities from unconstrained logits, with max subtraction.
inline void softmax_into(std::span<const double> logits, std::span<double> out) {
  double m = -HUGE_VAL;
  for (double x : logits) m = std::max(m, x);
  double s = 0.0;
  for (std::size_t i = 0; i < logits.size(); ++i) {
    out[i] = std::exp(logits[i] - m);
    s += out[i];
  }
  for (std::size_t i = 0; i < logits.size(); ++i) out[i] /= s;
}

inline std::vector<double> softmax(std::span<const double> logits) {
  std::vector<double> out(logits.size());
  softmax_into(logits, out);
  return out;
}

}  // namespace gfn
