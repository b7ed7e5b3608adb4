#pragma once

#include <algorithm>
#include <cmath>
#include <span>
#include <vector>

namespace ffrr::detail {

// softmax(scores / tau) with max subtraction; caller validates inputs.
inline std::vector<double> softmax(std::span<const double> scores, double tau) {
  std::vector<double> out(scores.size());
  const double top = *std::max_element(scores.begin(), scores.end());
  double total = 0.0;
  for (std::size_t i = 0; i < scores.size(); ++i) {
    out[i] = std::exp((scores[i] - top) / tau);
    total += out[i];
  }
  for (double& p : out) p /= total;
  return out;
}

// log softmax(scores / tau).
inline std::vector<double> log_softmax(std::span<const double> scores, double tau) {
  std::vector<double> out(scores.size());
  const double top = *std::max_element(scores.begin(), scores.end());
  double total = 0.0;
  for (double s : scores) total += std::exp((s - top) / tau);
  const double log_total = std::log(total);
  for (std::size_t i = 0; i < scores.size(); ++i) out[i] = (scores[i] - top) / tau - log_total;
  return out;
}

}  // namespace ffrr::detail
