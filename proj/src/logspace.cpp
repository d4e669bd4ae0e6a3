#include "seqmco/logspace.hpp"

#include <algorithm>
#include <cmath>

namespace seqmco {

double log_add(double log_a, double log_b) {
  if (log_a == kLogZero) return log_b;
  if (log_b == kLogZero) return log_a;
  if (log_a < log_b) std::swap(log_a, log_b);
  return log_a + std::log1p(std::exp(log_b - log_a));
}

double log_sum_exp(std::span<const double> log_values) {
  if (log_values.empty()) {
    throw std::invalid_argument("log_sum_exp: empty input");
  }
  double max_v = kLogZero;
  for (double v : log_values) max_v = std::max(max_v, v);
  if (max_v == kLogZero) return kLogZero;
  double sum = 0.0;
  for (double v : log_values) {
    if (v != kLogZero) sum += std::exp(v - max_v);
  }
  return max_v + std::log(sum);
}

double normalize_log_weights(std::span<const double> log_weights,
                             std::span<double> probs_out) {
  if (log_weights.empty()) {
    throw std::invalid_argument("normalize_log_weights: empty input");
  }
  if (probs_out.size() != log_weights.size()) {
    throw std::invalid_argument("normalize_log_weights: size mismatch");
  }
  const double log_norm = log_sum_exp(log_weights);
  if (log_norm == kLogZero) {
    throw degenerate_weights_error(
        "normalize_log_weights: all weights are zero");
  }
  double sum = 0.0;
  for (std::size_t i = 0; i < log_weights.size(); ++i) {
    probs_out[i] =
        log_weights[i] == kLogZero ? 0.0 : std::exp(log_weights[i] - log_norm);
    sum += probs_out[i];
  }
  // One renormalization pass keeps sum(probs) == 1 to ~1e-16 even for long
  // vectors, which downstream categorical samplers rely on.
  for (std::size_t i = 0; i < probs_out.size(); ++i) probs_out[i] /= sum;
  return log_norm;
}

std::pair<std::vector<double>, double> normalize_log_weights(
    std::span<const double> log_weights) {
  std::vector<double> probs(log_weights.size());
  double log_norm = normalize_log_weights(log_weights, probs);
  return {std::move(probs), log_norm};
}

}  // namespace seqmco
