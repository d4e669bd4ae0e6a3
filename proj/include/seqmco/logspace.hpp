#pragma once

#include <limits>
#include <span>
#include <utility>
#include <stdexcept>
#include <vector>

// Log-space scalar arithmetic. Quantities named log_* hold the natural log
// of a nonnegative number; -inf encodes zero. All operations keep that
// encoding NaN-free for finite or -inf inputs.

namespace seqmco {

inline constexpr double kLogZero = -std::numeric_limits<double>::infinity();

// Thrown when a weight vector has no finite entry left (total collapse).
struct degenerate_weights_error : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// log(exp(a) + exp(b)) without overflow.
double log_add(double log_a, double log_b);

// log sum_i exp(v_i), max-shifted. Empty input is a usage error.
double log_sum_exp(std::span<const double> log_values);

// Normalized probabilities from log weights; returns log of the total mass.
// probs_out must have the same length. Throws degenerate_weights_error when
// every entry is -inf.
double normalize_log_weights(std::span<const double> log_weights,
                             std::span<double> probs_out);

std::pair<std::vector<double>, double> normalize_log_weights(
    std::span<const double> log_weights);

}  // namespace seqmco
