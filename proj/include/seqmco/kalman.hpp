#pragma once

#include <span>
#include <vector>

#include "seqmco/conjugate_model.hpp"
#include "seqmco/lgssm.hpp"

namespace seqmco {

enum class OracleMethod { kalman, conjugate, quadrature };

struct OracleResult {
  double log_marginal = 0.0;
  OracleMethod method = OracleMethod::kalman;
  double error_bound = 0.0;  // 0 for exact methods
};

// Exact log p(x_{1:T}) by the prediction-error decomposition.
OracleResult kalman_log_marginal(const LgssmParams& p,
                                 std::span<const double> x);

// Exact log p(x_{1:T}) = sum_t log N(x_t; mu_t, var_z + var_obs).
OracleResult conjugate_log_marginal(const ConjugateModel& model,
                                    std::span<const double> x);

struct KalmanMoments {
  std::vector<Gaussian> predicted;  // p(z_t | x_{1:t-1})
  std::vector<Gaussian> filtered;   // p(z_t | x_{1:t})
  std::vector<Gaussian> smoothed;   // p(z_t | x_{1:T})
  double log_marginal = 0.0;
};

// Forward filter plus RTS smoothing pass.
KalmanMoments kalman_filter_smoother(const LgssmParams& p,
                                     std::span<const double> x);

}  // namespace seqmco
