#pragma once

#include <span>

#include "seqmco/kalman.hpp"
#include "seqmco/model.hpp"

namespace seqmco {

struct GridSpec {
  double lo = -8.0;
  double hi = 8.0;
  std::size_t points = 401;
};

// log p(x_{1:T}) by tensor-grid trapezoid integration in log space, run as a
// forward pass over per-step grids. Requires 1-D latents with Markov
// dependence (all models in this library). Refuses T > 4: the point of this
// oracle is tiny exact instances, not scale. error_bound is the change under
// one grid coarsening.
OracleResult quadrature_log_marginal(const SequentialModel& model,
                                     std::span<const double> x,
                                     const GridSpec& grid);

// Grid wide enough that a Gaussian family's mass outside is below 1e-14:
// center +/- 8 posterior standard deviations around the observation span.
GridSpec default_grid_for(const SequentialModel& model,
                          std::span<const double> x);

}  // namespace seqmco
