#pragma once

#include "seqmco/particle_filter.hpp"

namespace seqmco {

// Conditional SMC record: a filter record whose privileged slot holds the
// supplied posterior trajectory y_{1:t} after every resampling event.
// slot[0] is the privileged slot of the first block; slot[r] is the slot
// drawn uniformly at the r-th resampling event (the privileged slot of
// block r+1; the draw at the final event only enters the density).
struct CsmcRecord {
  FilterRecord base;
  std::vector<double> y;
  std::vector<std::size_t> slot;
};

// Runs conditional SMC under a fixed schedule that must resample at T:
// free particles propose from q_t, the privileged slot is pinned to y, and
// resampling re-selects the privileged slot uniformly. The pinned slot's
// recorded noise is the value that reproduces y under the reparameterized
// proposal, so the record replays like any filter record.
CsmcRecord run_csmc(const SequentialModel& model, const Proposal& proposal,
                    std::span<const double> x, std::size_t n_particles,
                    const std::vector<std::size_t>& schedule,
                    std::span<const double> y, RngStream rng);

// Joint log-density of the filter's variables (proposal draws and ancestor
// choices) for a record produced under a fixed schedule resampling at T:
//   log g = sum_r [ sum_i log w_{k_r}^{s(i)} + sum_{k in block r} sum_i log q_k ].
double extended_log_density_g(const FilterRecord& record,
                              const Proposal& proposal,
                              std::span<const double> x);

// Joint log-density of the conditional-SMC variables for the same record
// shape: free slots keep their q and ancestor factors, the privileged slot
// contributes posterior conditionals p(z_k | x_{1:T}, z_{1:k-1}) and each
// resampling event contributes the uniform 1/N slot factor.
// `posterior` supplies the exact posterior conditionals (the posterior
// proposal families).
double extended_log_density_f(const CsmcRecord& record,
                              const Proposal& proposal,
                              const Proposal& posterior,
                              std::span<const double> x);

// | log p(x) + log f - log g - log p-hat |; identically zero in exact
// arithmetic for any record realizable under both densities.
double verify_unbiasedness_identity(const CsmcRecord& record,
                                    const Proposal& proposal,
                                    const Proposal& posterior,
                                    std::span<const double> x,
                                    double oracle_log_px);

// log (f/g) evaluated on a plain filter record with the uniform slot draws
// marginalized analytically: block 1 pins slot 0, later blocks average the
// posterior/proposal ratio over all slots. E_g[exp(...)] = 1.
double log_ratio_f_over_g(const FilterRecord& record, const Proposal& proposal,
                          const Proposal& posterior,
                          std::span<const double> x);

}  // namespace seqmco
