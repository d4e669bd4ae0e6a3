#pragma once

#include <functional>
#include <memory>
#include <optional>
#include <string>

#include "seqmco/particle_filter.hpp"

namespace seqmco {

enum class ObjectiveKind { elbo, iwae, fivo, ais, mis };

std::string to_string(ObjectiveKind kind);
ObjectiveKind objective_from_string(const std::string& name);

// One draw of log [p(x, z) / q(z | x)] with z ~ q; the expectation is the
// ELBO. Bit-identical to the N = 1 particle filter under a shared stream.
double elbo_sample(const SequentialModel& model, const Proposal& proposal,
                   std::span<const double> x, RngStream rng);

// log (1/N) sum_i p(x, z^i)/q(z^i | x). Implemented as the particle filter
// with the never-resample policy, which computes the same average.
double iwae_estimate(const SequentialModel& model, const Proposal& proposal,
                     std::span<const double> x, std::size_t n_particles,
                     RngStream rng);

// log p-hat from one particle filter pass; the expectation is the filtering
// bound for the given policy.
double fivo_estimate(const SequentialModel& model, const Proposal& proposal,
                     std::span<const double> x, std::size_t n_particles,
                     const FilterOptions& opts, RngStream rng);

// -------- annealed importance sampling --------

struct AisSchedule {
  std::vector<double> betas;  // size N+1; betas.front()=0, betas.back()=1
  double rw_std = 0.5;        // random-walk Metropolis proposal std
  std::size_t mh_sweeps = 1;  // component sweeps per temperature; 0 = copy kernel

  static AisSchedule linear(std::size_t n, double rw_std = 0.5,
                            std::size_t mh_sweeps = 1);
  std::size_t n_temperatures() const { return betas.size() - 1; }
  void validate() const;
};

struct AisDiagnostics {
  std::size_t proposals = 0;
  std::size_t accepts = 0;
  bool zero_acceptance_warning = false;
};

// Latent-space target: unnormalized log p(x, z) plus the initial
// distribution q(z | x), both over a fixed-dimension latent vector.
struct LatentTarget {
  std::size_t dim = 0;
  std::function<double(std::span<const double>)> log_joint;
  std::function<double(std::span<const double>)> log_q;
  std::function<std::vector<double>(RngStream&)> sample_q;
};

// Adapter for sequential models: z is the full trajectory, q the factored
// proposal chain.
LatentTarget make_latent_target(const SequentialModel& model,
                                const Proposal& proposal,
                                std::span<const double> x);

// sum_i (beta_{i+1} - beta_i) log [p(x,z_i)/q(z_i|x)] with z_1 ~ q and
// z_i ~ T_i, where T_i is random-walk Metropolis targeting
// q^(1-beta_i) p^(beta_i). exp(result) is unbiased for p(x).
double ais_estimate(const LatentTarget& target, const AisSchedule& schedule,
                    RngStream rng, AisDiagnostics* diag = nullptr);

// -------- multiple importance sampling --------

struct MisComponent {
  std::function<double(std::span<const double>)> log_density;
  std::function<std::vector<double>(RngStream&)> sample;
};

struct MisMixture {
  std::vector<MisComponent> components;
  std::vector<double> weights;  // nonnegative, sum to 1 within 1e-12

  void validate() const;
};

MisComponent make_mis_component(const SequentialModel& model,
                                const Proposal& proposal,
                                std::span<const double> x);

// log sum_i w_i p(x,z_i) / sum_j w_j q_j(z_i); the Rao-Blackwellized mixture
// estimator. exp(result) is unbiased for p(x).
double mis_estimate(
    const std::function<double(std::span<const double>)>& log_joint,
    const MisMixture& mixture, RngStream rng);

// -------- replicated estimation --------

struct BoundEstimate {
  double mean = 0.0;
  double std_error = 0.0;
  std::size_t replicates = 0;
  std::size_t n_particles = 0;
  ObjectiveKind objective = ObjectiveKind::fivo;
  ResamplingPolicy policy;  // meaningful for fivo only
};

// Everything needed to draw one replicate of any objective.
struct EstimatorSpec {
  ObjectiveKind kind = ObjectiveKind::fivo;
  std::size_t n_particles = 4;  // particles (iwae/fivo), temperatures (ais),
                                // components (mis); ignored by elbo
  FilterOptions filter;         // fivo
  std::optional<AisSchedule> ais;            // defaults to linear grid
  std::vector<double> mis_weights;           // defaults to uniform
  std::vector<std::shared_ptr<const Proposal>> mis_components;  // defaults to
                                                                // n copies of
                                                                // the proposal
};

double draw_objective(const SequentialModel& model, const Proposal& proposal,
                      std::span<const double> x, const EstimatorSpec& spec,
                      RngStream rng);

// Sample mean and standard error of the estimator across `replicates`
// independent substreams; replicate r uses rng.substream(r), evaluated in
// parallel with a deterministic reduction order.
BoundEstimate estimate_bound(const SequentialModel& model,
                             const Proposal& proposal,
                             std::span<const double> x,
                             const EstimatorSpec& spec, std::size_t replicates,
                             RngStream rng, int jobs = 0);

// Same, with caller-chosen stream ids; duplicates are a usage error.
BoundEstimate estimate_bound(const SequentialModel& model,
                             const Proposal& proposal,
                             std::span<const double> x,
                             const EstimatorSpec& spec,
                             std::span<const std::uint64_t> stream_ids,
                             std::uint64_t seed, int jobs = 0);

}  // namespace seqmco
