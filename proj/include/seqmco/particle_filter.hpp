#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "seqmco/logspace.hpp"
#include "seqmco/model.hpp"
#include "seqmco/resample.hpp"

namespace seqmco {

enum class ResampleMethod { multinomial, alias };

struct ResamplingPolicy {
  enum class Kind { never, always, ess_threshold, fixed_schedule };

  Kind kind = Kind::ess_threshold;
  double tau = 0.5;                   // ess_threshold only
  std::vector<std::size_t> schedule;  // fixed_schedule only, 1-based steps

  static ResamplingPolicy never() { return {Kind::never, 0.0, {}}; }
  static ResamplingPolicy always() { return {Kind::always, 0.0, {}}; }
  static ResamplingPolicy ess(double tau = 0.5) {
    if (!(tau > 0.0) || tau > 1.0) {
      throw std::invalid_argument("ResamplingPolicy: tau must be in (0, 1]");
    }
    return {Kind::ess_threshold, tau, {}};
  }
  static ResamplingPolicy fixed(std::vector<std::size_t> steps);

  // Adaptive policies make the record density piecewise; only these are
  // valid for the unbiased gradient paths and the extended-space densities.
  bool is_fixed() const { return kind != Kind::ess_threshold; }

  bool contains_step(std::size_t t) const;

  // Fires strictly below tau * N, so an ensemble sitting exactly at the
  // threshold is left alone.
  bool should_resample(double ess_value, std::size_t n, std::size_t t) const;
};

struct particle_collapse_error : std::runtime_error {
  std::size_t step;
  explicit particle_collapse_error(std::size_t t)
      : std::runtime_error("particle ensemble collapsed (all weights zero) at step " +
                           std::to_string(t)),
        step(t) {}
};

// Live filter state: N weighted trajectories plus the running estimate.
struct ParticleEnsemble {
  std::size_t n_particles = 0;
  std::size_t t = 0;
  std::size_t capacity = 0;             // trajectory columns
  std::vector<double> trajectories;     // row-major, particle i at [i*capacity ..]
  std::vector<double> log_weights;      // normalized
  double log_phat = 0.0;

  std::span<const double> trajectory(std::size_t i) const {
    return std::span(trajectories).subspan(i * capacity, t);
  }
};

struct FilterStepRecord {
  double log_phat_step = 0.0;
  double log_phat_cum = 0.0;
  bool resampled = false;
  // Per-particle arrays; filled only at RecordLevel::full.
  std::vector<double> noise;
  std::vector<double> z;
  std::vector<double> log_alpha;
  std::vector<double> log_weight;          // normalized, pre-resample
  std::vector<std::uint32_t> ancestors;    // filled iff resampled
};

enum class RecordLevel { summary, full };

struct FilterRecord {
  std::size_t n_particles = 0;
  std::size_t T = 0;
  ResamplingPolicy policy;
  ResampleMethod method = ResampleMethod::multinomial;
  RecordLevel level = RecordLevel::summary;
  double log_phat = kLogZero;
  std::vector<FilterStepRecord> steps;

  std::size_t resample_count() const;
  std::vector<std::size_t> resample_times() const;  // 1-based
};

struct FilterOptions {
  ResamplingPolicy policy = ResamplingPolicy::ess(0.5);
  ResampleMethod method = ResampleMethod::multinomial;
  RecordLevel record = RecordLevel::summary;
  // Fault-injection hook for negative-control tests: adds skew * i to the
  // log incremental weight of particle i, corrupting normalization.
  double weight_skew = 0.0;
};

// One pass of the particle filter: propose from q_t, accumulate
// log p-hat(x_{1:t}) += log sum_i w_{t-1}^i alpha_t^i, normalize, resample
// per policy with weights reset to 1/N. Proposal noise for particle i comes
// from rng.substream(1 + i); resampling draws from rng.substream(0), so
// proposal noise is shared across policies under a shared seed.
FilterRecord run_particle_filter(const SequentialModel& model,
                                 const Proposal& proposal,
                                 std::span<const double> x,
                                 std::size_t n_particles,
                                 const FilterOptions& opts, RngStream rng);

// Recomputes log p-hat from a full record with noises and resampling
// decisions pinned, re-evaluating all densities under the given model and
// proposal. With unchanged parameters this reproduces record.log_phat
// bit-exactly; under perturbed parameters it is the common-random-number
// evaluation used by the finite-difference oracles.
double replay_log_phat(const FilterRecord& record, const SequentialModel& model,
                       const Proposal& proposal, std::span<const double> x);

}  // namespace seqmco
