#pragma once

#include <functional>

#include "seqmco/objectives.hpp"
#include "seqmco/particle_filter.hpp"

namespace seqmco {

enum class GradientVariant { reparam_biased, reparam_full, score_function };

std::string to_string(GradientVariant v);
GradientVariant gradient_variant_from_string(const std::string& name);

struct GradientEstimate {
  std::vector<double> d_theta;
  std::vector<double> d_phi;
  GradientVariant variant = GradientVariant::reparam_biased;

  double squared_norm() const;
};

// Per-step moving-average baselines for the score multipliers
// log p-hat(x_{1:T}) / p-hat(x_{1:t-1}) (proposal terms) and
// log p-hat(x_{1:T}) / p-hat(x_{1:t}) (resampling terms). Updated from past
// records only, so subtracting them leaves the estimator mean unchanged.
class ScoreBaseline {
 public:
  explicit ScoreBaseline(double decay = 0.9) : decay_(decay) {}

  double proposal_baseline(std::size_t t) const;
  double resample_baseline(std::size_t t) const;
  void update(const FilterRecord& record);

 private:
  double decay_;
  bool primed_ = false;
  std::vector<double> proposal_;
  std::vector<double> resample_;
};

// Gradient of log p-hat holding resampling indices and proposal noises
// fixed, computed by the chain rule along the recorded trajectories
// (reparameterized pathwise estimator; biased for the bound's gradient when
// the record contains resampling events).
GradientEstimate grad_log_phat_reparam(const FilterRecord& record,
                                       const SequentialModel& model,
                                       const Proposal& proposal,
                                       std::span<const double> x);

// Adds the resampling score terms
//   sum_r log[p-hat(x_{1:T}) / p-hat(x_{1:k_r})] * d log w_{k_r}^{s(i)}
// to the pathwise gradient; unbiased for the bound's gradient under a fixed
// (non-adaptive) resampling schedule. Adaptive records are refused.
GradientEstimate grad_fivo_full(const FilterRecord& record,
                                const SequentialModel& model,
                                const Proposal& proposal,
                                std::span<const double> x);

// Non-reparameterized three-term estimator: conditional gradient plus
// proposal score terms plus resampling score terms. Fixed schedules only.
GradientEstimate grad_score_function(const FilterRecord& record,
                                     const SequentialModel& model,
                                     const Proposal& proposal,
                                     std::span<const double> x,
                                     ScoreBaseline* baseline = nullptr);

// Pathwise part and resampling part reported separately;
// full = base + resampling exactly (same pass, same arithmetic).
struct GradientBreakdown {
  GradientEstimate base;
  GradientEstimate resampling;
};
GradientBreakdown gradient_breakdown(const FilterRecord& record,
                                     const SequentialModel& model,
                                     const Proposal& proposal,
                                     std::span<const double> x,
                                     GradientVariant variant,
                                     ScoreBaseline* baseline = nullptr);

// -------- replicated gradient statistics --------

struct GradientStats {
  std::vector<double> mean_theta, se_theta, var_theta;
  std::vector<double> mean_phi, se_phi, var_phi;
  std::size_t replicates = 0;
  double total_variance = 0.0;  // sum of per-coordinate variances
};

GradientStats estimate_gradient(const SequentialModel& model,
                                const Proposal& proposal,
                                std::span<const double> x,
                                std::size_t n_particles,
                                const FilterOptions& opts,
                                GradientVariant variant,
                                std::size_t replicates, RngStream rng,
                                int jobs = 0);

// -------- finite-difference verification --------

// Central differences of a deterministic function of a packed parameter
// vector; used for exactness checks without Monte Carlo noise.
std::vector<double> central_difference(
    const std::function<double(std::span<const double>)>& f,
    std::span<const double> at, double step);

std::vector<double> packed_params(const SequentialModel& model,
                                  const Proposal& proposal);
void apply_packed_params(SequentialModel& model, Proposal& proposal,
                         std::span<const double> packed);

// Per-seed check of the pathwise gradient: one recorded run, analytic
// tangents against central differences of replay_log_phat with the same
// noises and resampling indices forced.
struct PerSeedFdResult {
  std::vector<double> analytic;  // packed theta then phi
  std::vector<double> fd;
  double max_rel_error = 0.0;
};
PerSeedFdResult per_seed_fd_check(const SequentialModel& model,
                                  const Proposal& proposal,
                                  std::span<const double> x,
                                  std::size_t n_particles,
                                  const FilterOptions& opts, double step,
                                  RngStream rng);

// Expectation-level check: mean analytic gradient vs central differences of
// the Monte-Carlo-estimated objective, with common random numbers across the
// two sides of each difference. Reports per-coordinate agreement z-scores.
struct FdRow {
  std::size_t coordinate = 0;  // packed index
  bool is_theta = true;
  double analytic_mean = 0.0;
  double analytic_se = 0.0;
  double fd_mean = 0.0;
  double fd_se = 0.0;
  double z_score = 0.0;
};
struct FdReport {
  std::vector<FdRow> rows;
  GradientVariant variant = GradientVariant::reparam_biased;
  double max_abs_z() const;
};

struct FdExpectationConfig {
  double step = 1e-2;
  std::size_t replicates = 100000;
  int jobs = 0;
};

FdReport finite_difference_check(const SequentialModel& model,
                                 const Proposal& proposal,
                                 std::span<const double> x,
                                 std::size_t n_particles,
                                 const FilterOptions& opts,
                                 GradientVariant variant,
                                 const FdExpectationConfig& cfg,
                                 RngStream rng);

// CSV document: (coordinate, analytic, fd, z_score, variant).
std::string fd_report_csv(const FdReport& report);

}  // namespace seqmco
