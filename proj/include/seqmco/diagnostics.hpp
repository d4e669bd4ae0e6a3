#pragma once

#include "seqmco/kalman.hpp"
#include "seqmco/objectives.hpp"

namespace seqmco {

// One row of the bias / relative-variance study. Relative variance is
// computed from exp(log p-hat - oracle) so the shift by the oracle keeps the
// ratios in range.
struct BiasVarianceReport {
  std::size_t n_particles = 0;
  std::size_t replicates = 0;
  double bias = 0.0;  // oracle - mean(log p-hat)
  double bias_se = 0.0;
  double rel_var = 0.0;  // Var(p-hat / p)
  double rel_var_se = 0.0;
  double half_rel_var = 0.0;
  double sixth_central_moment = 0.0;  // E[(p-hat/p - 1)^6], a noisy proxy
};

std::vector<BiasVarianceReport> bias_vs_relative_variance(
    const SequentialModel& model, const Proposal& proposal,
    std::span<const double> x, double oracle_log_px,
    const EstimatorSpec& spec, std::span<const std::size_t> n_grid,
    std::size_t replicates, RngStream rng, int jobs = 0);

// -------- inverse-moment study --------

struct WeightDistribution {
  enum class Kind { lognormal, point_mass };
  Kind kind = Kind::lognormal;
  double mu = 0.0;     // lognormal location
  double sigma = 1.0;  // lognormal scale
  double value = 1.0;  // point mass
};

struct InverseMomentReport {
  double M = 0.0, C = 0.0, epsilon = 0.0;  // fitted tail constants
  double lemma_bound = 0.0;                // C M^eps / eps + 1/M
  std::vector<std::size_t> n_grid;
  std::vector<double> inv_moment;     // empirical E[p-hat_N^{-1}]
  std::vector<double> inv_moment_se;
};

// Empirical inverse moments of averages of i.i.d. weights, against the tail
// bound derived from P(w < u) <= C u^{1+eps} on [0, M). Distributions whose
// CDF near zero cannot be bounded that way are refused.
InverseMomentReport inverse_moment_experiment(const WeightDistribution& dist,
                                              std::span<const std::size_t> n_grid,
                                              std::size_t replicates,
                                              RngStream rng, int jobs = 0);

// -------- variance scaling in sequence length --------

struct VarianceScalingRow {
  std::size_t T = 0;
  std::string estimator;  // "iwae" or "fivo"
  double rel_var = 0.0;
  double rel_var_se = 0.0;
  double oracle_log_px = 0.0;
};

// Relative variance of the bootstrap-proposal estimators across sequence
// lengths; one synthetic sequence per T, drawn from the model.
std::vector<VarianceScalingRow> variance_scaling_in_T(
    const LgssmParams& params, std::span<const std::size_t> t_grid,
    std::size_t n_particles, std::size_t replicates, RngStream rng,
    int jobs = 0);

// -------- posterior-collapse tracking --------

// sum_t E_q[ KL(q_t || p_t) ] with the conditioning path rolled from q;
// closed-form per-step Gaussian KL averaged over `rollouts` trajectories.
double kl_q_prior(const SequentialModel& model, const Proposal& proposal,
                  std::span<const double> x, std::size_t rollouts,
                  RngStream rng);

// -------- cross-evaluation of trained models --------

struct CrossEvalEntry {
  std::string trained_with;
  BoundEstimate elbo, iwae, fivo;
  double reported = 0.0;  // max bound (elbo/iwae-trained), fivo otherwise
  double reported_se = 0.0;
};

// Dataset-averaged ELBO / IWAE_n / FIVO_n bounds for one trained
// (model, proposal) pair. The ELBO side gets n_eval-fold replicate averaging
// so the compute budgets match.
CrossEvalEntry cross_evaluate(const SequentialModel& model,
                              const Proposal& proposal,
                              const std::vector<std::vector<double>>& data,
                              std::size_t n_eval, std::size_t replicates,
                              ObjectiveKind trained_with, RngStream rng,
                              int jobs = 0);

// CSV documents (header row first, format column pinned at 1).
std::string bias_variance_csv(std::span<const BiasVarianceReport> reports);
std::string inverse_moment_csv(const InverseMomentReport& report);
std::string variance_scaling_csv(std::span<const VarianceScalingRow> rows);
std::string cross_eval_csv(std::span<const CrossEvalEntry> entries);

}  // namespace seqmco
