#pragma once

#include "seqmco/gradients.hpp"

namespace seqmco {

struct AdamParams {
  double lr = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
};

// Adam in ascent form (objectives are maximized).
class Adam {
 public:
  Adam(std::size_t dim, const AdamParams& p)
      : p_(p), m_(dim, 0.0), v_(dim, 0.0) {}

  void step(std::span<const double> grad, std::span<double> params);

 private:
  AdamParams p_;
  std::vector<double> m_, v_;
  std::size_t t_ = 0;
};

struct TrainConfig {
  ObjectiveKind objective = ObjectiveKind::fivo;
  std::size_t n_particles = 4;
  ResamplingPolicy policy = ResamplingPolicy::ess(0.5);
  GradientVariant variant = GradientVariant::reparam_biased;
  AdamParams adam;
  std::size_t batch_size = 4;
  std::size_t max_steps = 1000;
  std::size_t validation_every = 50;
  std::size_t patience = 5;  // validations without improvement before stopping
  std::size_t validation_replicates = 4;
  std::size_t kl_every = 25;
  std::uint64_t seed = 0;
  bool train_model = true;
  bool train_proposal = true;
  bool use_score_baseline = false;
  int jobs = 0;

  void validate() const;
};

struct TrainStepInfo {
  std::size_t step = 0;
  double objective = 0.0;  // batch mean log p-hat
  double grad_norm_theta = 0.0;
  double grad_norm_phi = 0.0;
  double kl_q_prior = 0.0;  // NaN when not measured this step
  std::size_t resample_count = 0;
};

struct ValidationInfo {
  std::size_t step = 0;
  double bound = 0.0;
};

enum class TrainStatus { completed, early_stopped, diverged };

struct TrainHistory {
  std::vector<TrainStepInfo> steps;
  std::vector<ValidationInfo> validations;
  TrainStatus status = TrainStatus::completed;
  std::size_t best_step = 0;
  double best_validation = 0.0;
};

struct TrainResult {
  std::unique_ptr<SequentialModel> model;
  std::unique_ptr<Proposal> proposal;
  TrainHistory history;
};

struct train_diverged_error : std::runtime_error {
  TrainHistory history;
  explicit train_diverged_error(TrainHistory h)
      : std::runtime_error("training diverged (non-finite objective)"),
        history(std::move(h)) {}
};

// Stochastic gradient ascent on the chosen bound over model and proposal
// parameters, with validation-based early stopping (best parameters are
// restored). Throws train_diverged_error on a non-finite objective.
TrainResult train(const SequentialModel& model_init,
                  const Proposal& proposal_init,
                  const std::vector<std::vector<double>>& train_data,
                  const std::vector<std::vector<double>>& valid_data,
                  const TrainConfig& cfg);

struct SweepResult {
  std::vector<double> learning_rates;
  std::vector<TrainResult> runs;
  std::size_t selected = 0;  // argmax of best validation bound
};

SweepResult lr_grid_search(const SequentialModel& model_init,
                           const Proposal& proposal_init,
                           const std::vector<std::vector<double>>& train_data,
                           const std::vector<std::vector<double>>& valid_data,
                           const TrainConfig& base,
                           std::span<const double> learning_rates);

}  // namespace seqmco
