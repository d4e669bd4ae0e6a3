#include "seqmco/trainer.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include "seqmco/diagnostics.hpp"
#include "seqmco/replicate.hpp"

namespace seqmco {

void Adam::step(std::span<const double> grad, std::span<double> params) {
  if (grad.size() != m_.size() || params.size() != m_.size()) {
    throw std::invalid_argument("Adam: dimension mismatch");
  }
  ++t_;
  const double bc1 = 1.0 - std::pow(p_.beta1, static_cast<double>(t_));
  const double bc2 = 1.0 - std::pow(p_.beta2, static_cast<double>(t_));
  for (std::size_t k = 0; k < m_.size(); ++k) {
    m_[k] = p_.beta1 * m_[k] + (1.0 - p_.beta1) * grad[k];
    v_[k] = p_.beta2 * v_[k] + (1.0 - p_.beta2) * grad[k] * grad[k];
    const double m_hat = m_[k] / bc1;
    const double v_hat = v_[k] / bc2;
    params[k] += p_.lr * m_hat / (std::sqrt(v_hat) + p_.eps);
  }
}

void TrainConfig::validate() const {
  if (!(adam.lr >= 0.0)) throw std::invalid_argument("TrainConfig: lr");
  if (batch_size < 1) throw std::invalid_argument("TrainConfig: batch_size");
  if (max_steps < 1) throw std::invalid_argument("TrainConfig: max_steps");
  if (variant != GradientVariant::reparam_biased && !policy.is_fixed()) {
    throw std::invalid_argument(
        "TrainConfig: unbiased gradient variants need a fixed schedule");
  }
}

namespace {

FilterOptions filter_options_for(const TrainConfig& cfg) {
  FilterOptions opts;
  switch (cfg.objective) {
    case ObjectiveKind::elbo:
    case ObjectiveKind::iwae:
      opts.policy = ResamplingPolicy::never();
      break;
    case ObjectiveKind::fivo:
      opts.policy = cfg.policy;
      break;
    default:
      throw std::invalid_argument("train: objective must be elbo/iwae/fivo");
  }
  opts.record = RecordLevel::full;
  return opts;
}

std::size_t particles_for(const TrainConfig& cfg) {
  return cfg.objective == ObjectiveKind::elbo ? 1 : cfg.n_particles;
}

double validation_bound(const SequentialModel& model, const Proposal& proposal,
                        const std::vector<std::vector<double>>& valid,
                        const TrainConfig& cfg, RngStream rng) {
  EstimatorSpec spec;
  spec.kind = cfg.objective;
  spec.n_particles = particles_for(cfg);
  spec.filter.policy = filter_options_for(cfg).policy;
  double total = 0.0;
  for (std::size_t s = 0; s < valid.size(); ++s) {
    const BoundEstimate est =
        estimate_bound(model, proposal, valid[s], spec,
                       std::max<std::size_t>(2, cfg.validation_replicates),
                       rng.substream(s), cfg.jobs);
    total += est.mean;
  }
  return total / static_cast<double>(valid.size());
}

}  // namespace

TrainResult train(const SequentialModel& model_init,
                  const Proposal& proposal_init,
                  const std::vector<std::vector<double>>& train_data,
                  const std::vector<std::vector<double>>& valid_data,
                  const TrainConfig& cfg) {
  cfg.validate();
  if (train_data.empty()) throw std::invalid_argument("train: empty dataset");

  TrainResult result;
  result.model = model_init.clone();
  result.proposal = proposal_init.clone();
  SequentialModel& model = *result.model;
  Proposal& proposal = *result.proposal;

  const std::size_t ntheta = model.param_count();
  const std::size_t nphi = proposal.param_count();
  const std::size_t P = ntheta + nphi;
  std::vector<double> params = packed_params(model, proposal);
  Adam adam(P, cfg.adam);
  const FilterOptions opts = filter_options_for(cfg);
  const std::size_t n_particles = particles_for(cfg);

  RngStream master(cfg.seed, 0x7121);
  ScoreBaseline baseline;
  TrainHistory& hist = result.history;
  hist.best_validation = -std::numeric_limits<double>::infinity();

  std::vector<double> best_params = params;
  std::size_t stale_validations = 0;

  std::vector<double> grads;   // batch x P
  std::vector<double> values;  // batch objective values
  std::vector<std::size_t> resamples;

  for (std::size_t step = 1; step <= cfg.max_steps; ++step) {
    RngStream step_rng = master.substream(step);
    const std::size_t B = cfg.batch_size;
    grads.assign(B * P, 0.0);
    values.assign(B, 0.0);
    resamples.assign(B, 0);

    // The score-function baseline is sequential state, so that variant runs
    // the batch serially; the reparameterized variants fan out.
    auto run_one = [&](std::size_t b) {
      RngStream seq_rng = step_rng.substream(b);
      const std::size_t idx = seq_rng.uniform_index(train_data.size());
      const std::vector<double>& x = train_data[idx];
      const FilterRecord rec = run_particle_filter(
          model, proposal, x, n_particles, opts, seq_rng.substream(9001));
      GradientEstimate g;
      switch (cfg.variant) {
        case GradientVariant::reparam_biased:
          g = grad_log_phat_reparam(rec, model, proposal, x);
          break;
        case GradientVariant::reparam_full:
          g = grad_fivo_full(rec, model, proposal, x);
          break;
        case GradientVariant::score_function:
          g = grad_score_function(rec, model, proposal, x,
                                  cfg.use_score_baseline ? &baseline : nullptr);
          break;
      }
      values[b] = rec.log_phat;
      resamples[b] = rec.resample_count();
      for (std::size_t k = 0; k < ntheta; ++k) grads[b * P + k] = g.d_theta[k];
      for (std::size_t k = 0; k < nphi; ++k) {
        grads[b * P + ntheta + k] = g.d_phi[k];
      }
    };
    TrainStepInfo info;
    try {
      if (cfg.variant == GradientVariant::score_function) {
        serial_for(B, run_one);
      } else {
        parallel_for(B, run_one, cfg.jobs);
      }
    } catch (const particle_collapse_error&) {
      // A collapsed ensemble mid-training is a failed run, not a usage
      // error: abort like any other divergence.
      info.step = step;
      info.objective = std::numeric_limits<double>::quiet_NaN();
      hist.steps.push_back(info);
      hist.status = TrainStatus::diverged;
      throw train_diverged_error(hist);
    }

    info.step = step;
    double obj = 0.0;
    for (double v : values) obj += v;
    info.objective = obj / static_cast<double>(B);
    for (std::size_t b = 0; b < B; ++b) info.resample_count += resamples[b];

    if (!std::isfinite(info.objective)) {
      hist.steps.push_back(info);
      hist.status = TrainStatus::diverged;
      throw train_diverged_error(hist);
    }

    std::vector<double> grad(P, 0.0);
    for (std::size_t b = 0; b < B; ++b) {
      for (std::size_t k = 0; k < P; ++k) grad[k] += grads[b * P + k];
    }
    for (std::size_t k = 0; k < P; ++k) grad[k] /= static_cast<double>(B);
    if (!cfg.train_model) std::fill_n(grad.begin(), ntheta, 0.0);
    if (!cfg.train_proposal) std::fill(grad.begin() + ntheta, grad.end(), 0.0);

    for (std::size_t k = 0; k < ntheta; ++k) {
      info.grad_norm_theta += grad[k] * grad[k];
    }
    for (std::size_t k = ntheta; k < P; ++k) {
      info.grad_norm_phi += grad[k] * grad[k];
    }
    info.grad_norm_theta = std::sqrt(info.grad_norm_theta);
    info.grad_norm_phi = std::sqrt(info.grad_norm_phi);

    adam.step(grad, params);
    apply_packed_params(model, proposal, params);

    if (cfg.kl_every > 0 && step % cfg.kl_every == 0) {
      info.kl_q_prior = kl_q_prior(model, proposal, train_data[0], 8,
                                   master.substream(0xC100 + step));
    } else {
      info.kl_q_prior = std::numeric_limits<double>::quiet_NaN();
    }
    hist.steps.push_back(info);

    const bool validate_now =
        !valid_data.empty() &&
        (step % cfg.validation_every == 0 || step == cfg.max_steps);
    if (validate_now) {
      // Fixed validation streams: bounds at different steps share their
      // draws, so early-stopping comparisons are not dominated by
      // evaluation noise.
      const double bound = validation_bound(model, proposal, valid_data, cfg,
                                            master.substream(0xA110));
      hist.validations.push_back({step, bound});
      if (bound > hist.best_validation) {
        hist.best_validation = bound;
        hist.best_step = step;
        best_params = params;
        stale_validations = 0;
      } else if (++stale_validations >= cfg.patience) {
        hist.status = TrainStatus::early_stopped;
        break;
      }
    }
  }

  if (!valid_data.empty()) {
    apply_packed_params(model, proposal, best_params);
  }
  return result;
}

SweepResult lr_grid_search(const SequentialModel& model_init,
                           const Proposal& proposal_init,
                           const std::vector<std::vector<double>>& train_data,
                           const std::vector<std::vector<double>>& valid_data,
                           const TrainConfig& base,
                           std::span<const double> learning_rates) {
  if (learning_rates.empty()) {
    throw std::invalid_argument("lr_grid_search: empty grid");
  }
  SweepResult result;
  result.learning_rates.assign(learning_rates.begin(), learning_rates.end());
  double best = -std::numeric_limits<double>::infinity();
  for (std::size_t i = 0; i < learning_rates.size(); ++i) {
    TrainConfig cfg = base;
    cfg.adam.lr = learning_rates[i];
    result.runs.push_back(
        train(model_init, proposal_init, train_data, valid_data, cfg));
    const double score = result.runs.back().history.best_validation;
    if (score > best) {
      best = score;
      result.selected = i;
    }
  }
  return result;
}

}  // namespace seqmco
