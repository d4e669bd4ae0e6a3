#include <doctest.h>

#include <cmath>

#include "seqmco/diagnostics.hpp"
#include "seqmco/kalman.hpp"
#include "seqmco/proposals.hpp"
#include "seqmco/trainer.hpp"

using namespace seqmco;

namespace {

LgssmParams easy_params() {
  LgssmParams p;
  p.a = 0.5;
  p.c = 1.0;
  p.var_z = 0.5;
  p.var_x = 1.0;
  p.var_0 = 0.5;
  return p;
}

}  // namespace

TEST_SUITE_BEGIN("trainer");

TEST_CASE("adam ascends the gradient") {
  Adam adam(2, AdamParams{0.1, 0.9, 0.999, 1e-8});
  std::vector<double> params = {0.0, 0.0};
  const std::vector<double> grad = {1.0, -2.0};
  adam.step(grad, params);
  CHECK(params[0] > 0.0);
  CHECK(params[1] < 0.0);
  CHECK(params[0] == doctest::Approx(0.1).epsilon(1e-4));
}

TEST_CASE("zero learning rate leaves parameters unchanged") {
  const Lgssm model(easy_params());
  const LearnedGaussianProposal q(model);
  const auto data = simulate_dataset(model, 8, 6, RngStream(150, 0));
  TrainConfig cfg;
  cfg.objective = ObjectiveKind::fivo;
  cfg.n_particles = 4;
  cfg.adam.lr = 0.0;
  cfg.max_steps = 20;
  cfg.validation_every = 50;
  cfg.seed = 1;
  const TrainResult res = train(model, q, data, {}, cfg);
  CHECK(res.model->params() == model.params());
  CHECK(res.proposal->params() == q.params());
  CHECK(res.history.steps.size() == 20);
}

TEST_CASE("elbo training of the proposal closes most of the oracle gap") {
  const LgssmParams p = easy_params();
  const Lgssm model(p);
  const LearnedGaussianProposal q0(model);
  const std::size_t T = 10;
  const auto data = simulate_dataset(model, T, 24, RngStream(151, 0));
  const std::vector<std::vector<double>> train_data(data.begin(),
                                                    data.begin() + 20);
  const std::vector<std::vector<double>> valid_data(data.begin() + 20,
                                                    data.end());
  TrainConfig cfg;
  cfg.objective = ObjectiveKind::elbo;
  cfg.variant = GradientVariant::reparam_biased;
  cfg.adam.lr = 0.02;
  cfg.batch_size = 8;
  cfg.max_steps = 2000;
  cfg.validation_every = 200;
  cfg.patience = 8;
  cfg.validation_replicates = 16;
  cfg.train_model = false;
  cfg.seed = 3;
  const TrainResult res = train(model, q0, train_data, valid_data, cfg);

  double oracle = 0.0;
  for (const auto& x : valid_data) {
    oracle += kalman_log_marginal(p, x).log_marginal;
  }
  oracle /= static_cast<double>(valid_data.size());
  EstimatorSpec spec;
  spec.kind = ObjectiveKind::elbo;
  double bound = 0.0;
  for (std::size_t s = 0; s < valid_data.size(); ++s) {
    bound += estimate_bound(*res.model, *res.proposal, valid_data[s], spec,
                            2000, RngStream(152, s))
                 .mean;
  }
  bound /= static_cast<double>(valid_data.size());
  CHECK((oracle - bound) / static_cast<double>(T) < 0.05);
  // Model parameters were frozen.
  CHECK(res.model->params() == model.params());
}

TEST_CASE("iwae gradients match an independent per-particle composition") {
  // The never-policy pathwise gradient must agree with composing
  // single-particle chain gradients under the softmax of total weights.
  const Lgssm model(easy_params());
  LearnedGaussianProposal q(model);
  std::vector<double> phi = q.params();
  phi[LearnedGaussianProposal::kR0] = 0.2;
  phi[LearnedGaussianProposal::kC0] = -0.1;
  q.set_params(phi);
  const auto data = simulate_dataset(model, 6, 1, RngStream(153, 0));
  const std::vector<double>& x = data[0];
  const std::size_t N = 8;
  FilterOptions opts;
  opts.policy = ResamplingPolicy::never();
  opts.record = RecordLevel::full;
  const FilterRecord rec =
      run_particle_filter(model, q, x, N, opts, RngStream(154, 0));
  const GradientEstimate direct = grad_log_phat_reparam(rec, model, q, x);

  std::vector<double> totals(N, 0.0);
  std::vector<GradientEstimate> per_particle(N);
  for (std::size_t i = 0; i < N; ++i) {
    FilterRecord sub;
    sub.n_particles = 1;
    sub.T = rec.T;
    sub.policy = ResamplingPolicy::never();
    sub.level = RecordLevel::full;
    sub.steps.resize(rec.T);
    double cum = 0.0;
    for (std::size_t t = 0; t < rec.T; ++t) {
      const auto& s = rec.steps[t];
      auto& o = sub.steps[t];
      o.noise = {s.noise[i]};
      o.z = {s.z[i]};
      o.log_alpha = {s.log_alpha[i]};
      o.log_weight = {0.0};
      o.resampled = false;
      cum += s.log_alpha[i];
      o.log_phat_step = s.log_alpha[i];
      o.log_phat_cum = cum;
    }
    sub.log_phat = cum;
    totals[i] = cum;
    per_particle[i] = grad_log_phat_reparam(sub, model, q, x);
  }
  const double norm = log_sum_exp(totals);
  std::vector<double> composed(direct.d_theta.size() + direct.d_phi.size(),
                               0.0);
  for (std::size_t i = 0; i < N; ++i) {
    const double w = std::exp(totals[i] - norm);
    for (std::size_t k = 0; k < per_particle[i].d_theta.size(); ++k) {
      composed[k] += w * per_particle[i].d_theta[k];
    }
    for (std::size_t k = 0; k < per_particle[i].d_phi.size(); ++k) {
      composed[direct.d_theta.size() + k] += w * per_particle[i].d_phi[k];
    }
  }
  for (std::size_t k = 0; k < direct.d_theta.size(); ++k) {
    CHECK(std::abs(direct.d_theta[k] - composed[k]) < 1e-10);
  }
  for (std::size_t k = 0; k < direct.d_phi.size(); ++k) {
    CHECK(std::abs(direct.d_phi[k] -
                   composed[direct.d_theta.size() + k]) < 1e-10);
  }
}

TEST_CASE("early stopping with stale validations restores the best step") {
  const Lgssm model(easy_params());
  const LearnedGaussianProposal q(model);
  const auto data = simulate_dataset(model, 6, 8, RngStream(155, 0));
  const std::vector<std::vector<double>> train_data(data.begin(),
                                                    data.begin() + 6);
  const std::vector<std::vector<double>> valid_data(data.begin() + 6,
                                                    data.end());
  TrainConfig cfg;
  cfg.objective = ObjectiveKind::iwae;
  cfg.n_particles = 4;
  cfg.adam.lr = 0.0;  // nothing improves, so patience triggers immediately
  cfg.max_steps = 1000;
  cfg.validation_every = 10;
  cfg.patience = 2;
  cfg.seed = 5;
  const TrainResult res = train(model, q, train_data, valid_data, cfg);
  CHECK(res.history.status == TrainStatus::early_stopped);
  CHECK(res.history.steps.size() == 30);  // best at 10, stale at 20 and 30
  CHECK(res.history.best_step == 10);
}

TEST_CASE("divergence aborts with the history attached") {
  const Lgssm model(easy_params());
  const LearnedGaussianProposal q(model);
  const auto data = simulate_dataset(model, 6, 4, RngStream(156, 0));
  TrainConfig cfg;
  cfg.objective = ObjectiveKind::fivo;
  cfg.n_particles = 2;
  cfg.adam.lr = 1e6;  // blows the scale parameters up within a few steps
  cfg.max_steps = 200;
  cfg.validation_every = 1000;
  cfg.seed = 6;
  try {
    train(model, q, data, {}, cfg);
    FAIL("expected divergence");
  } catch (const train_diverged_error& e) {
    CHECK(e.history.status == TrainStatus::diverged);
    CHECK(!e.history.steps.empty());
  }
}

TEST_CASE("config validation rejects unbiased variants on adaptive policies") {
  TrainConfig cfg;
  cfg.variant = GradientVariant::reparam_full;
  cfg.policy = ResamplingPolicy::ess(0.5);
  CHECK_THROWS_AS(cfg.validate(), std::invalid_argument);
  cfg.policy = ResamplingPolicy::fixed({2, 4});
  CHECK_NOTHROW(cfg.validate());
}

TEST_CASE("training with the full gradient variant runs on a fixed schedule") {
  const Lgssm model(easy_params());
  const LearnedGaussianProposal q(model);
  const auto data = simulate_dataset(model, 8, 4, RngStream(157, 0));
  TrainConfig cfg;
  cfg.objective = ObjectiveKind::fivo;
  cfg.n_particles = 4;
  cfg.policy = ResamplingPolicy::fixed({4, 8});
  cfg.variant = GradientVariant::reparam_full;
  cfg.adam.lr = 1e-3;
  cfg.max_steps = 30;
  cfg.validation_every = 100;
  cfg.seed = 7;
  const TrainResult res = train(model, q, data, {}, cfg);
  CHECK(res.history.status == TrainStatus::completed);
  CHECK(res.history.steps.size() == 30);
  for (const auto& s : res.history.steps) {
    CHECK(s.resample_count > 0);
  }
}

TEST_CASE("lr grid search selects the best validation bound and reproduces") {
  const Lgssm model(easy_params());
  const LearnedGaussianProposal q(model);
  const auto data = simulate_dataset(model, 6, 10, RngStream(158, 0));
  const std::vector<std::vector<double>> train_data(data.begin(),
                                                    data.begin() + 8);
  const std::vector<std::vector<double>> valid_data(data.begin() + 8,
                                                    data.end());
  TrainConfig cfg;
  cfg.objective = ObjectiveKind::elbo;
  cfg.train_model = false;
  cfg.batch_size = 4;
  cfg.max_steps = 60;
  cfg.validation_every = 20;
  cfg.patience = 10;
  cfg.seed = 8;
  const std::vector<double> rates = {3e-2, 1e-3};
  const SweepResult a =
      lr_grid_search(model, q, train_data, valid_data, cfg, rates);
  CHECK(a.runs.size() == 2);
  double best = -1e300;
  std::size_t argmax = 0;
  for (std::size_t i = 0; i < a.runs.size(); ++i) {
    if (a.runs[i].history.best_validation > best) {
      best = a.runs[i].history.best_validation;
      argmax = i;
    }
  }
  CHECK(a.selected == argmax);
  const SweepResult b =
      lr_grid_search(model, q, train_data, valid_data, cfg, rates);
  CHECK(b.selected == a.selected);
  CHECK(b.runs[0].history.best_validation ==
        a.runs[0].history.best_validation);
}

TEST_SUITE_END();
