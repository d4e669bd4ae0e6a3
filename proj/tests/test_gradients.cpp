#include <doctest.h>

#include <cmath>

#include "seqmco/gradients.hpp"
#include "seqmco/kalman.hpp"
#include "seqmco/lgssm.hpp"
#include "seqmco/proposals.hpp"
#include "seqmco/replicate.hpp"

using namespace seqmco;

namespace {

LgssmParams test_params() {
  LgssmParams p;
  p.a = 0.7;
  p.c = 1.1;
  p.var_z = 0.9;
  p.var_x = 1.1;
  p.var_0 = 0.9;
  return p;
}

LearnedGaussianProposal offset_proposal(const SequentialModel& model) {
  LearnedGaussianProposal q(model);
  std::vector<double> phi = q.params();
  phi[LearnedGaussianProposal::kR0] = 0.15;
  phi[LearnedGaussianProposal::kR1] = -0.1;
  phi[LearnedGaussianProposal::kR2] = 0.25;
  phi[LearnedGaussianProposal::kC0] = -0.2;
  phi[LearnedGaussianProposal::kC1] = 0.05;
  phi[LearnedGaussianProposal::kC2] = -0.05;
  q.set_params(phi);
  return q;
}

std::vector<double> packed(const GradientEstimate& g) {
  std::vector<double> out = g.d_theta;
  out.insert(out.end(), g.d_phi.begin(), g.d_phi.end());
  return out;
}

}  // namespace

TEST_SUITE_BEGIN("gradients");

TEST_CASE("pathwise gradient matches forced-replay finite differences") {
  const Lgssm model(test_params());
  const LearnedGaussianProposal q = offset_proposal(model);
  const auto data = simulate_dataset(model, 4, 1, RngStream(70, 0));
  FilterOptions opts;
  opts.policy = ResamplingPolicy::ess(0.8);
  for (int s = 0; s < 30; ++s) {
    const PerSeedFdResult res = per_seed_fd_check(model, q, data[0], 3, opts,
                                                  1e-5, RngStream(71, s));
    CHECK(res.max_rel_error < 1e-5);
  }
}

TEST_CASE("model-only gradients with frozen proposals match replay FD") {
  // Bootstrap and optimal-filter proposals carry no trainable parameters;
  // the pathwise gradient is then purely the explicit model dependence.
  const LgssmParams p = test_params();
  const Lgssm model(p);
  const auto data = simulate_dataset(model, 5, 1, RngStream(96, 0));
  FilterOptions opts;
  opts.policy = ResamplingPolicy::ess(0.7);
  const BootstrapProposal boot(model);
  const OptimalFilterProposal opt(p);
  for (int s = 0; s < 10; ++s) {
    CHECK(per_seed_fd_check(model, boot, data[0], 4, opts, 1e-5,
                            RngStream(97, s))
              .max_rel_error < 1e-5);
    CHECK(per_seed_fd_check(model, opt, data[0], 4, opts, 1e-5,
                            RngStream(98, s))
              .max_rel_error < 1e-5);
  }
}

TEST_CASE("single-particle record reduces to the elbo gradient") {
  const Lgssm model(test_params());
  const LearnedGaussianProposal q = offset_proposal(model);
  const auto data = simulate_dataset(model, 5, 1, RngStream(72, 0));
  FilterOptions opts;
  opts.policy = ResamplingPolicy::never();
  const PerSeedFdResult res =
      per_seed_fd_check(model, q, data[0], 1, opts, 1e-5, RngStream(73, 0));
  CHECK(res.max_rel_error < 1e-6);
}

TEST_CASE("never policy removes the resampling terms entirely") {
  const Lgssm model(test_params());
  const LearnedGaussianProposal q = offset_proposal(model);
  const auto data = simulate_dataset(model, 6, 1, RngStream(74, 0));
  FilterOptions opts;
  opts.policy = ResamplingPolicy::never();
  opts.record = RecordLevel::full;
  const FilterRecord rec =
      run_particle_filter(model, q, data[0], 4, opts, RngStream(75, 0));
  const GradientEstimate full = grad_fivo_full(rec, model, q, data[0]);
  const GradientEstimate biased = grad_log_phat_reparam(rec, model, q, data[0]);
  CHECK(packed(full) == packed(biased));
}

TEST_CASE("full gradient is exactly pathwise plus resampling terms") {
  const Lgssm model(test_params());
  const LearnedGaussianProposal q = offset_proposal(model);
  const auto data = simulate_dataset(model, 8, 1, RngStream(76, 0));
  FilterOptions opts;
  opts.policy = ResamplingPolicy::fixed({3, 6, 8});
  opts.record = RecordLevel::full;
  for (int s = 0; s < 20; ++s) {
    const FilterRecord rec =
        run_particle_filter(model, q, data[0], 4, opts, RngStream(77, s));
    const GradientEstimate full = grad_fivo_full(rec, model, q, data[0]);
    const GradientEstimate biased =
        grad_log_phat_reparam(rec, model, q, data[0]);
    const GradientBreakdown parts = gradient_breakdown(
        rec, model, q, data[0], GradientVariant::reparam_full);
    const auto f = packed(full);
    const auto b = packed(biased);
    const auto r = packed(parts.resampling);
    for (std::size_t k = 0; k < f.size(); ++k) {
      CHECK(std::abs(f[k] - b[k] - r[k]) < 1e-12);
    }
  }
}

TEST_CASE("unbiased variants refuse adaptive records") {
  const Lgssm model(test_params());
  const LearnedGaussianProposal q = offset_proposal(model);
  const auto data = simulate_dataset(model, 5, 1, RngStream(78, 0));
  FilterOptions opts;
  opts.policy = ResamplingPolicy::ess(0.5);
  opts.record = RecordLevel::full;
  const FilterRecord rec =
      run_particle_filter(model, q, data[0], 4, opts, RngStream(79, 0));
  CHECK_THROWS_AS(grad_fivo_full(rec, model, q, data[0]),
                  std::invalid_argument);
  CHECK_THROWS_AS(grad_score_function(rec, model, q, data[0]),
                  std::invalid_argument);
  CHECK_NOTHROW(grad_log_phat_reparam(rec, model, q, data[0]));
}

TEST_CASE("proposals without partials are rejected") {
  const LgssmParams p = test_params();
  const Lgssm model(p);
  SmoothingProposalWrapper smooth(std::make_unique<OptimalFilterProposal>(p),
                                  p);
  const auto data = simulate_dataset(model, 4, 1, RngStream(80, 0));
  FilterOptions opts;
  opts.policy = ResamplingPolicy::never();
  opts.record = RecordLevel::full;
  const FilterRecord rec =
      run_particle_filter(model, smooth, data[0], 2, opts, RngStream(81, 0));
  CHECK_THROWS_AS(grad_log_phat_reparam(rec, model, smooth, data[0]),
                  std::invalid_argument);
}

TEST_CASE("score variant with a parameter-free proposal is the conditional "
          "term") {
  const Lgssm model(test_params());
  const BootstrapProposal q(model);
  const auto data = simulate_dataset(model, 5, 1, RngStream(82, 0));
  FilterOptions opts;
  opts.policy = ResamplingPolicy::never();
  opts.record = RecordLevel::full;
  const FilterRecord rec =
      run_particle_filter(model, q, data[0], 4, opts, RngStream(83, 0));
  const GradientEstimate score = grad_score_function(rec, model, q, data[0]);
  const GradientBreakdown parts = gradient_breakdown(
      rec, model, q, data[0], GradientVariant::score_function);
  CHECK(score.d_phi.empty());
  CHECK(packed(score) == packed(parts.base));
  for (double v : packed(parts.resampling)) CHECK(v == 0.0);
}

TEST_CASE("score and full variants agree in expectation") {
  const Lgssm model(test_params());
  const LearnedGaussianProposal q = offset_proposal(model);
  const auto data = simulate_dataset(model, 3, 1, RngStream(84, 0));
  const std::vector<double>& x = data[0];
  FilterOptions opts;
  opts.policy = ResamplingPolicy::fixed({2, 3});
  const std::size_t R = 60000;
  const GradientStats full = estimate_gradient(
      model, q, x, 2, opts, GradientVariant::reparam_full, R, RngStream(85, 0));
  const GradientStats score =
      estimate_gradient(model, q, x, 2, opts, GradientVariant::score_function,
                        R, RngStream(85, 1));
  for (std::size_t k = 0; k < full.mean_theta.size(); ++k) {
    const double se = std::sqrt(full.se_theta[k] * full.se_theta[k] +
                                score.se_theta[k] * score.se_theta[k]);
    CHECK(std::abs(full.mean_theta[k] - score.mean_theta[k]) <= 3.0 * se);
  }
  for (std::size_t k = 0; k < full.mean_phi.size(); ++k) {
    const double se = std::sqrt(full.se_phi[k] * full.se_phi[k] +
                                score.se_phi[k] * score.se_phi[k]);
    CHECK(std::abs(full.mean_phi[k] - score.mean_phi[k]) <= 3.0 * se);
  }
}

TEST_CASE("dropping the resampling terms biases the mean gradient") {
  const Lgssm model(test_params());
  const LearnedGaussianProposal q = offset_proposal(model);
  const auto data = simulate_dataset(model, 4, 1, RngStream(86, 0));
  const std::vector<double>& x = data[0];
  FilterOptions opts;
  opts.policy = ResamplingPolicy::fixed({2});
  const std::size_t R = 200000;
  const GradientStats full = estimate_gradient(
      model, q, x, 2, opts, GradientVariant::reparam_full, R, RngStream(87, 0));
  const GradientStats biased =
      estimate_gradient(model, q, x, 2, opts, GradientVariant::reparam_biased,
                        R, RngStream(87, 0));
  double max_z = 0.0;
  for (std::size_t k = 0; k < full.mean_phi.size(); ++k) {
    const double se = std::sqrt(full.se_phi[k] * full.se_phi[k] +
                                biased.se_phi[k] * biased.se_phi[k]);
    max_z = std::max(max_z,
                     std::abs(full.mean_phi[k] - biased.mean_phi[k]) / se);
  }
  for (std::size_t k = 0; k < full.mean_theta.size(); ++k) {
    const double se = std::sqrt(full.se_theta[k] * full.se_theta[k] +
                                biased.se_theta[k] * biased.se_theta[k]);
    max_z = std::max(max_z,
                     std::abs(full.mean_theta[k] - biased.mean_theta[k]) / se);
  }
  CHECK(max_z > 3.0);
}

TEST_CASE("score baseline keeps the mean and cuts the variance") {
  const Lgssm model(test_params());
  const LearnedGaussianProposal q = offset_proposal(model);
  const auto data = simulate_dataset(model, 4, 1, RngStream(88, 0));
  const std::vector<double>& x = data[0];
  FilterOptions opts;
  opts.policy = ResamplingPolicy::fixed({2, 4});
  opts.record = RecordLevel::full;

  const std::size_t R = 40000;
  const std::size_t nphi = q.param_count();
  std::vector<double> plain_sum(nphi, 0.0), plain_sq(nphi, 0.0);
  std::vector<double> based_sum(nphi, 0.0), based_sq(nphi, 0.0);
  ScoreBaseline baseline;
  RngStream rng(89, 0);
  for (std::size_t r = 0; r < R; ++r) {
    const FilterRecord rec =
        run_particle_filter(model, q, x, 2, opts, rng.substream(r));
    const GradientEstimate plain =
        grad_score_function(rec, model, q, x, nullptr);
    const GradientEstimate based =
        grad_score_function(rec, model, q, x, &baseline);
    for (std::size_t k = 0; k < nphi; ++k) {
      plain_sum[k] += plain.d_phi[k];
      plain_sq[k] += plain.d_phi[k] * plain.d_phi[k];
      based_sum[k] += based.d_phi[k];
      based_sq[k] += based.d_phi[k] * based.d_phi[k];
    }
  }
  double plain_var = 0.0, based_var = 0.0;
  for (std::size_t k = 0; k < nphi; ++k) {
    const double pm = plain_sum[k] / R, bm = based_sum[k] / R;
    plain_var += plain_sq[k] / R - pm * pm;
    based_var += based_sq[k] / R - bm * bm;
    const double se = std::sqrt((plain_sq[k] / R - pm * pm) / R +
                                (based_sq[k] / R - bm * bm) / R);
    CHECK(std::abs(pm - bm) <= 4.0 * se);
  }
  CHECK(based_var < plain_var);
}

TEST_CASE("fd-of-expectation agrees for the full variant on a fixed schedule") {
  const Lgssm model(test_params());
  const LearnedGaussianProposal q = offset_proposal(model);
  const auto data = simulate_dataset(model, 3, 1, RngStream(90, 0));
  FilterOptions opts;
  opts.policy = ResamplingPolicy::fixed({2, 3});
  FdExpectationConfig cfg;
  cfg.replicates = 30000;
  cfg.step = 1e-2;
  const FdReport report =
      finite_difference_check(model, q, data[0], 2, opts,
                              GradientVariant::reparam_full, cfg,
                              RngStream(91, 0));
  CHECK(report.rows.size() == model.param_count() + q.param_count());
  CHECK(report.max_abs_z() < 3.5);
}

TEST_CASE("elbo gradient vanishes at the exact posterior") {
  // a = 0 with var_0 = var_z makes the exact posterior representable in the
  // learned affine family; the bound is tight there, so the phi-gradient
  // has mean zero.
  LgssmParams p;
  p.a = 0.0;
  p.c = 1.2;
  p.var_z = 0.8;
  p.var_x = 1.1;
  p.var_0 = 0.8;
  const Lgssm model(p);
  LearnedGaussianProposal q(model);
  const double post_var = 1.0 / (1.0 / p.var_z + p.c * p.c / p.var_x);
  std::vector<double> phi(q.param_count(), 0.0);
  phi[LearnedGaussianProposal::kR2] = post_var * p.c / p.var_x;
  phi[LearnedGaussianProposal::kC0] = 0.5 * std::log(post_var / p.var_z);
  q.set_params(phi);

  const auto data = simulate_dataset(model, 5, 1, RngStream(92, 0));
  FilterOptions opts;
  opts.policy = ResamplingPolicy::never();
  const GradientStats stats =
      estimate_gradient(model, q, data[0], 1, opts,
                        GradientVariant::reparam_biased, 20000, RngStream(93, 0));
  for (std::size_t k = 0; k < stats.mean_phi.size(); ++k) {
    CHECK(std::abs(stats.mean_phi[k]) <= 3.0 * stats.se_phi[k] + 1e-10);
  }
}

TEST_CASE("central differences are exact on a deterministic quadratic") {
  const std::vector<double> at = {0.3, -1.2, 2.0};
  auto f = [](std::span<const double> p) {
    double v = 0.0;
    for (std::size_t k = 0; k < p.size(); ++k) {
      const double d = p[k] - static_cast<double>(k);
      v -= d * d;
    }
    return v;
  };
  const std::vector<double> grad = central_difference(f, at, 1e-4);
  for (std::size_t k = 0; k < at.size(); ++k) {
    CHECK(std::abs(grad[k] - (-2.0 * (at[k] - double(k)))) < 1e-8);
  }
  CHECK_THROWS_AS(central_difference(f, at, 0.0), std::invalid_argument);
}

TEST_CASE("gradient stats report per-coordinate variances") {
  const Lgssm model(test_params());
  const LearnedGaussianProposal q = offset_proposal(model);
  const auto data = simulate_dataset(model, 4, 1, RngStream(94, 0));
  FilterOptions opts;
  opts.policy = ResamplingPolicy::never();
  const GradientStats stats =
      estimate_gradient(model, q, data[0], 4, opts,
                        GradientVariant::reparam_biased, 2000, RngStream(95, 0));
  CHECK(stats.replicates == 2000);
  CHECK(stats.total_variance > 0.0);
  CHECK(stats.var_theta.size() == model.param_count());
  CHECK(stats.var_phi.size() == q.param_count());
}

TEST_SUITE_END();
