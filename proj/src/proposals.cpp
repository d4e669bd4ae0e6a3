#include "seqmco/proposals.hpp"

#include <cmath>

namespace seqmco {

Gaussian LearnedGaussianProposal::step(std::size_t t, std::span<const double> x,
                                       std::span<const double> z) const {
  const Gaussian prior = base_->latent_prior(t, x, z);
  const double z_prev = t >= 2 ? z[t - 2] : 0.0;
  const double x_t = x[t - 1];
  const double mean =
      prior.mean + phi_[kR0] + phi_[kR1] * z_prev + phi_[kR2] * x_t;
  const double log_std = 0.5 * std::log(prior.var) + phi_[kC0] +
                         phi_[kC1] * z_prev + phi_[kC2] * x_t;
  const double s = std::exp(log_std);
  return {mean, s * s};
}

void LearnedGaussianProposal::step_partials(std::size_t t,
                                            std::span<const double> x,
                                            std::span<const double> z,
                                            ProposalPartials& out) const {
  const double z_prev = t >= 2 ? z[t - 2] : 0.0;
  const double x_t = x[t - 1];
  out.dmean_dphi[kR0] = 1.0;
  out.dmean_dphi[kR1] = z_prev;
  out.dmean_dphi[kR2] = x_t;
  out.dmean_dphi[kC0] = out.dmean_dphi[kC1] = out.dmean_dphi[kC2] = 0.0;
  out.dlogstd_dphi[kR0] = out.dlogstd_dphi[kR1] = out.dlogstd_dphi[kR2] = 0.0;
  out.dlogstd_dphi[kC0] = 1.0;
  out.dlogstd_dphi[kC1] = z_prev;
  out.dlogstd_dphi[kC2] = x_t;
  out.dmean_dzprev = base_->latent_prior_mean_dzprev(t, x, z) + phi_[kR1];
  out.dlogstd_dzprev = phi_[kC1];
}

Gaussian optimal_filter_step(const LgssmParams& p, std::size_t t,
                             double z_prev, double x_t) {
  const double prior_mean = t == 1 ? 0.0 : p.a * z_prev;
  const double prior_var = t == 1 ? p.var_0 : p.var_z;
  const double prec = 1.0 / prior_var + p.c * p.c / p.var_x;
  const double var = 1.0 / prec;
  const double mean = var * (prior_mean / prior_var + p.c * x_t / p.var_x);
  return {mean, var};
}

void OptimalFilterProposal::step_partials(std::size_t t,
                                          std::span<const double>,
                                          std::span<const double>,
                                          ProposalPartials& out) const {
  if (t == 1) {
    out.dmean_dzprev = 0.0;
  } else {
    const double prec = 1.0 / cfg_.var_z + cfg_.c * cfg_.c / cfg_.var_x;
    out.dmean_dzprev = cfg_.a / (cfg_.var_z * prec);
  }
  out.dlogstd_dzprev = 0.0;
}

std::vector<BackwardStats> backward_information(const LgssmParams& p,
                                                std::span<const double> x) {
  const std::size_t T = x.size();
  std::vector<BackwardStats> stats(T + 1);
  // stats[T] stays zero: no observations after T.
  for (std::size_t t = T; t >= 1; --t) {
    // Fold p(x_{t+1:T} | z_{t+1}) through the transition to get its
    // quadratic form in z_t, then add the emission at t.
    const BackwardStats& next = stats[t];
    const double denom = 1.0 + p.var_z * next.lambda;
    const double lam_future = p.a * p.a * next.lambda / denom;
    const double eta_future = p.a * next.eta / denom;
    stats[t - 1].lambda = p.c * p.c / p.var_x + lam_future;
    stats[t - 1].eta = p.c * x[t - 1] / p.var_x + eta_future;
  }
  return stats;
}

Gaussian smoothing_step(const LgssmParams& p, std::size_t t, double z_prev,
                        std::span<const double> x) {
  const auto stats = backward_information(p, x.subspan(t - 1));
  const double prior_mean = t == 1 ? 0.0 : p.a * z_prev;
  const double prior_var = t == 1 ? p.var_0 : p.var_z;
  const double prec = 1.0 / prior_var + stats[0].lambda;
  const double var = 1.0 / prec;
  const double mean = var * (prior_mean / prior_var + stats[0].eta);
  return {mean, var};
}

Gaussian SmoothingProposalWrapper::step(std::size_t t,
                                        std::span<const double> x,
                                        std::span<const double> z) const {
  const Gaussian base = base_->step(t, x, z);
  if (!use_future_ || t == x.size()) return base;
  // Quadratic form of p(x_{t+1:T} | z_t): one transition fold of the
  // backward statistics for x_{t+1:T} in z_{t+1}.
  const auto stats = backward_information(cfg_, x.subspan(t));
  const double denom = 1.0 + cfg_.var_z * stats[0].lambda;
  const double lam = cfg_.a * cfg_.a * stats[0].lambda / denom;
  const double eta = cfg_.a * stats[0].eta / denom;
  if (lam == 0.0 && eta == 0.0) return base;
  const double prec = 1.0 / base.var + lam;
  const double var = 1.0 / prec;
  return {var * (base.mean / base.var + eta), var};
}

std::vector<double> LgssmPosteriorProposal::sample_trajectory(
    std::span<const double> x, RngStream& rng) const {
  std::vector<double> y;
  y.reserve(x.size());
  for (std::size_t t = 1; t <= x.size(); ++t) {
    const Gaussian g = step(t, x, y);
    y.push_back(g.mean + g.std_dev() * rng.gaussian());
  }
  return y;
}

std::vector<double> ConjugatePosteriorProposal::sample_trajectory(
    std::span<const double> x, RngStream& rng) const {
  std::vector<double> y;
  y.reserve(x.size());
  for (std::size_t t = 1; t <= x.size(); ++t) {
    const Gaussian g = model_.step_posterior(t, x);
    y.push_back(g.mean + g.std_dev() * rng.gaussian());
  }
  return y;
}

}  // namespace seqmco
