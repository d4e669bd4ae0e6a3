#include "seqmco/nonlinear_ssm.hpp"

#include <cmath>

namespace seqmco {

NonlinearSsm::NonlinearSsm(const LgssmParams& p) : cfg_(p) { cfg_.validate(); }

std::unique_ptr<SequentialModel> NonlinearSsm::clone() const {
  return std::make_unique<NonlinearSsm>(*this);
}

std::vector<double> NonlinearSsm::params() const {
  return {cfg_.a, cfg_.c, 0.5 * std::log(cfg_.var_z), 0.5 * std::log(cfg_.var_x),
          0.5 * std::log(cfg_.var_0)};
}

void NonlinearSsm::set_params(std::span<const double> p) {
  if (p.size() != kParamCount) {
    throw std::invalid_argument("NonlinearSsm::set_params: wrong size");
  }
  cfg_.a = p[kA];
  cfg_.c = p[kC];
  cfg_.var_z = std::exp(2.0 * p[kLogSz]);
  cfg_.var_x = std::exp(2.0 * p[kLogSx]);
  cfg_.var_0 = std::exp(2.0 * p[kLogS0]);
}

double NonlinearSsm::log_joint_step(std::size_t t, std::span<const double> x,
                                    std::span<const double> z) const {
  const double z_t = z[t - 1];
  const Gaussian prior = latent_prior(t, x, z.subspan(0, t - 1));
  return gaussian_logpdf(z_t, prior) +
         gaussian_logpdf(x[t - 1], cfg_.c * z_t, cfg_.var_x);
}

Gaussian NonlinearSsm::latent_prior(std::size_t t, std::span<const double>,
                                    std::span<const double> z) const {
  if (t == 1) return {0.0, cfg_.var_0};
  return {cfg_.a * std::tanh(z[t - 2]), cfg_.var_z};
}

double NonlinearSsm::latent_prior_mean_dzprev(std::size_t t,
                                              std::span<const double>,
                                              std::span<const double> z) const {
  if (t == 1) return 0.0;
  const double th = std::tanh(z[t - 2]);
  return cfg_.a * (1.0 - th * th);
}

void NonlinearSsm::joint_step_partials(std::size_t t, std::span<const double> x,
                                       std::span<const double> z,
                                       std::span<double> d_theta, double& d_zt,
                                       double& d_zprev) const {
  const double z_t = z[t - 1];
  const double x_t = x[t - 1];
  const double th = t >= 2 ? std::tanh(z[t - 2]) : 0.0;
  const double prior_mean = t == 1 ? 0.0 : cfg_.a * th;
  const double prior_var = t == 1 ? cfg_.var_0 : cfg_.var_z;
  const double emis_mean = cfg_.c * z_t;

  const double d_prior_mean = dlogpdf_dmean(z_t, prior_mean, prior_var);
  const double d_emis_mean = dlogpdf_dmean(x_t, emis_mean, cfg_.var_x);

  d_theta[kA] = t == 1 ? 0.0 : d_prior_mean * th;
  d_theta[kC] = d_emis_mean * z_t;
  d_theta[kLogSz] = t == 1 ? 0.0 : dlogpdf_dlogstd(z_t, prior_mean, prior_var);
  d_theta[kLogSx] = dlogpdf_dlogstd(x_t, emis_mean, cfg_.var_x);
  d_theta[kLogS0] = t == 1 ? dlogpdf_dlogstd(z_t, prior_mean, prior_var) : 0.0;

  d_zt = -d_prior_mean + d_emis_mean * cfg_.c;
  d_zprev = t == 1 ? 0.0 : d_prior_mean * cfg_.a * (1.0 - th * th);
}

std::pair<double, double> NonlinearSsm::simulate_step(std::size_t t,
                                                      std::span<const double> x,
                                                      std::span<const double> z,
                                                      RngStream& rng) const {
  const Gaussian prior = latent_prior(t, x, z);
  const double z_t = prior.mean + prior.std_dev() * rng.gaussian();
  const double x_t = cfg_.c * z_t + std::sqrt(cfg_.var_x) * rng.gaussian();
  return {z_t, x_t};
}

}  // namespace seqmco
