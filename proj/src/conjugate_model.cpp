#include "seqmco/conjugate_model.hpp"

#include <cmath>

namespace seqmco {

ConjugateModel::ConjugateModel(const ConjugateParams& p) : cfg_(p) {
  cfg_.validate();
}

std::unique_ptr<SequentialModel> ConjugateModel::clone() const {
  return std::make_unique<ConjugateModel>(*this);
}

std::vector<double> ConjugateModel::params() const {
  return {cfg_.m0, cfg_.m1, 0.5 * std::log(cfg_.var_z),
          0.5 * std::log(cfg_.var_obs)};
}

void ConjugateModel::set_params(std::span<const double> p) {
  if (p.size() != kParamCount) {
    throw std::invalid_argument("ConjugateModel::set_params: wrong size");
  }
  cfg_.m0 = p[kM0];
  cfg_.m1 = p[kM1];
  cfg_.var_z = std::exp(2.0 * p[kLogSz]);
  cfg_.var_obs = std::exp(2.0 * p[kLogSobs]);
}

double ConjugateModel::log_joint_step(std::size_t t, std::span<const double> x,
                                      std::span<const double> z) const {
  const double z_t = z[t - 1];
  return gaussian_logpdf(z_t, prior_mean(t, x), cfg_.var_z) +
         gaussian_logpdf(x[t - 1], z_t, cfg_.var_obs);
}

Gaussian ConjugateModel::latent_prior(std::size_t t, std::span<const double> x,
                                      std::span<const double>) const {
  return {prior_mean(t, x), cfg_.var_z};
}

void ConjugateModel::joint_step_partials(std::size_t t,
                                         std::span<const double> x,
                                         std::span<const double> z,
                                         std::span<double> d_theta,
                                         double& d_zt, double& d_zprev) const {
  const double z_t = z[t - 1];
  const double x_t = x[t - 1];
  const double mu = prior_mean(t, x);

  const double d_mu = dlogpdf_dmean(z_t, mu, cfg_.var_z);
  const double d_emis_mean = dlogpdf_dmean(x_t, z_t, cfg_.var_obs);

  d_theta[kM0] = d_mu;
  d_theta[kM1] = t == 1 ? 0.0 : d_mu * x[t - 2];
  d_theta[kLogSz] = dlogpdf_dlogstd(z_t, mu, cfg_.var_z);
  d_theta[kLogSobs] = dlogpdf_dlogstd(x_t, z_t, cfg_.var_obs);

  d_zt = -d_mu + d_emis_mean;
  d_zprev = 0.0;
}

std::pair<double, double> ConjugateModel::simulate_step(
    std::size_t t, std::span<const double> x, std::span<const double>,
    RngStream& rng) const {
  const double z_t =
      prior_mean(t, x) + std::sqrt(cfg_.var_z) * rng.gaussian();
  const double x_t = z_t + std::sqrt(cfg_.var_obs) * rng.gaussian();
  return {z_t, x_t};
}

}  // namespace seqmco
