#pragma once

#include "seqmco/model.hpp"

namespace seqmco {

// Conjugate independence model:
//   z_t ~ N(mu_t, var_z) with mu_t = m0 + m1 * x_{t-1} (mu_1 = m0),
//   x_t ~ N(z_t, var_obs).
// The pair (z_t, x_t) depends on the history only through x_{1:t-1}, so
// p(z_{1:t-1} | x_{1:t}) = p(z_{1:t-1} | x_{1:t-1}): the regime in which a
// particle filter with the exact one-step posterior proposal produces the
// marginal likelihood with zero variance.
struct ConjugateParams {
  double m0 = 0.0;
  double m1 = 0.0;
  double var_z = 1.0;
  double var_obs = 1.0;

  void validate() const {
    if (!(var_z > 0.0) || !(var_obs > 0.0)) {
      throw std::domain_error("ConjugateParams: variances must be positive");
    }
  }
};

class ConjugateModel final : public SequentialModel {
 public:
  enum ParamIndex { kM0 = 0, kM1, kLogSz, kLogSobs, kParamCount };

  explicit ConjugateModel(const ConjugateParams& p);

  const ConjugateParams& config() const { return cfg_; }

  double prior_mean(std::size_t t, std::span<const double> x) const {
    return t == 1 ? cfg_.m0 : cfg_.m0 + cfg_.m1 * x[t - 2];
  }

  // p(x_t | x_{1:t-1}) = N(mu_t, var_z + var_obs), closed form by conjugacy.
  Gaussian step_marginal(std::size_t t, std::span<const double> x) const {
    return {prior_mean(t, x), cfg_.var_z + cfg_.var_obs};
  }

  // p(z_t | x_{1:t}) = p(z_t | x_{1:t}, z_{1:t-1}), the exact posterior.
  Gaussian step_posterior(std::size_t t, std::span<const double> x) const {
    const double mu = prior_mean(t, x);
    const double s = cfg_.var_z + cfg_.var_obs;
    return {(cfg_.var_obs * mu + cfg_.var_z * x[t - 1]) / s,
            cfg_.var_z * cfg_.var_obs / s};
  }

  std::unique_ptr<SequentialModel> clone() const override;
  std::string name() const override { return "conjugate"; }

  std::size_t param_count() const override { return kParamCount; }
  std::vector<double> params() const override;
  void set_params(std::span<const double> p) override;

  double log_joint_step(std::size_t t, std::span<const double> x,
                        std::span<const double> z) const override;
  Gaussian latent_prior(std::size_t t, std::span<const double> x,
                        std::span<const double> z) const override;
  double latent_prior_mean_dzprev(std::size_t, std::span<const double>,
                                  std::span<const double>) const override {
    return 0.0;
  }
  void joint_step_partials(std::size_t t, std::span<const double> x,
                           std::span<const double> z, std::span<double> d_theta,
                           double& d_zt, double& d_zprev) const override;
  std::pair<double, double> simulate_step(std::size_t t,
                                          std::span<const double> x,
                                          std::span<const double> z,
                                          RngStream& rng) const override;

 private:
  ConjugateParams cfg_;
};

}  // namespace seqmco
