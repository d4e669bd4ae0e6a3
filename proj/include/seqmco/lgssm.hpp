#pragma once

#include "seqmco/model.hpp"

namespace seqmco {

// Linear-Gaussian state-space model, 1-D latent and observation:
//   z_1 ~ N(0, var_0),  z_t ~ N(a z_{t-1}, var_z),  x_t ~ N(c z_t, var_x).
struct LgssmParams {
  double a = 0.9;
  double c = 1.0;
  double var_z = 1.0;
  double var_x = 1.0;
  double var_0 = 1.0;

  void validate() const {
    if (!(var_z > 0.0) || !(var_x > 0.0) || !(var_0 > 0.0)) {
      throw std::domain_error("LgssmParams: variances must be positive");
    }
  }
};

class Lgssm final : public SequentialModel {
 public:
  // Parameter vector layout (scales as log standard deviations).
  enum ParamIndex { kA = 0, kC, kLogSz, kLogSx, kLogS0, kParamCount };

  explicit Lgssm(const LgssmParams& p);

  const LgssmParams& config() const { return cfg_; }

  std::unique_ptr<SequentialModel> clone() const override;
  std::string name() const override { return "lgssm"; }

  std::size_t param_count() const override { return kParamCount; }
  std::vector<double> params() const override;
  void set_params(std::span<const double> p) override;

  double log_joint_step(std::size_t t, std::span<const double> x,
                        std::span<const double> z) const override;
  Gaussian latent_prior(std::size_t t, std::span<const double> x,
                        std::span<const double> z) const override;
  double latent_prior_mean_dzprev(std::size_t t, std::span<const double> x,
                                  std::span<const double> z) const override;
  void joint_step_partials(std::size_t t, std::span<const double> x,
                           std::span<const double> z, std::span<double> d_theta,
                           double& d_zt, double& d_zprev) const override;
  std::pair<double, double> simulate_step(std::size_t t,
                                          std::span<const double> x,
                                          std::span<const double> z,
                                          RngStream& rng) const override;

 private:
  LgssmParams cfg_;
};

}  // namespace seqmco
