#pragma once

#include <memory>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "seqmco/gaussian.hpp"
#include "seqmco/rng.hpp"

namespace seqmco {

// Sequential latent-variable model over 1-D latents and 1-D observations.
// The joint factors as a product of per-step conditionals
//   p(x_{1:T}, z_{1:T}) = prod_t p_t(x_t, z_t | x_{1:t-1}, z_{1:t-1}).
// z_hist spans are the latent trajectory up to and including the current
// step when evaluating densities. Steps are 1-based; implementations may
// only look at the last latent (Markov) or at none of them.
//
// Parameters are exposed as a flat vector; scale parameters are carried as
// log standard deviations so gradient steps cannot leave the domain.
class SequentialModel {
 public:
  virtual ~SequentialModel() = default;

  virtual std::unique_ptr<SequentialModel> clone() const = 0;
  virtual std::string name() const = 0;

  virtual std::size_t param_count() const = 0;
  virtual std::vector<double> params() const = 0;
  virtual void set_params(std::span<const double> p) = 0;

  // log p_t(x_t, z_t | x_{1:t-1}, z_{1:t-1}); z covers steps 1..t.
  virtual double log_joint_step(std::size_t t, std::span<const double> x,
                                std::span<const double> z) const = 0;

  // Latent transition prior p(z_t | x_{1:t-1}, z_{1:t-1}); z covers 1..t-1.
  virtual Gaussian latent_prior(std::size_t t, std::span<const double> x,
                                std::span<const double> z) const = 0;

  // d latent_prior.mean / d z_{t-1}, for proposal families built on the
  // prior. Zero when the prior ignores the previous latent.
  virtual double latent_prior_mean_dzprev(std::size_t t,
                                          std::span<const double> x,
                                          std::span<const double> z) const = 0;

  // Analytic partials of log_joint_step. d_theta must have param_count()
  // entries and is overwritten; d_zt and d_zprev receive the partials with
  // respect to z_t and z_{t-1}.
  virtual void joint_step_partials(std::size_t t, std::span<const double> x,
                                   std::span<const double> z,
                                   std::span<double> d_theta, double& d_zt,
                                   double& d_zprev) const = 0;

  // Draw (z_t, x_t) given history; used for synthetic data generation.
  virtual std::pair<double, double> simulate_step(
      std::size_t t, std::span<const double> x, std::span<const double> z,
      RngStream& rng) const = 0;
};

// Partial derivatives of one proposal step, written into caller buffers.
struct ProposalPartials {
  std::span<double> dmean_dphi;     // param_count entries
  std::span<double> dlogstd_dphi;   // param_count entries
  double dmean_dzprev = 0.0;
  double dlogstd_dzprev = 0.0;
};

// Factored Gaussian proposal q(z_{1:T} | x_{1:T}) = prod_t q_t, with
// q_t(z_t | x_{1:t}, z_{1:t-1}) = N(step(t).mean, step(t).var). Proposals
// own their parameters; families derived from a model snapshot copy the
// relevant values at construction and hold no live link.
class Proposal {
 public:
  virtual ~Proposal() = default;

  virtual std::unique_ptr<Proposal> clone() const = 0;
  virtual std::string name() const = 0;

  virtual std::size_t param_count() const = 0;
  virtual std::vector<double> params() const = 0;
  virtual void set_params(std::span<const double> p) = 0;

  // Conditional for step t; z covers steps 1..t-1. May read future
  // observations (smoothing families read x_{t:T}).
  virtual Gaussian step(std::size_t t, std::span<const double> x,
                        std::span<const double> z) const = 0;

  virtual bool has_partials() const { return false; }
  virtual void step_partials(std::size_t t, std::span<const double> x,
                             std::span<const double> z,
                             ProposalPartials& out) const {
    (void)t;
    (void)x;
    (void)z;
    (void)out;
    throw std::logic_error(name() + ": analytic partials not available");
  }

  double log_density(std::size_t t, std::span<const double> x,
                     std::span<const double> z, double z_t) const {
    return gaussian_logpdf(z_t, step(t, x, z));
  }

  double reparameterize(std::size_t t, std::span<const double> x,
                        std::span<const double> z, double noise) const {
    const Gaussian g = step(t, x, z);
    return gaussian_reparameterize(g.mean, g.std_dev(), noise);
  }
};

// log alpha_t = log p_t(x_t, z_t | past) - log q_t(z_t | x_{1:t}, past);
// the incremental importance weight of one particle extension. z covers
// steps 1..t. A z_t outside q's support yields -inf, not an error.
double log_alpha(const SequentialModel& model, const Proposal& proposal,
                 std::size_t t, std::span<const double> x,
                 std::span<const double> z);

// Generates a synthetic dataset of `count` sequences of length T.
std::vector<std::vector<double>> simulate_dataset(const SequentialModel& model,
                                                  std::size_t T,
                                                  std::size_t count,
                                                  RngStream rng);

}  // namespace seqmco
