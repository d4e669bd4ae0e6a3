#pragma once

#include "seqmco/conjugate_model.hpp"
#include "seqmco/lgssm.hpp"
#include "seqmco/model.hpp"

namespace seqmco {

// Proposes from the model's latent transition prior. The prior parameters
// are copied at construction (no live link to the model being trained), so
// incremental weights reduce to the emission density as long as the two
// stay in sync.
class BootstrapProposal final : public Proposal {
 public:
  explicit BootstrapProposal(const SequentialModel& model)
      : model_(model.clone()) {}
  BootstrapProposal(const BootstrapProposal& other)
      : model_(other.model_->clone()) {}

  std::unique_ptr<Proposal> clone() const override {
    return std::make_unique<BootstrapProposal>(*this);
  }
  std::string name() const override { return "bootstrap"; }

  std::size_t param_count() const override { return 0; }
  std::vector<double> params() const override { return {}; }
  void set_params(std::span<const double> p) override {
    if (!p.empty()) {
      throw std::invalid_argument("BootstrapProposal has no parameters");
    }
  }

  Gaussian step(std::size_t t, std::span<const double> x,
                std::span<const double> z) const override {
    return model_->latent_prior(t, x, z);
  }

  bool has_partials() const override { return true; }
  void step_partials(std::size_t t, std::span<const double> x,
                     std::span<const double> z,
                     ProposalPartials& out) const override {
    out.dmean_dzprev = model_->latent_prior_mean_dzprev(t, x, z);
    out.dlogstd_dzprev = 0.0;
  }

 private:
  std::unique_ptr<SequentialModel> model_;
};

// Gaussian proposal with mean and log-std affine in (z_{t-1}, x_t), layered
// as residuals on a snapshot of the model prior:
//   mean    = prior.mean + r0 + r1 z_{t-1} + r2 x_t
//   log std = log prior.std + c0 + c1 z_{t-1} + c2 x_t
// At zero residuals this is exactly the bootstrap proposal.
class LearnedGaussianProposal final : public Proposal {
 public:
  enum ParamIndex { kR0 = 0, kR1, kR2, kC0, kC1, kC2, kParamCount };

  explicit LearnedGaussianProposal(const SequentialModel& base)
      : base_(base.clone()), phi_(kParamCount, 0.0) {}
  LearnedGaussianProposal(const LearnedGaussianProposal& other)
      : base_(other.base_->clone()), phi_(other.phi_) {}

  std::unique_ptr<Proposal> clone() const override {
    return std::make_unique<LearnedGaussianProposal>(*this);
  }
  std::string name() const override { return "learned"; }

  std::size_t param_count() const override { return kParamCount; }
  std::vector<double> params() const override { return phi_; }
  void set_params(std::span<const double> p) override {
    if (p.size() != kParamCount) {
      throw std::invalid_argument("LearnedGaussianProposal: wrong size");
    }
    phi_.assign(p.begin(), p.end());
  }

  Gaussian step(std::size_t t, std::span<const double> x,
                std::span<const double> z) const override;

  bool has_partials() const override { return true; }
  void step_partials(std::size_t t, std::span<const double> x,
                     std::span<const double> z,
                     ProposalPartials& out) const override;

 private:
  std::unique_ptr<SequentialModel> base_;
  std::vector<double> phi_;
};

// Exact one-step filtering conditional p(z_t | z_{t-1}, x_t) of an LGSSM
// (closed form by conjugacy). With this proposal the incremental weight no
// longer depends on the proposed z_t.
Gaussian optimal_filter_step(const LgssmParams& p, std::size_t t,
                             double z_prev, double x_t);

class OptimalFilterProposal final : public Proposal {
 public:
  explicit OptimalFilterProposal(const LgssmParams& p) : cfg_(p) {
    cfg_.validate();
  }

  std::unique_ptr<Proposal> clone() const override {
    return std::make_unique<OptimalFilterProposal>(*this);
  }
  std::string name() const override { return "optimal_filter"; }

  std::size_t param_count() const override { return 0; }
  std::vector<double> params() const override { return {}; }
  void set_params(std::span<const double> p) override {
    if (!p.empty()) {
      throw std::invalid_argument("OptimalFilterProposal has no parameters");
    }
  }

  Gaussian step(std::size_t t, std::span<const double> x,
                std::span<const double> z) const override {
    return optimal_filter_step(cfg_, t, t >= 2 ? z[t - 2] : 0.0, x[t - 1]);
  }

  bool has_partials() const override { return true; }
  void step_partials(std::size_t t, std::span<const double> x,
                     std::span<const double> z,
                     ProposalPartials& out) const override;

 private:
  LgssmParams cfg_;
};

// Quadratic-form summary of p(x_{t:T} | z_t) for an LGSSM, from the backward
// information recursion: log p(x_{t:T} | z_t) = -lambda z_t^2 / 2 + eta z_t + C.
struct BackwardStats {
  double lambda = 0.0;
  double eta = 0.0;
};

// stats[t-1] summarizes x_{t:T}; stats[T] is the zero suffix.
std::vector<BackwardStats> backward_information(const LgssmParams& p,
                                                std::span<const double> x);

// Exact p(z_t | z_{t-1}, x_{t:T}) for an LGSSM.
Gaussian smoothing_step(const LgssmParams& p, std::size_t t, double z_prev,
                        std::span<const double> x);

// Injects backward statistics of the future observations x_{t+1:T} into a
// base proposal's conditioning by precision addition. With the optimal
// filter as base this is the exact smoothing conditional. When the
// statistics are disabled the base proposal is returned untouched.
class SmoothingProposalWrapper final : public Proposal {
 public:
  SmoothingProposalWrapper(std::unique_ptr<Proposal> base,
                           const LgssmParams& p, bool use_future = true)
      : base_(std::move(base)), cfg_(p), use_future_(use_future) {
    cfg_.validate();
  }
  SmoothingProposalWrapper(const SmoothingProposalWrapper& other)
      : base_(other.base_->clone()),
        cfg_(other.cfg_),
        use_future_(other.use_future_) {}

  std::unique_ptr<Proposal> clone() const override {
    return std::make_unique<SmoothingProposalWrapper>(*this);
  }
  std::string name() const override { return "smoothing"; }

  std::size_t param_count() const override { return base_->param_count(); }
  std::vector<double> params() const override { return base_->params(); }
  void set_params(std::span<const double> p) override { base_->set_params(p); }

  Gaussian step(std::size_t t, std::span<const double> x,
                std::span<const double> z) const override;

 private:
  std::unique_ptr<Proposal> base_;
  LgssmParams cfg_;
  bool use_future_;
};

// Exact posterior conditionals p(z_t | z_{t-1}, x_{1:T}) of an LGSSM, usable
// both as a sharp proposal and as the posterior-trajectory sampler.
class LgssmPosteriorProposal final : public Proposal {
 public:
  explicit LgssmPosteriorProposal(const LgssmParams& p) : cfg_(p) {
    cfg_.validate();
  }

  std::unique_ptr<Proposal> clone() const override {
    return std::make_unique<LgssmPosteriorProposal>(*this);
  }
  std::string name() const override { return "posterior"; }

  std::size_t param_count() const override { return 0; }
  std::vector<double> params() const override { return {}; }
  void set_params(std::span<const double> p) override {
    if (!p.empty()) {
      throw std::invalid_argument("LgssmPosteriorProposal has no parameters");
    }
  }

  Gaussian step(std::size_t t, std::span<const double> x,
                std::span<const double> z) const override {
    return smoothing_step(cfg_, t, t >= 2 ? z[t - 2] : 0.0, x);
  }

  // y ~ p(z_{1:T} | x_{1:T}) by chaining the smoothing conditionals forward.
  std::vector<double> sample_trajectory(std::span<const double> x,
                                        RngStream& rng) const;

 private:
  LgssmParams cfg_;
};

// Exact posterior proposal for the conjugate independence model; by its
// independence structure the filtering and smoothing posteriors coincide.
class ConjugatePosteriorProposal final : public Proposal {
 public:
  explicit ConjugatePosteriorProposal(const ConjugateParams& p) : model_(p) {}

  std::unique_ptr<Proposal> clone() const override {
    return std::make_unique<ConjugatePosteriorProposal>(*this);
  }
  std::string name() const override { return "posterior"; }

  std::size_t param_count() const override { return 0; }
  std::vector<double> params() const override { return {}; }
  void set_params(std::span<const double> p) override {
    if (!p.empty()) {
      throw std::invalid_argument(
          "ConjugatePosteriorProposal has no parameters");
    }
  }

  Gaussian step(std::size_t t, std::span<const double> x,
                std::span<const double> z) const override {
    (void)z;
    return model_.step_posterior(t, x);
  }

  std::vector<double> sample_trajectory(std::span<const double> x,
                                        RngStream& rng) const;

 private:
  ConjugateModel model_;
};

}  // namespace seqmco
