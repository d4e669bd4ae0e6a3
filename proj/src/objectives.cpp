#include "seqmco/objectives.hpp"

#include <algorithm>
#include <cmath>
#include <set>

#include "seqmco/replicate.hpp"

namespace seqmco {

std::string to_string(ObjectiveKind kind) {
  switch (kind) {
    case ObjectiveKind::elbo: return "elbo";
    case ObjectiveKind::iwae: return "iwae";
    case ObjectiveKind::fivo: return "fivo";
    case ObjectiveKind::ais: return "ais";
    case ObjectiveKind::mis: return "mis";
  }
  return "?";
}

ObjectiveKind objective_from_string(const std::string& name) {
  if (name == "elbo") return ObjectiveKind::elbo;
  if (name == "iwae") return ObjectiveKind::iwae;
  if (name == "fivo") return ObjectiveKind::fivo;
  if (name == "ais") return ObjectiveKind::ais;
  if (name == "mis") return ObjectiveKind::mis;
  throw std::invalid_argument("unknown objective: " + name);
}

double elbo_sample(const SequentialModel& model, const Proposal& proposal,
                   std::span<const double> x, RngStream rng) {
  // Mirrors the N = 1 filter path, including its stream layout.
  RngStream noise = rng.substream(1);
  std::vector<double> z;
  z.reserve(x.size());
  double total = 0.0;
  for (std::size_t t = 1; t <= x.size(); ++t) {
    const Gaussian g = proposal.step(t, x, z);
    const double z_t = g.mean + std::sqrt(g.var) * noise.gaussian();
    z.push_back(z_t);
    total += model.log_joint_step(t, x, z) - gaussian_logpdf(z_t, g);
  }
  return total;
}

double iwae_estimate(const SequentialModel& model, const Proposal& proposal,
                     std::span<const double> x, std::size_t n_particles,
                     RngStream rng) {
  FilterOptions opts;
  opts.policy = ResamplingPolicy::never();
  return run_particle_filter(model, proposal, x, n_particles, opts, rng)
      .log_phat;
}

double fivo_estimate(const SequentialModel& model, const Proposal& proposal,
                     std::span<const double> x, std::size_t n_particles,
                     const FilterOptions& opts, RngStream rng) {
  return run_particle_filter(model, proposal, x, n_particles, opts, rng)
      .log_phat;
}

AisSchedule AisSchedule::linear(std::size_t n, double rw_std,
                                std::size_t mh_sweeps) {
  if (n == 0) throw std::invalid_argument("AisSchedule: n must be >= 1");
  AisSchedule s;
  s.betas.resize(n + 1);
  for (std::size_t i = 0; i <= n; ++i) {
    s.betas[i] = static_cast<double>(i) / static_cast<double>(n);
  }
  s.rw_std = rw_std;
  s.mh_sweeps = mh_sweeps;
  return s;
}

void AisSchedule::validate() const {
  if (betas.size() < 2 || betas.front() != 0.0 || betas.back() != 1.0) {
    throw std::invalid_argument("AisSchedule: endpoints must be 0 and 1");
  }
  for (std::size_t i = 1; i < betas.size(); ++i) {
    if (betas[i] < betas[i - 1] || betas[i] < 0.0 || betas[i] > 1.0) {
      throw std::invalid_argument("AisSchedule: betas must be nondecreasing in [0,1]");
    }
  }
  if (!(rw_std > 0.0)) {
    throw std::invalid_argument("AisSchedule: rw_std must be positive");
  }
}

LatentTarget make_latent_target(const SequentialModel& model,
                                const Proposal& proposal,
                                std::span<const double> x) {
  LatentTarget target;
  target.dim = x.size();
  // The adapter copies the model/proposal so the target stays valid on its own.
  std::shared_ptr<SequentialModel> m = model.clone();
  std::shared_ptr<Proposal> q = proposal.clone();
  std::vector<double> xs(x.begin(), x.end());
  target.log_joint = [m, xs](std::span<const double> z) {
    double total = 0.0;
    for (std::size_t t = 1; t <= xs.size(); ++t) {
      total += m->log_joint_step(t, xs, z.subspan(0, t));
    }
    return total;
  };
  target.log_q = [q, xs](std::span<const double> z) {
    double total = 0.0;
    for (std::size_t t = 1; t <= xs.size(); ++t) {
      total += q->log_density(t, xs, z.subspan(0, t - 1), z[t - 1]);
    }
    return total;
  };
  target.sample_q = [q, xs](RngStream& rng) {
    std::vector<double> z;
    z.reserve(xs.size());
    for (std::size_t t = 1; t <= xs.size(); ++t) {
      const Gaussian g = q->step(t, xs, z);
      z.push_back(g.mean + std::sqrt(g.var) * rng.gaussian());
    }
    return z;
  };
  return target;
}

double ais_estimate(const LatentTarget& target, const AisSchedule& schedule,
                    RngStream rng, AisDiagnostics* diag) {
  schedule.validate();
  const std::size_t n = schedule.n_temperatures();
  AisDiagnostics local;
  AisDiagnostics& d = diag ? *diag : local;

  std::vector<double> z = target.sample_q(rng);
  double log_ratio = target.log_joint(z) - target.log_q(z);
  double estimate = (schedule.betas[1] - schedule.betas[0]) * log_ratio;

  std::vector<double> z_prop;
  for (std::size_t i = 2; i <= n; ++i) {
    const double beta = schedule.betas[i - 1];
    auto log_gamma = [&](std::span<const double> v) {
      return (1.0 - beta) * target.log_q(v) + beta * target.log_joint(v);
    };
    double current = log_gamma(z);
    for (std::size_t sweep = 0; sweep < schedule.mh_sweeps; ++sweep) {
      for (std::size_t dcoord = 0; dcoord < target.dim; ++dcoord) {
        z_prop = z;
        z_prop[dcoord] += schedule.rw_std * rng.gaussian();
        const double proposed = log_gamma(z_prop);
        ++d.proposals;
        if (std::log(rng.uniform() + 1e-300) < proposed - current) {
          z.swap(z_prop);
          current = proposed;
          ++d.accepts;
        }
      }
    }
    log_ratio = target.log_joint(z) - target.log_q(z);
    estimate += (schedule.betas[i] - schedule.betas[i - 1]) * log_ratio;
  }
  d.zero_acceptance_warning = d.proposals > 0 && d.accepts == 0;
  return estimate;
}

void MisMixture::validate() const {
  if (components.empty() || components.size() != weights.size()) {
    throw std::invalid_argument("MisMixture: components/weights mismatch");
  }
  double sum = 0.0;
  for (double w : weights) {
    if (!(w >= 0.0)) throw std::invalid_argument("MisMixture: negative weight");
    sum += w;
  }
  if (std::abs(sum - 1.0) > 1e-12) {
    throw std::invalid_argument("MisMixture: weights must sum to 1");
  }
}

MisComponent make_mis_component(const SequentialModel& model,
                                const Proposal& proposal,
                                std::span<const double> x) {
  LatentTarget t = make_latent_target(model, proposal, x);
  return {t.log_q, t.sample_q};
}

double mis_estimate(
    const std::function<double(std::span<const double>)>& log_joint,
    const MisMixture& mixture, RngStream rng) {
  mixture.validate();
  const std::size_t n = mixture.components.size();
  std::vector<double> terms(n), denom(n);
  for (std::size_t i = 0; i < n; ++i) {
    RngStream comp_rng = rng.substream(i);
    const std::vector<double> z = mixture.components[i].sample(comp_rng);
    for (std::size_t j = 0; j < n; ++j) {
      denom[j] = mixture.weights[j] == 0.0
                     ? kLogZero
                     : std::log(mixture.weights[j]) +
                           mixture.components[j].log_density(z);
    }
    const double log_denom = log_sum_exp(denom);
    if (mixture.weights[i] == 0.0 || log_denom == kLogZero) {
      terms[i] = kLogZero;
      continue;
    }
    terms[i] = std::log(mixture.weights[i]) + log_joint(z) - log_denom;
  }
  return log_sum_exp(terms);
}

double draw_objective(const SequentialModel& model, const Proposal& proposal,
                      std::span<const double> x, const EstimatorSpec& spec,
                      RngStream rng) {
  switch (spec.kind) {
    case ObjectiveKind::elbo:
      return elbo_sample(model, proposal, x, rng);
    case ObjectiveKind::iwae:
      return iwae_estimate(model, proposal, x, spec.n_particles, rng);
    case ObjectiveKind::fivo:
      return fivo_estimate(model, proposal, x, spec.n_particles, spec.filter,
                           rng);
    case ObjectiveKind::ais: {
      const AisSchedule schedule =
          spec.ais ? *spec.ais : AisSchedule::linear(spec.n_particles);
      return ais_estimate(make_latent_target(model, proposal, x), schedule,
                          rng);
    }
    case ObjectiveKind::mis: {
      MisMixture mix;
      const std::size_t n =
          spec.mis_components.empty() ? spec.n_particles
                                      : spec.mis_components.size();
      for (std::size_t i = 0; i < n; ++i) {
        const Proposal& q = spec.mis_components.empty()
                                ? proposal
                                : *spec.mis_components[i];
        mix.components.push_back(make_mis_component(model, q, x));
      }
      mix.weights = spec.mis_weights.empty()
                        ? std::vector<double>(n, 1.0 / static_cast<double>(n))
                        : spec.mis_weights;
      LatentTarget t = make_latent_target(model, proposal, x);
      return mis_estimate(t.log_joint, mix, rng);
    }
  }
  throw std::logic_error("draw_objective: bad kind");
}

namespace {

BoundEstimate summarize(const std::vector<double>& values,
                        const EstimatorSpec& spec) {
  const MeanSe ms = mean_and_se(values.data(), values.size());
  BoundEstimate est;
  est.mean = ms.mean;
  est.std_error = ms.se;
  est.replicates = values.size();
  est.n_particles = spec.kind == ObjectiveKind::elbo ? 1 : spec.n_particles;
  est.objective = spec.kind;
  est.policy = spec.filter.policy;
  return est;
}

}  // namespace

BoundEstimate estimate_bound(const SequentialModel& model,
                             const Proposal& proposal,
                             std::span<const double> x,
                             const EstimatorSpec& spec, std::size_t replicates,
                             RngStream rng, int jobs) {
  if (replicates < 2) {
    throw std::invalid_argument("estimate_bound: replicates must be >= 2");
  }
  std::vector<double> values(replicates);
  parallel_for(
      replicates,
      [&](std::size_t r) {
        values[r] = draw_objective(model, proposal, x, spec, rng.substream(r));
      },
      jobs);
  return summarize(values, spec);
}

BoundEstimate estimate_bound(const SequentialModel& model,
                             const Proposal& proposal,
                             std::span<const double> x,
                             const EstimatorSpec& spec,
                             std::span<const std::uint64_t> stream_ids,
                             std::uint64_t seed, int jobs) {
  if (stream_ids.size() < 2) {
    throw std::invalid_argument("estimate_bound: replicates must be >= 2");
  }
  std::set<std::uint64_t> unique(stream_ids.begin(), stream_ids.end());
  if (unique.size() != stream_ids.size()) {
    throw std::invalid_argument(
        "estimate_bound: duplicate replicate streams are forbidden");
  }
  std::vector<double> values(stream_ids.size());
  parallel_for(
      stream_ids.size(),
      [&](std::size_t r) {
        values[r] = draw_objective(model, proposal, x, spec,
                                   RngStream(seed, stream_ids[r]));
      },
      jobs);
  return summarize(values, spec);
}

}  // namespace seqmco
