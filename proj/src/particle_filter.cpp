#include "seqmco/particle_filter.hpp"

#include <algorithm>
#include <cmath>

namespace seqmco {

ResamplingPolicy ResamplingPolicy::fixed(std::vector<std::size_t> steps) {
  std::sort(steps.begin(), steps.end());
  steps.erase(std::unique(steps.begin(), steps.end()), steps.end());
  for (std::size_t s : steps) {
    if (s == 0) throw std::invalid_argument("ResamplingPolicy: steps are 1-based");
  }
  return {Kind::fixed_schedule, 0.0, std::move(steps)};
}

bool ResamplingPolicy::contains_step(std::size_t t) const {
  return std::binary_search(schedule.begin(), schedule.end(), t);
}

bool ResamplingPolicy::should_resample(double ess_value, std::size_t n,
                                       std::size_t t) const {
  switch (kind) {
    case Kind::never:
      return false;
    case Kind::always:
      return true;
    case Kind::ess_threshold:
      return ess_value < tau * static_cast<double>(n);
    case Kind::fixed_schedule:
      return contains_step(t);
  }
  return false;
}

std::size_t FilterRecord::resample_count() const {
  std::size_t c = 0;
  for (const auto& s : steps) c += s.resampled ? 1 : 0;
  return c;
}

std::vector<std::size_t> FilterRecord::resample_times() const {
  std::vector<std::size_t> times;
  for (std::size_t t = 1; t <= steps.size(); ++t) {
    if (steps[t - 1].resampled) times.push_back(t);
  }
  return times;
}

namespace {

// Shared engine for fresh runs and pinned replays. When `forced` is set,
// noises, resampling decisions and ancestor indices come from the record and
// rng is untouched; densities are always re-evaluated.
double filter_pass(const SequentialModel& model, const Proposal& proposal,
                   std::span<const double> x, std::size_t n,
                   const FilterOptions& opts, RngStream* rng,
                   const FilterRecord* forced, FilterRecord* out) {
  const std::size_t T = x.size();
  if (T == 0) throw std::invalid_argument("particle filter: empty sequence");
  if (n == 0) throw std::invalid_argument("particle filter: N must be >= 1");

  ParticleEnsemble ens;
  ens.n_particles = n;
  ens.capacity = T;
  ens.trajectories.assign(n * T, 0.0);
  ens.log_weights.assign(n, -std::log(static_cast<double>(n)));
  ens.log_phat = 0.0;

  std::vector<RngStream> noise_streams;
  RngStream resample_stream;
  if (rng != nullptr) {
    noise_streams.reserve(n);
    for (std::size_t i = 0; i < n; ++i) noise_streams.push_back(rng->substream(1 + i));
    resample_stream = rng->substream(0);
  }

  std::vector<double> updated(n), probs(n), gathered;
  std::vector<std::uint32_t> ancestors(n);
  if (out != nullptr) out->steps.resize(T);

  for (std::size_t t = 1; t <= T; ++t) {
    const FilterStepRecord* frec = forced ? &forced->steps[t - 1] : nullptr;
    FilterStepRecord* orec = out ? &out->steps[t - 1] : nullptr;
    const bool full = out != nullptr && out->level == RecordLevel::full;
    if (full) {
      orec->noise.resize(n);
      orec->z.resize(n);
      orec->log_alpha.resize(n);
      orec->log_weight.resize(n);
    }

    for (std::size_t i = 0; i < n; ++i) {
      const double eps = frec ? frec->noise[i] : noise_streams[i].gaussian();
      auto hist = std::span(ens.trajectories).subspan(i * T, t - 1);
      const Gaussian g = proposal.step(t, x, hist);
      const double z_t = g.mean + std::sqrt(g.var) * eps;
      ens.trajectories[i * T + t - 1] = z_t;
      auto traj = std::span<const double>(ens.trajectories).subspan(i * T, t);
      double la = model.log_joint_step(t, x, traj) - gaussian_logpdf(z_t, g);
      if (opts.weight_skew != 0.0) la += opts.weight_skew * static_cast<double>(i);
      updated[i] = ens.log_weights[i] + la;
      if (full) {
        orec->noise[i] = eps;
        orec->z[i] = z_t;
        orec->log_alpha[i] = la;
      }
    }

    const double log_phat_t = log_sum_exp(updated);
    if (log_phat_t == kLogZero) throw particle_collapse_error(t);
    ens.log_phat += log_phat_t;
    for (std::size_t i = 0; i < n; ++i) {
      ens.log_weights[i] = updated[i] - log_phat_t;
      probs[i] = std::exp(ens.log_weights[i]);
    }

    bool resample;
    if (frec) {
      resample = frec->resampled;
    } else if (opts.policy.kind == ResamplingPolicy::Kind::ess_threshold) {
      resample = opts.policy.should_resample(effective_sample_size(probs), n, t);
    } else {
      resample = opts.policy.should_resample(0.0, n, t);
    }

    if (orec) {
      orec->log_phat_step = log_phat_t;
      orec->log_phat_cum = ens.log_phat;
      orec->resampled = resample;
      if (full) {
        std::copy(ens.log_weights.begin(), ens.log_weights.end(),
                  orec->log_weight.begin());
      }
    }

    if (resample) {
      if (frec) {
        ancestors.assign(frec->ancestors.begin(), frec->ancestors.end());
      } else if (opts.method == ResampleMethod::alias) {
        resample_alias(probs, ancestors, resample_stream);
      } else {
        resample_multinomial(probs, ancestors, resample_stream);
      }
      gathered.assign(n * T, 0.0);
      for (std::size_t i = 0; i < n; ++i) {
        const std::size_t src = ancestors[i];
        std::copy_n(ens.trajectories.begin() + src * T, t,
                    gathered.begin() + i * T);
      }
      ens.trajectories.swap(gathered);
      std::fill(ens.log_weights.begin(), ens.log_weights.end(),
                -std::log(static_cast<double>(n)));
      if (orec) orec->ancestors = ancestors;
    }

    ens.t = t;
  }
  return ens.log_phat;
}

}  // namespace

FilterRecord run_particle_filter(const SequentialModel& model,
                                 const Proposal& proposal,
                                 std::span<const double> x,
                                 std::size_t n_particles,
                                 const FilterOptions& opts, RngStream rng) {
  FilterRecord record;
  record.n_particles = n_particles;
  record.T = x.size();
  record.policy = opts.policy;
  record.method = opts.method;
  record.level = opts.record;
  record.log_phat =
      filter_pass(model, proposal, x, n_particles, opts, &rng, nullptr, &record);
  return record;
}

double replay_log_phat(const FilterRecord& record, const SequentialModel& model,
                       const Proposal& proposal, std::span<const double> x) {
  if (record.level != RecordLevel::full) {
    throw std::invalid_argument("replay_log_phat: needs a full record");
  }
  if (record.T != x.size()) {
    throw std::invalid_argument("replay_log_phat: sequence length mismatch");
  }
  FilterOptions opts;
  opts.policy = record.policy;
  return filter_pass(model, proposal, x, record.n_particles, opts, nullptr,
                     &record, nullptr);
}

}  // namespace seqmco
