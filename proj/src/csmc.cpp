#include "seqmco/csmc.hpp"

#include <algorithm>
#include <cmath>

namespace seqmco {
namespace {

void require_fixed_with_final_resample(const FilterRecord& record) {
  if (record.level != RecordLevel::full) {
    throw std::invalid_argument("extended densities: need a full record");
  }
  if (!record.policy.is_fixed()) {
    throw std::invalid_argument(
        "extended densities: record must come from a fixed schedule");
  }
  if (record.steps.empty() || !record.steps.back().resampled) {
    throw std::invalid_argument(
        "extended densities: schedule must resample at T");
  }
}

// Forward reconstruction of per-slot trajectories from a full record.
struct TrajectoryReplay {
  std::size_t N, T;
  std::vector<double> traj;
  std::vector<double> scratch;

  TrajectoryReplay(std::size_t n, std::size_t t)
      : N(n), T(t), traj(n * t, 0.0), scratch(n * t) {}

  std::span<const double> history(std::size_t i, std::size_t len) const {
    return std::span<const double>(traj).subspan(i * T, len);
  }
  void set(std::size_t i, std::size_t t, double z) { traj[i * T + t - 1] = z; }
  void gather(const std::vector<std::uint32_t>& ancestors, std::size_t t) {
    scratch.assign(N * T, 0.0);
    for (std::size_t i = 0; i < N; ++i) {
      std::copy_n(traj.begin() + ancestors[i] * T, t, scratch.begin() + i * T);
    }
    traj.swap(scratch);
  }
};

}  // namespace

CsmcRecord run_csmc(const SequentialModel& model, const Proposal& proposal,
                    std::span<const double> x, std::size_t n_particles,
                    const std::vector<std::size_t>& schedule,
                    std::span<const double> y, RngStream rng) {
  const std::size_t T = x.size();
  const std::size_t N = n_particles;
  if (N == 0 || T == 0) throw std::invalid_argument("run_csmc: empty run");
  if (y.size() != T) throw std::invalid_argument("run_csmc: |y| != T");
  ResamplingPolicy policy = ResamplingPolicy::fixed(schedule);
  if (!policy.contains_step(T)) {
    throw std::invalid_argument("run_csmc: schedule must resample at T");
  }

  CsmcRecord rec;
  rec.y.assign(y.begin(), y.end());
  rec.slot = {0};
  rec.base.n_particles = N;
  rec.base.T = T;
  rec.base.policy = policy;
  rec.base.method = ResampleMethod::multinomial;
  rec.base.level = RecordLevel::full;
  rec.base.steps.resize(T);

  std::vector<RngStream> noise_streams;
  noise_streams.reserve(N);
  for (std::size_t i = 0; i < N; ++i) noise_streams.push_back(rng.substream(1 + i));
  RngStream resample_stream = rng.substream(0);
  RngStream slot_stream = rng.substream(N + 1);

  TrajectoryReplay replay(N, T);
  std::vector<double> log_w(N, -std::log(static_cast<double>(N)));
  std::vector<double> updated(N), probs(N);
  std::vector<std::uint32_t> ancestors(N);
  std::size_t j = 0;
  double log_phat = 0.0;

  for (std::size_t t = 1; t <= T; ++t) {
    FilterStepRecord& step = rec.base.steps[t - 1];
    step.noise.resize(N);
    step.z.resize(N);
    step.log_alpha.resize(N);
    step.log_weight.resize(N);

    for (std::size_t i = 0; i < N; ++i) {
      auto hist = replay.history(i, t - 1);
      const Gaussian g = proposal.step(t, x, hist);
      const double s = std::sqrt(g.var);
      double eps, z_t;
      if (i == j) {
        z_t = y[t - 1];
        eps = (z_t - g.mean) / s;
      } else {
        eps = noise_streams[i].gaussian();
        z_t = g.mean + s * eps;
      }
      replay.set(i, t, z_t);
      const double la =
          model.log_joint_step(t, x, replay.history(i, t)) -
          gaussian_logpdf(z_t, g);
      step.noise[i] = eps;
      step.z[i] = z_t;
      step.log_alpha[i] = la;
      updated[i] = log_w[i] + la;
    }

    const double log_phat_t = log_sum_exp(updated);
    if (log_phat_t == kLogZero) throw particle_collapse_error(t);
    log_phat += log_phat_t;
    for (std::size_t i = 0; i < N; ++i) {
      log_w[i] = updated[i] - log_phat_t;
      probs[i] = std::exp(log_w[i]);
      step.log_weight[i] = log_w[i];
    }
    step.log_phat_step = log_phat_t;
    step.log_phat_cum = log_phat;
    step.resampled = policy.contains_step(t);

    if (step.resampled) {
      resample_multinomial(probs, ancestors, resample_stream);
      const std::size_t j_new = slot_stream.uniform_index(N);
      // The new privileged slot inherits from the old one, which is the
      // unique slot holding y_{1:t}.
      ancestors[j_new] = static_cast<std::uint32_t>(j);
      replay.gather(ancestors, t);
      std::fill(log_w.begin(), log_w.end(),
                -std::log(static_cast<double>(N)));
      step.ancestors = ancestors;
      rec.slot.push_back(j_new);
      j = j_new;
    }
  }
  rec.base.log_phat = log_phat;
  return rec;
}

double extended_log_density_g(const FilterRecord& record,
                              const Proposal& proposal,
                              std::span<const double> x) {
  require_fixed_with_final_resample(record);
  const std::size_t N = record.n_particles;
  const std::size_t T = record.T;
  TrajectoryReplay replay(N, T);
  double log_g = 0.0;
  for (std::size_t t = 1; t <= T; ++t) {
    const FilterStepRecord& step = record.steps[t - 1];
    for (std::size_t i = 0; i < N; ++i) {
      log_g += gaussian_logpdf(step.z[i],
                               proposal.step(t, x, replay.history(i, t - 1)));
      replay.set(i, t, step.z[i]);
    }
    if (step.resampled) {
      for (std::size_t i = 0; i < N; ++i) {
        log_g += step.log_weight[step.ancestors[i]];
      }
      replay.gather(step.ancestors, t);
    }
  }
  return log_g;
}

double extended_log_density_f(const CsmcRecord& record,
                              const Proposal& proposal,
                              const Proposal& posterior,
                              std::span<const double> x) {
  require_fixed_with_final_resample(record.base);
  const std::size_t N = record.base.n_particles;
  const std::size_t T = record.base.T;
  if (record.slot.size() != record.base.resample_count() + 1) {
    throw std::invalid_argument("extended_log_density_f: slot bookkeeping");
  }
  TrajectoryReplay replay(N, T);
  double log_f = 0.0;
  std::size_t r = 0;  // completed resampling events
  for (std::size_t t = 1; t <= T; ++t) {
    const FilterStepRecord& step = record.base.steps[t - 1];
    const std::size_t j = record.slot[r];
    for (std::size_t i = 0; i < N; ++i) {
      const auto hist = replay.history(i, t - 1);
      if (i == j) {
        log_f += gaussian_logpdf(step.z[i], posterior.step(t, x, hist));
      } else {
        log_f += gaussian_logpdf(step.z[i], proposal.step(t, x, hist));
      }
      replay.set(i, t, step.z[i]);
    }
    if (step.resampled) {
      const std::size_t j_next = record.slot[r + 1];
      for (std::size_t i = 0; i < N; ++i) {
        if (i == j_next) continue;
        log_f += step.log_weight[step.ancestors[i]];
      }
      log_f -= std::log(static_cast<double>(N));
      replay.gather(step.ancestors, t);
      ++r;
    }
  }
  return log_f;
}

double verify_unbiasedness_identity(const CsmcRecord& record,
                                    const Proposal& proposal,
                                    const Proposal& posterior,
                                    std::span<const double> x,
                                    double oracle_log_px) {
  const double log_g = extended_log_density_g(record.base, proposal, x);
  const double log_f = extended_log_density_f(record, proposal, posterior, x);
  return std::abs(oracle_log_px + log_f - log_g - record.base.log_phat);
}

double log_ratio_f_over_g(const FilterRecord& record, const Proposal& proposal,
                          const Proposal& posterior,
                          std::span<const double> x) {
  require_fixed_with_final_resample(record);
  const std::size_t N = record.n_particles;
  const std::size_t T = record.T;
  TrajectoryReplay replay(N, T);
  std::vector<double> acc(N, 0.0);  // per-slot sum of log(post/q) this block
  double ratio = 0.0;
  bool first_block = true;
  for (std::size_t t = 1; t <= T; ++t) {
    const FilterStepRecord& step = record.steps[t - 1];
    for (std::size_t i = 0; i < N; ++i) {
      const auto hist = replay.history(i, t - 1);
      acc[i] += gaussian_logpdf(step.z[i], posterior.step(t, x, hist)) -
                gaussian_logpdf(step.z[i], proposal.step(t, x, hist));
      replay.set(i, t, step.z[i]);
    }
    if (step.resampled) {
      if (first_block) {
        // The initial privileged slot is pinned, matching conditional SMC.
        ratio += acc[0];
        first_block = false;
      } else {
        ratio += log_sum_exp(acc) - std::log(static_cast<double>(N));
      }
      std::fill(acc.begin(), acc.end(), 0.0);
      replay.gather(step.ancestors, t);
    }
  }
  return ratio;
}

}  // namespace seqmco
