#include "seqmco/gradients.hpp"

#include <algorithm>
#include <cmath>

#include "seqmco/csv.hpp"
#include "seqmco/replicate.hpp"

namespace seqmco {

std::string to_string(GradientVariant v) {
  switch (v) {
    case GradientVariant::reparam_biased: return "reparam_biased";
    case GradientVariant::reparam_full: return "reparam_full";
    case GradientVariant::score_function: return "score_function";
  }
  return "?";
}

GradientVariant gradient_variant_from_string(const std::string& name) {
  if (name == "reparam_biased") return GradientVariant::reparam_biased;
  if (name == "reparam_full") return GradientVariant::reparam_full;
  if (name == "score_function") return GradientVariant::score_function;
  throw std::invalid_argument("unknown gradient variant: " + name);
}

double GradientEstimate::squared_norm() const {
  double s = 0.0;
  for (double v : d_theta) s += v * v;
  for (double v : d_phi) s += v * v;
  return s;
}

double ScoreBaseline::proposal_baseline(std::size_t t) const {
  return (primed_ && t <= proposal_.size()) ? proposal_[t - 1] : 0.0;
}

double ScoreBaseline::resample_baseline(std::size_t t) const {
  return (primed_ && t <= resample_.size()) ? resample_[t - 1] : 0.0;
}

void ScoreBaseline::update(const FilterRecord& record) {
  if (proposal_.size() < record.T) proposal_.resize(record.T, 0.0);
  if (resample_.size() < record.T) resample_.resize(record.T, 0.0);
  for (std::size_t t = 1; t <= record.T; ++t) {
    const double prev_cum = t >= 2 ? record.steps[t - 2].log_phat_cum : 0.0;
    const double mult_prop = record.log_phat - prev_cum;
    const double mult_res = record.log_phat - record.steps[t - 1].log_phat_cum;
    if (!primed_) {
      proposal_[t - 1] = mult_prop;
      resample_[t - 1] = mult_res;
    } else {
      proposal_[t - 1] = decay_ * proposal_[t - 1] + (1.0 - decay_) * mult_prop;
      resample_[t - 1] = decay_ * resample_[t - 1] + (1.0 - decay_) * mult_res;
    }
  }
  primed_ = true;
}

namespace {

// One pass over a full record, carrying per-particle parameter tangents.
// Packed coordinate order is model parameters then proposal parameters.
GradientBreakdown tangent_pass(const FilterRecord& record,
                               const SequentialModel& model,
                               const Proposal& proposal,
                               std::span<const double> x,
                               GradientVariant variant,
                               ScoreBaseline* baseline) {
  if (record.level != RecordLevel::full) {
    throw std::invalid_argument("gradients: need a full filter record");
  }
  if (record.T != x.size()) {
    throw std::invalid_argument("gradients: sequence length mismatch");
  }
  if (!proposal.has_partials()) {
    throw std::invalid_argument("gradients: proposal " + proposal.name() +
                                " is not reparameterizable with partials");
  }
  const bool reparam = variant != GradientVariant::score_function;
  const bool resample_terms = variant != GradientVariant::reparam_biased;
  if (resample_terms && !record.policy.is_fixed()) {
    throw std::invalid_argument(
        "gradients: " + to_string(variant) +
        " requires a fixed (non-adaptive) resampling schedule");
  }

  const std::size_t N = record.n_particles;
  const std::size_t T = record.T;
  const std::size_t ntheta = model.param_count();
  const std::size_t nphi = proposal.param_count();
  const std::size_t P = ntheta + nphi;

  std::vector<double> traj(N * T, 0.0), gather_buf(N * T);
  std::vector<double> dz(N * P, 0.0), dlogw(N * P, 0.0), dla(N * P, 0.0);
  std::vector<double> dgather(N * P);
  std::vector<double> score_q(N * nphi, 0.0);
  std::vector<double> d_theta_buf(ntheta);
  std::vector<double> dmean_dphi(nphi), dlogstd_dphi(nphi);

  std::vector<double> base(P, 0.0), res_acc(P, 0.0), prop_acc(P, 0.0);
  std::vector<double> dlogphat(P);

  for (std::size_t t = 1; t <= T; ++t) {
    const FilterStepRecord& step = record.steps[t - 1];
    for (std::size_t i = 0; i < N; ++i) {
      auto hist = std::span<const double>(traj).subspan(i * T, t - 1);
      const Gaussian g = proposal.step(t, x, hist);
      const double s = std::sqrt(g.var);
      const double eps = step.noise[i];
      traj[i * T + t - 1] = step.z[i];
      auto full_hist = std::span<const double>(traj).subspan(i * T, t);

      double d_zt = 0.0, d_zprev = 0.0;
      model.joint_step_partials(t, x, full_hist, d_theta_buf, d_zt, d_zprev);
      ProposalPartials pp{dmean_dphi, dlogstd_dphi, 0.0, 0.0};
      std::fill(dmean_dphi.begin(), dmean_dphi.end(), 0.0);
      std::fill(dlogstd_dphi.begin(), dlogstd_dphi.end(), 0.0);
      proposal.step_partials(t, x, hist, pp);

      if (reparam) {
        const double dz_dzprev = pp.dmean_dzprev + eps * s * pp.dlogstd_dzprev;
        for (std::size_t k = 0; k < P; ++k) {
          const double dz_prev_k = dz[i * P + k];
          const double direct =
              k < ntheta ? 0.0
                         : dmean_dphi[k - ntheta] +
                               eps * s * dlogstd_dphi[k - ntheta];
          const double dz_new = dz_dzprev * dz_prev_k + direct;
          const double dlogs_total =
              (k < ntheta ? 0.0 : dlogstd_dphi[k - ntheta]) +
              pp.dlogstd_dzprev * dz_prev_k;
          // log alpha = log p - log q; with eps held fixed the proposal
          // density contributes only its entropy term, d log q = -d log s.
          dla[i * P + k] = (k < ntheta ? d_theta_buf[k] : 0.0) +
                           d_zt * dz_new + d_zprev * dz_prev_k + dlogs_total;
          dz[i * P + k] = dz_new;
        }
      } else {
        // Latents held fixed: only the explicit dependence survives.
        const double dlq_dmean = eps / s;
        const double dlq_dlogstd = eps * eps - 1.0;
        for (std::size_t k = 0; k < ntheta; ++k) {
          dla[i * P + k] = d_theta_buf[k];
        }
        for (std::size_t k = 0; k < nphi; ++k) {
          const double score =
              dlq_dmean * dmean_dphi[k] + dlq_dlogstd * dlogstd_dphi[k];
          score_q[i * nphi + k] = score;
          dla[i * P + ntheta + k] = -score;
        }
      }
    }

    std::fill(dlogphat.begin(), dlogphat.end(), 0.0);
    for (std::size_t i = 0; i < N; ++i) {
      const double w_post = std::exp(step.log_weight[i]);
      for (std::size_t k = 0; k < P; ++k) {
        dlogphat[k] += w_post * (dlogw[i * P + k] + dla[i * P + k]);
      }
    }
    for (std::size_t k = 0; k < P; ++k) base[k] += dlogphat[k];
    for (std::size_t i = 0; i < N; ++i) {
      for (std::size_t k = 0; k < P; ++k) {
        dlogw[i * P + k] += dla[i * P + k] - dlogphat[k];
      }
    }

    if (variant == GradientVariant::score_function && nphi > 0) {
      const double prev_cum = t >= 2 ? record.steps[t - 2].log_phat_cum : 0.0;
      const double mult = record.log_phat - prev_cum -
                          (baseline ? baseline->proposal_baseline(t) : 0.0);
      for (std::size_t i = 0; i < N; ++i) {
        for (std::size_t k = 0; k < nphi; ++k) {
          prop_acc[ntheta + k] += mult * score_q[i * nphi + k];
        }
      }
    }

    if (step.resampled) {
      if (resample_terms) {
        const double mult = record.log_phat - step.log_phat_cum -
                            (baseline ? baseline->resample_baseline(t) : 0.0);
        for (std::size_t d = 0; d < N; ++d) {
          const std::size_t a = step.ancestors[d];
          for (std::size_t k = 0; k < P; ++k) {
            res_acc[k] += mult * dlogw[a * P + k];
          }
        }
      }
      // Inherit trajectories and tangents; weight tangents reset with the
      // weights.
      gather_buf.assign(N * T, 0.0);
      dgather.assign(N * P, 0.0);
      for (std::size_t i = 0; i < N; ++i) {
        const std::size_t a = step.ancestors[i];
        std::copy_n(traj.begin() + a * T, t, gather_buf.begin() + i * T);
        std::copy_n(dz.begin() + a * P, P, dgather.begin() + i * P);
      }
      traj.swap(gather_buf);
      dz.swap(dgather);
      std::fill(dlogw.begin(), dlogw.end(), 0.0);
    }
  }

  if (baseline != nullptr) baseline->update(record);

  GradientBreakdown out;
  out.base.variant = variant;
  out.resampling.variant = variant;
  out.base.d_theta.assign(base.begin(), base.begin() + ntheta);
  out.base.d_phi.assign(base.begin() + ntheta, base.end());
  for (std::size_t k = 0; k < nphi; ++k) {
    out.base.d_phi[k] += prop_acc[ntheta + k];
  }
  out.resampling.d_theta.assign(res_acc.begin(), res_acc.begin() + ntheta);
  out.resampling.d_phi.assign(res_acc.begin() + ntheta, res_acc.end());
  return out;
}

GradientEstimate combine(const GradientBreakdown& b) {
  GradientEstimate out = b.base;
  for (std::size_t k = 0; k < out.d_theta.size(); ++k) {
    out.d_theta[k] += b.resampling.d_theta[k];
  }
  for (std::size_t k = 0; k < out.d_phi.size(); ++k) {
    out.d_phi[k] += b.resampling.d_phi[k];
  }
  return out;
}

}  // namespace

GradientBreakdown gradient_breakdown(const FilterRecord& record,
                                     const SequentialModel& model,
                                     const Proposal& proposal,
                                     std::span<const double> x,
                                     GradientVariant variant,
                                     ScoreBaseline* baseline) {
  return tangent_pass(record, model, proposal, x, variant, baseline);
}

GradientEstimate grad_log_phat_reparam(const FilterRecord& record,
                                       const SequentialModel& model,
                                       const Proposal& proposal,
                                       std::span<const double> x) {
  return tangent_pass(record, model, proposal, x,
                      GradientVariant::reparam_biased, nullptr)
      .base;
}

GradientEstimate grad_fivo_full(const FilterRecord& record,
                                const SequentialModel& model,
                                const Proposal& proposal,
                                std::span<const double> x) {
  return combine(tangent_pass(record, model, proposal, x,
                              GradientVariant::reparam_full, nullptr));
}

GradientEstimate grad_score_function(const FilterRecord& record,
                                     const SequentialModel& model,
                                     const Proposal& proposal,
                                     std::span<const double> x,
                                     ScoreBaseline* baseline) {
  return combine(tangent_pass(record, model, proposal, x,
                              GradientVariant::score_function, baseline));
}

namespace {

// Deterministic chunked accumulation of per-replicate coordinate rows:
// parallel fill, serial index-order reduction.
template <typename Fill>
void chunked_stats(std::size_t replicates, std::size_t width, int jobs,
                   Fill&& fill, std::vector<double>& sum,
                   std::vector<double>& sumsq) {
  sum.assign(width, 0.0);
  sumsq.assign(width, 0.0);
  const std::size_t chunk = 8192;
  std::vector<double> rows(chunk * width);
  for (std::size_t start = 0; start < replicates; start += chunk) {
    const std::size_t count = std::min(chunk, replicates - start);
    parallel_for(
        count,
        [&](std::size_t j) {
          fill(start + j, std::span(rows).subspan(j * width, width));
        },
        jobs);
    for (std::size_t j = 0; j < count; ++j) {
      for (std::size_t k = 0; k < width; ++k) {
        const double v = rows[j * width + k];
        sum[k] += v;
        sumsq[k] += v * v;
      }
    }
  }
}

}  // namespace

GradientStats estimate_gradient(const SequentialModel& model,
                                const Proposal& proposal,
                                std::span<const double> x,
                                std::size_t n_particles,
                                const FilterOptions& opts,
                                GradientVariant variant,
                                std::size_t replicates, RngStream rng,
                                int jobs) {
  const std::size_t ntheta = model.param_count();
  const std::size_t nphi = proposal.param_count();
  const std::size_t P = ntheta + nphi;
  FilterOptions run_opts = opts;
  run_opts.record = RecordLevel::full;

  std::vector<double> sum, sumsq;
  chunked_stats(
      replicates, P, jobs,
      [&](std::size_t r, std::span<double> row) {
        const FilterRecord rec = run_particle_filter(
            model, proposal, x, n_particles, run_opts, rng.substream(r));
        const GradientBreakdown b =
            tangent_pass(rec, model, proposal, x, variant, nullptr);
        const GradientEstimate g = combine(b);
        for (std::size_t k = 0; k < ntheta; ++k) row[k] = g.d_theta[k];
        for (std::size_t k = 0; k < nphi; ++k) row[ntheta + k] = g.d_phi[k];
      },
      sum, sumsq);

  GradientStats stats;
  stats.replicates = replicates;
  const double R = static_cast<double>(replicates);
  auto moment = [&](std::size_t k, double& mean, double& var, double& se) {
    mean = sum[k] / R;
    var = replicates >= 2 ? (sumsq[k] - sum[k] * sum[k] / R) / (R - 1.0) : 0.0;
    var = std::max(var, 0.0);
    se = std::sqrt(var / R);
  };
  stats.mean_theta.resize(ntheta);
  stats.var_theta.resize(ntheta);
  stats.se_theta.resize(ntheta);
  stats.mean_phi.resize(nphi);
  stats.var_phi.resize(nphi);
  stats.se_phi.resize(nphi);
  for (std::size_t k = 0; k < ntheta; ++k) {
    moment(k, stats.mean_theta[k], stats.var_theta[k], stats.se_theta[k]);
    stats.total_variance += stats.var_theta[k];
  }
  for (std::size_t k = 0; k < nphi; ++k) {
    moment(ntheta + k, stats.mean_phi[k], stats.var_phi[k], stats.se_phi[k]);
    stats.total_variance += stats.var_phi[k];
  }
  return stats;
}

std::vector<double> central_difference(
    const std::function<double(std::span<const double>)>& f,
    std::span<const double> at, double step) {
  if (!(step > 0.0)) throw std::invalid_argument("central_difference: step");
  std::vector<double> grad(at.size());
  std::vector<double> point(at.begin(), at.end());
  for (std::size_t k = 0; k < at.size(); ++k) {
    point[k] = at[k] + step;
    const double hi = f(point);
    point[k] = at[k] - step;
    const double lo = f(point);
    point[k] = at[k];
    grad[k] = (hi - lo) / (2.0 * step);
  }
  return grad;
}

std::vector<double> packed_params(const SequentialModel& model,
                                  const Proposal& proposal) {
  std::vector<double> packed = model.params();
  const std::vector<double> phi = proposal.params();
  packed.insert(packed.end(), phi.begin(), phi.end());
  return packed;
}

void apply_packed_params(SequentialModel& model, Proposal& proposal,
                         std::span<const double> packed) {
  const std::size_t ntheta = model.param_count();
  model.set_params(packed.subspan(0, ntheta));
  proposal.set_params(packed.subspan(ntheta));
}

PerSeedFdResult per_seed_fd_check(const SequentialModel& model,
                                  const Proposal& proposal,
                                  std::span<const double> x,
                                  std::size_t n_particles,
                                  const FilterOptions& opts, double step,
                                  RngStream rng) {
  FilterOptions run_opts = opts;
  run_opts.record = RecordLevel::full;
  const FilterRecord record =
      run_particle_filter(model, proposal, x, n_particles, run_opts, rng);
  const GradientEstimate g = grad_log_phat_reparam(record, model, proposal, x);

  PerSeedFdResult out;
  out.analytic = g.d_theta;
  out.analytic.insert(out.analytic.end(), g.d_phi.begin(), g.d_phi.end());

  std::unique_ptr<SequentialModel> m = model.clone();
  std::unique_ptr<Proposal> q = proposal.clone();
  const std::vector<double> p0 = packed_params(model, proposal);
  out.fd = central_difference(
      [&](std::span<const double> p) {
        apply_packed_params(*m, *q, p);
        return replay_log_phat(record, *m, *q, x);
      },
      p0, step);

  for (std::size_t k = 0; k < p0.size(); ++k) {
    const double denom =
        std::max({std::abs(out.analytic[k]), std::abs(out.fd[k]), 1.0});
    out.max_rel_error = std::max(
        out.max_rel_error, std::abs(out.analytic[k] - out.fd[k]) / denom);
  }
  return out;
}

double FdReport::max_abs_z() const {
  double m = 0.0;
  for (const auto& r : rows) m = std::max(m, std::abs(r.z_score));
  return m;
}

FdReport finite_difference_check(const SequentialModel& model,
                                 const Proposal& proposal,
                                 std::span<const double> x,
                                 std::size_t n_particles,
                                 const FilterOptions& opts,
                                 GradientVariant variant,
                                 const FdExpectationConfig& cfg,
                                 RngStream rng) {
  const std::size_t ntheta = model.param_count();
  const std::size_t P = ntheta + proposal.param_count();
  FilterOptions run_opts = opts;
  run_opts.record = RecordLevel::full;

  // Analytic side.
  std::vector<double> a_sum, a_sumsq;
  chunked_stats(
      cfg.replicates, P, cfg.jobs,
      [&](std::size_t r, std::span<double> row) {
        const FilterRecord rec =
            run_particle_filter(model, proposal, x, n_particles, run_opts,
                                rng.substream(r));
        const GradientEstimate g =
            combine(tangent_pass(rec, model, proposal, x, variant, nullptr));
        for (std::size_t k = 0; k < ntheta; ++k) row[k] = g.d_theta[k];
        for (std::size_t k = ntheta; k < P; ++k) {
          row[k] = g.d_phi[k - ntheta];
        }
      },
      a_sum, a_sumsq);

  // Finite-difference side, one coordinate at a time with common random
  // numbers across the two evaluation points.
  const std::vector<double> p0 = packed_params(model, proposal);
  FdReport report;
  report.variant = variant;
  RngStream fd_rng = rng.substream(0xFD);
  std::vector<double> fd_sum(P), fd_sumsq(P);
  for (std::size_t k = 0; k < P; ++k) {
    std::unique_ptr<SequentialModel> m_hi = model.clone();
    std::unique_ptr<Proposal> q_hi = proposal.clone();
    std::unique_ptr<SequentialModel> m_lo = model.clone();
    std::unique_ptr<Proposal> q_lo = proposal.clone();
    std::vector<double> p = p0;
    p[k] = p0[k] + cfg.step;
    apply_packed_params(*m_hi, *q_hi, p);
    p[k] = p0[k] - cfg.step;
    apply_packed_params(*m_lo, *q_lo, p);

    std::vector<double> sum, sumsq;
    chunked_stats(
        cfg.replicates, 1, cfg.jobs,
        [&](std::size_t r, std::span<double> row) {
          RngStream stream = fd_rng.substream(r);
          const double hi = fivo_estimate(*m_hi, *q_hi, x, n_particles,
                                          run_opts, stream);
          const double lo = fivo_estimate(*m_lo, *q_lo, x, n_particles,
                                          run_opts, stream);
          row[0] = (hi - lo) / (2.0 * cfg.step);
        },
        sum, sumsq);
    fd_sum[k] = sum[0];
    fd_sumsq[k] = sumsq[0];
  }

  const double R = static_cast<double>(cfg.replicates);
  for (std::size_t k = 0; k < P; ++k) {
    FdRow row;
    row.coordinate = k;
    row.is_theta = k < ntheta;
    row.analytic_mean = a_sum[k] / R;
    row.fd_mean = fd_sum[k] / R;
    const double a_var =
        std::max(0.0, (a_sumsq[k] - a_sum[k] * a_sum[k] / R) / (R - 1.0));
    const double f_var =
        std::max(0.0, (fd_sumsq[k] - fd_sum[k] * fd_sum[k] / R) / (R - 1.0));
    row.analytic_se = std::sqrt(a_var / R);
    row.fd_se = std::sqrt(f_var / R);
    const double denom = std::sqrt(a_var / R + f_var / R);
    row.z_score =
        denom > 0.0 ? (row.analytic_mean - row.fd_mean) / denom : 0.0;
    report.rows.push_back(row);
  }
  return report;
}

std::string fd_report_csv(const FdReport& report) {
  CsvWriter csv({"format", "coordinate", "group", "analytic", "analytic_se",
                 "fd", "fd_se", "z_score", "variant"});
  for (const auto& r : report.rows) {
    csv.add_row({"1", CsvWriter::fmt(r.coordinate),
                 r.is_theta ? "theta" : "phi", CsvWriter::fmt(r.analytic_mean),
                 CsvWriter::fmt(r.analytic_se), CsvWriter::fmt(r.fd_mean),
                 CsvWriter::fmt(r.fd_se), CsvWriter::fmt(r.z_score),
                 to_string(report.variant)});
  }
  return csv.str();
}

}  // namespace seqmco
