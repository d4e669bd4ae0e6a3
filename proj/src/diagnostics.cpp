#include "seqmco/diagnostics.hpp"

#include <algorithm>
#include <cmath>

#include "seqmco/csv.hpp"
#include "seqmco/proposals.hpp"
#include "seqmco/replicate.hpp"

namespace seqmco {

std::vector<BiasVarianceReport> bias_vs_relative_variance(
    const SequentialModel& model, const Proposal& proposal,
    std::span<const double> x, double oracle_log_px,
    const EstimatorSpec& spec, std::span<const std::size_t> n_grid,
    std::size_t replicates, RngStream rng, int jobs) {
  std::vector<BiasVarianceReport> out;
  std::vector<double> logs(replicates);
  for (std::size_t gi = 0; gi < n_grid.size(); ++gi) {
    EstimatorSpec s = spec;
    s.n_particles = n_grid[gi];
    RngStream cell_rng = rng.substream(gi);
    parallel_for(
        replicates,
        [&](std::size_t r) {
          logs[r] = draw_objective(model, proposal, x, s, cell_rng.substream(r));
        },
        jobs);

    BiasVarianceReport rep;
    rep.n_particles = n_grid[gi];
    rep.replicates = replicates;
    const MeanSe ms = mean_and_se(logs.data(), logs.size());
    rep.bias = oracle_log_px - ms.mean;
    rep.bias_se = ms.se;

    // Moments of the ratio p-hat/p around its exact mean 1.
    double m2 = 0.0, m4 = 0.0, m6 = 0.0;
    for (double lp : logs) {
      const double d = std::exp(lp - oracle_log_px) - 1.0;
      const double d2 = d * d;
      m2 += d2;
      m4 += d2 * d2;
      m6 += d2 * d2 * d2;
    }
    const double R = static_cast<double>(replicates);
    m2 /= R;
    m4 /= R;
    m6 /= R;
    rep.rel_var = m2;
    rep.rel_var_se = std::sqrt(std::max(m4 - m2 * m2, 0.0) / R);
    rep.half_rel_var = 0.5 * m2;
    rep.sixth_central_moment = m6;
    out.push_back(rep);
  }
  return out;
}

InverseMomentReport inverse_moment_experiment(const WeightDistribution& dist,
                                              std::span<const std::size_t> n_grid,
                                              std::size_t replicates,
                                              RngStream rng, int jobs) {
  InverseMomentReport report;
  report.n_grid.assign(n_grid.begin(), n_grid.end());

  auto draw_weight = [&dist](RngStream& r) {
    switch (dist.kind) {
      case WeightDistribution::Kind::lognormal:
        return std::exp(dist.mu + dist.sigma * r.gaussian());
      case WeightDistribution::Kind::point_mass:
        return dist.value;
    }
    return 1.0;
  };

  // Tail constants: P(w < u) <= C u^{1+eps} on [0, M).
  report.epsilon = 0.5;
  if (dist.kind == WeightDistribution::Kind::lognormal) {
    report.M = std::exp(dist.mu);  // median
    double c_max = 0.0;
    for (int i = 0; i < 2000; ++i) {
      const double u = report.M * std::exp(-12.0 * (1.0 - i / 2000.0));
      const double cdf =
          0.5 * std::erfc(-(std::log(u) - dist.mu) / (dist.sigma * std::sqrt(2.0)));
      c_max = std::max(c_max, cdf / std::pow(u, 1.0 + report.epsilon));
    }
    report.C = c_max;
  } else if (dist.kind == WeightDistribution::Kind::point_mass) {
    if (!(dist.value > 0.0)) {
      throw std::invalid_argument("inverse_moment: point mass must be positive");
    }
    report.M = dist.value;
    report.C = 0.0;
  } else {
    throw std::invalid_argument(
        "inverse_moment: no verified CDF bound near zero for this "
        "distribution; refusing");
  }
  report.lemma_bound =
      report.C * std::pow(report.M, report.epsilon) / report.epsilon +
      1.0 / report.M;

  std::vector<double> values(replicates);
  for (std::size_t gi = 0; gi < n_grid.size(); ++gi) {
    const std::size_t n = n_grid[gi];
    RngStream cell_rng = rng.substream(gi);
    parallel_for(
        replicates,
        [&](std::size_t r) {
          RngStream rr = cell_rng.substream(r);
          double sum = 0.0;
          for (std::size_t i = 0; i < n; ++i) sum += draw_weight(rr);
          values[r] = static_cast<double>(n) / sum;
        },
        jobs);
    const MeanSe ms = mean_and_se(values.data(), values.size());
    report.inv_moment.push_back(ms.mean);
    report.inv_moment_se.push_back(ms.se);
  }
  return report;
}

std::vector<VarianceScalingRow> variance_scaling_in_T(
    const LgssmParams& params, std::span<const std::size_t> t_grid,
    std::size_t n_particles, std::size_t replicates, RngStream rng,
    int jobs) {
  const Lgssm model(params);
  const BootstrapProposal proposal(model);
  std::vector<VarianceScalingRow> rows;
  std::vector<double> logs(replicates);

  for (std::size_t gi = 0; gi < t_grid.size(); ++gi) {
    const std::size_t T = t_grid[gi];
    const auto data = simulate_dataset(model, T, 1, rng.substream(1000 + gi));
    const std::vector<double>& x = data[0];
    const double oracle = kalman_log_marginal(params, x).log_marginal;

    for (const bool fivo : {false, true}) {
      EstimatorSpec spec;
      spec.kind = fivo ? ObjectiveKind::fivo : ObjectiveKind::iwae;
      spec.n_particles = n_particles;
      spec.filter.policy =
          fivo ? ResamplingPolicy::ess(0.5) : ResamplingPolicy::never();
      // Both estimators share replicate streams (common random numbers), so
      // the ratio of their relative variances is not inflated by draw noise.
      RngStream cell_rng = rng.substream(gi);
      parallel_for(
          replicates,
          [&](std::size_t r) {
            logs[r] =
                draw_objective(model, proposal, x, spec, cell_rng.substream(r));
          },
          jobs);
      double m2 = 0.0, m4 = 0.0;
      for (double lp : logs) {
        const double d = std::exp(lp - oracle) - 1.0;
        m2 += d * d;
        m4 += d * d * d * d;
      }
      const double R = static_cast<double>(replicates);
      m2 /= R;
      m4 /= R;
      VarianceScalingRow row;
      row.T = T;
      row.estimator = fivo ? "fivo" : "iwae";
      row.rel_var = m2;
      row.rel_var_se = std::sqrt(std::max(m4 - m2 * m2, 0.0) / R);
      row.oracle_log_px = oracle;
      rows.push_back(row);
    }
  }
  return rows;
}

double kl_q_prior(const SequentialModel& model, const Proposal& proposal,
                  std::span<const double> x, std::size_t rollouts,
                  RngStream rng) {
  if (rollouts == 0) throw std::invalid_argument("kl_q_prior: rollouts");
  double total = 0.0;
  std::vector<double> z;
  for (std::size_t r = 0; r < rollouts; ++r) {
    RngStream roll_rng = rng.substream(r);
    z.clear();
    double kl = 0.0;
    for (std::size_t t = 1; t <= x.size(); ++t) {
      const Gaussian q = proposal.step(t, x, z);
      const Gaussian p = model.latent_prior(t, x, z);
      kl += gaussian_kl(q, p);
      z.push_back(q.mean + q.std_dev() * roll_rng.gaussian());
    }
    total += kl;
  }
  return total / static_cast<double>(rollouts);
}

namespace {

// Dataset-level bound: average the per-sequence means; combine the
// per-sequence standard errors as independent.
BoundEstimate dataset_bound(const SequentialModel& model,
                            const Proposal& proposal,
                            const std::vector<std::vector<double>>& data,
                            const EstimatorSpec& spec, std::size_t replicates,
                            RngStream rng, int jobs) {
  double mean = 0.0, var = 0.0;
  for (std::size_t s = 0; s < data.size(); ++s) {
    const BoundEstimate est = estimate_bound(model, proposal, data[s], spec,
                                             replicates, rng.substream(s), jobs);
    mean += est.mean;
    var += est.std_error * est.std_error;
  }
  const double S = static_cast<double>(data.size());
  BoundEstimate out;
  out.mean = mean / S;
  out.std_error = std::sqrt(var) / S;
  out.replicates = replicates;
  out.n_particles = spec.n_particles;
  out.objective = spec.kind;
  out.policy = spec.filter.policy;
  return out;
}

}  // namespace

CrossEvalEntry cross_evaluate(const SequentialModel& model,
                              const Proposal& proposal,
                              const std::vector<std::vector<double>>& data,
                              std::size_t n_eval, std::size_t replicates,
                              ObjectiveKind trained_with, RngStream rng,
                              int jobs) {
  CrossEvalEntry entry;
  entry.trained_with = to_string(trained_with);

  EstimatorSpec elbo_spec;
  elbo_spec.kind = ObjectiveKind::elbo;
  entry.elbo = dataset_bound(model, proposal, data, elbo_spec,
                             replicates * n_eval, rng.substream(1), jobs);

  EstimatorSpec iwae_spec;
  iwae_spec.kind = ObjectiveKind::iwae;
  iwae_spec.n_particles = n_eval;
  entry.iwae = dataset_bound(model, proposal, data, iwae_spec, replicates,
                             rng.substream(2), jobs);

  EstimatorSpec fivo_spec;
  fivo_spec.kind = ObjectiveKind::fivo;
  fivo_spec.n_particles = n_eval;
  fivo_spec.filter.policy = ResamplingPolicy::ess(0.5);
  entry.fivo = dataset_bound(model, proposal, data, fivo_spec, replicates,
                             rng.substream(3), jobs);

  if (trained_with == ObjectiveKind::fivo) {
    entry.reported = entry.fivo.mean;
    entry.reported_se = entry.fivo.std_error;
  } else {
    entry.reported = entry.elbo.mean;
    entry.reported_se = entry.elbo.std_error;
    if (entry.iwae.mean > entry.reported) {
      entry.reported = entry.iwae.mean;
      entry.reported_se = entry.iwae.std_error;
    }
    if (entry.fivo.mean > entry.reported) {
      entry.reported = entry.fivo.mean;
      entry.reported_se = entry.fivo.std_error;
    }
  }
  return entry;
}

std::string bias_variance_csv(std::span<const BiasVarianceReport> reports) {
  CsvWriter csv({"format", "n_particles", "replicates", "bias", "bias_se",
                 "rel_var", "rel_var_se", "half_rel_var",
                 "sixth_central_moment"});
  for (const auto& r : reports) {
    csv.add_row({"1", CsvWriter::fmt(r.n_particles),
                 CsvWriter::fmt(r.replicates), CsvWriter::fmt(r.bias),
                 CsvWriter::fmt(r.bias_se), CsvWriter::fmt(r.rel_var),
                 CsvWriter::fmt(r.rel_var_se), CsvWriter::fmt(r.half_rel_var),
                 CsvWriter::fmt(r.sixth_central_moment)});
  }
  return csv.str();
}

std::string inverse_moment_csv(const InverseMomentReport& report) {
  CsvWriter csv({"format", "n", "inv_moment", "inv_moment_se", "M", "C",
                 "epsilon", "lemma_bound"});
  for (std::size_t i = 0; i < report.n_grid.size(); ++i) {
    csv.add_row({"1", CsvWriter::fmt(report.n_grid[i]),
                 CsvWriter::fmt(report.inv_moment[i]),
                 CsvWriter::fmt(report.inv_moment_se[i]),
                 CsvWriter::fmt(report.M), CsvWriter::fmt(report.C),
                 CsvWriter::fmt(report.epsilon),
                 CsvWriter::fmt(report.lemma_bound)});
  }
  return csv.str();
}

std::string variance_scaling_csv(std::span<const VarianceScalingRow> rows) {
  CsvWriter csv({"format", "T", "estimator", "rel_var", "rel_var_se",
                 "oracle_log_px"});
  for (const auto& r : rows) {
    csv.add_row({"1", CsvWriter::fmt(r.T), r.estimator,
                 CsvWriter::fmt(r.rel_var), CsvWriter::fmt(r.rel_var_se),
                 CsvWriter::fmt(r.oracle_log_px)});
  }
  return csv.str();
}

std::string cross_eval_csv(std::span<const CrossEvalEntry> entries) {
  CsvWriter csv({"format", "trained_with", "elbo", "elbo_se", "iwae",
                 "iwae_se", "fivo", "fivo_se", "reported", "reported_se"});
  for (const auto& e : entries) {
    csv.add_row({"1", e.trained_with, CsvWriter::fmt(e.elbo.mean),
                 CsvWriter::fmt(e.elbo.std_error), CsvWriter::fmt(e.iwae.mean),
                 CsvWriter::fmt(e.iwae.std_error), CsvWriter::fmt(e.fivo.mean),
                 CsvWriter::fmt(e.fivo.std_error), CsvWriter::fmt(e.reported),
                 CsvWriter::fmt(e.reported_se)});
  }
  return csv.str();
}

}  // namespace seqmco
