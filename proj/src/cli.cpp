#include "seqmco/cli.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>

#include <CLI11.hpp>

#include "seqmco/csmc.hpp"
#include "seqmco/csv.hpp"
#include "seqmco/diagnostics.hpp"
#include "seqmco/gradients.hpp"
#include "seqmco/json_io.hpp"
#include "seqmco/manifest.hpp"
#include "seqmco/quadrature.hpp"
#include "seqmco/replicate.hpp"
#include "seqmco/trainer.hpp"
#include "seqmco/version.hpp"

namespace seqmco {
namespace {

namespace fs = std::filesystem;

std::string policy_label(const ResamplingPolicy& p) {
  switch (p.kind) {
    case ResamplingPolicy::Kind::never:
      return "never";
    case ResamplingPolicy::Kind::always:
      return "always";
    case ResamplingPolicy::Kind::ess_threshold:
      return "ess:" + CsvWriter::fmt(p.tau);
    case ResamplingPolicy::Kind::fixed_schedule: {
      std::string s = "fixed:";
      for (std::size_t i = 0; i < p.schedule.size(); ++i) {
        if (i > 0) s += '|';
        s += std::to_string(p.schedule[i]);
      }
      return s;
    }
  }
  return "?";
}

fs::path make_run_dir(const fs::path& out_root, const nlohmann::json& config) {
  const std::string digest = config_digest(config);
  fs::path dir =
      out_root / (timestamp_utc_now() + "-" + digest.substr(0, 8));
  // Same-second re-runs of the same config get a distinct suffix.
  int salt = 0;
  fs::path candidate = dir;
  while (fs::exists(candidate)) {
    candidate = dir;
    candidate += "-" + std::to_string(++salt);
  }
  fs::create_directories(candidate);
  return candidate;
}

void write_manifest(const fs::path& run_dir, RunManifest manifest) {
  manifest.finished_at = timestamp_utc_now();
  std::ofstream f(run_dir / "manifest.json");
  f << manifest.to_json().dump(2) << "\n";
}

struct VerifyRow {
  std::string check;
  double measured = 0.0;
  double threshold = 0.0;
  std::string comparator;  // "<=", "<", ">="
  bool pass = false;
};

// Underlying data tables a suite wants written next to its report.
using SuiteArtifacts = std::vector<std::pair<std::string, std::string>>;

VerifyRow check_le(const std::string& name, double measured, double threshold) {
  return {name, measured, threshold, "<=", measured <= threshold};
}
VerifyRow check_lt(const std::string& name, double measured, double threshold) {
  return {name, measured, threshold, "<", measured < threshold};
}
VerifyRow check_ge(const std::string& name, double measured, double threshold) {
  return {name, measured, threshold, ">=", measured >= threshold};
}

// -------- verify suites --------

std::vector<VerifyRow> suite_prop2(std::uint64_t seed, int jobs,
                                   double weight_skew) {
  (void)jobs;
  ConjugateParams cp;
  cp.m0 = 0.3;
  cp.m1 = 0.6;
  cp.var_z = 1.0;
  cp.var_obs = 0.5;
  const ConjugateModel model(cp);
  const ConjugatePosteriorProposal posterior(cp);
  const auto data = simulate_dataset(model, 12, 1, RngStream(seed, 77));
  const std::vector<double>& x = data[0];
  const double oracle = conjugate_log_marginal(model, x).log_marginal;

  std::vector<VerifyRow> rows;
  const std::vector<ResamplingPolicy> policies = {ResamplingPolicy::never(),
                                                  ResamplingPolicy::always(),
                                                  ResamplingPolicy::ess(0.5)};
  const std::vector<std::string> policy_names = {"never", "always", "ess"};
  for (std::size_t n : {std::size_t(1), std::size_t(4), std::size_t(16)}) {
    for (std::size_t pi = 0; pi < policies.size(); ++pi) {
      FilterOptions opts;
      opts.policy = policies[pi];
      opts.weight_skew = weight_skew;
      double max_rel = 0.0, mean = 0.0, m2 = 0.0;
      const std::size_t seeds = 32;
      std::vector<double> vals(seeds);
      for (std::size_t s = 0; s < seeds; ++s) {
        vals[s] = fivo_estimate(model, posterior, x, n, opts,
                                RngStream(seed, 1000 + s));
        max_rel = std::max(max_rel,
                           std::abs(vals[s] - oracle) / std::abs(oracle));
        mean += vals[s];
      }
      mean /= static_cast<double>(seeds);
      for (double v : vals) m2 += (v - mean) * (v - mean);
      m2 /= static_cast<double>(seeds - 1);
      const std::string tag =
          "prop2.sharpness.N" + std::to_string(n) + "." + policy_names[pi];
      rows.push_back(check_lt(tag + ".rel_error", max_rel, 1e-8));
      rows.push_back(check_lt(tag + ".cross_seed_var", m2, 1e-16));
    }
  }
  return rows;
}

std::vector<VerifyRow> suite_unbiasedness(std::uint64_t seed, int jobs,
                                          double weight_skew,
                                          std::size_t replicates) {
  LgssmParams lp;
  lp.a = 0.9;
  lp.c = 1.0;
  lp.var_z = 1.0;
  lp.var_x = 1.0;
  lp.var_0 = 1.0;
  const Lgssm model(lp);
  const BootstrapProposal proposal(model);
  const auto data = simulate_dataset(model, 10, 1, RngStream(seed, 3));
  const std::vector<double>& x = data[0];
  const double oracle = kalman_log_marginal(lp, x).log_marginal;

  std::vector<VerifyRow> rows;
  std::vector<double> ratio(replicates);
  const std::vector<ResamplingPolicy> policies = {ResamplingPolicy::ess(0.5),
                                                  ResamplingPolicy::always()};
  const std::vector<std::string> pol_names = {"ess", "always"};
  for (std::size_t n : {std::size_t(1), std::size_t(4), std::size_t(16)}) {
    for (std::size_t pi = 0; pi < policies.size(); ++pi) {
      FilterOptions opts;
      opts.policy = policies[pi];
      opts.weight_skew = weight_skew;
      RngStream cell(seed, 900 + 10 * n + pi);
      parallel_for(
          replicates,
          [&](std::size_t r) {
            const double lp_hat =
                fivo_estimate(model, proposal, x, n, opts, cell.substream(r));
            ratio[r] = std::exp(lp_hat - oracle);
          },
          jobs);
      const MeanSe ms = mean_and_se(ratio.data(), ratio.size());
      rows.push_back(check_le("unbiasedness.N" + std::to_string(n) + "." +
                                  pol_names[pi] + ".abs_z",
                              std::abs(ms.mean - 1.0) / ms.se, 3.0));
    }
  }
  return rows;
}

std::vector<VerifyRow> suite_prop1(std::uint64_t seed, int jobs,
                                   std::size_t replicates,
                                   SuiteArtifacts* artifacts) {
  LgssmParams lp;
  lp.a = 0.8;
  lp.c = 1.0;
  lp.var_z = 0.6;
  lp.var_x = 1.2;
  lp.var_0 = 0.6;
  const Lgssm model(lp);
  const BootstrapProposal proposal(model);
  const auto data = simulate_dataset(model, 5, 1, RngStream(seed, 5));
  const std::vector<double>& x = data[0];
  const double oracle = kalman_log_marginal(lp, x).log_marginal;
  std::vector<VerifyRow> rows;

  // (a) every objective stays below the marginal up to noise.
  std::vector<EstimatorSpec> specs(5);
  specs[0].kind = ObjectiveKind::elbo;
  specs[1].kind = ObjectiveKind::iwae;
  specs[1].n_particles = 16;
  specs[2].kind = ObjectiveKind::fivo;
  specs[2].n_particles = 16;
  specs[2].filter.policy = ResamplingPolicy::ess(0.5);
  specs[3].kind = ObjectiveKind::ais;
  specs[3].n_particles = 8;
  specs[3].ais = AisSchedule::linear(8, 0.8, 1);
  specs[4].kind = ObjectiveKind::mis;
  specs[4].n_particles = 4;
  for (std::size_t i = 0; i < specs.size(); ++i) {
    const BoundEstimate est =
        estimate_bound(model, proposal, x, specs[i],
                       std::max<std::size_t>(replicates / 4, 500),
                       RngStream(seed, 40 + i), jobs);
    rows.push_back(check_le(
        "prop1a.bound." + to_string(specs[i].kind),
        est.mean, oracle + 3.0 * est.std_error));
  }

  // (b) gaps shrink with N for the consistent estimators.
  for (const bool fivo : {false, true}) {
    double prev_gap = 0.0, prev_se = 0.0;
    bool first = true;
    for (std::size_t n : {std::size_t(4), std::size_t(16), std::size_t(64)}) {
      EstimatorSpec s;
      s.kind = fivo ? ObjectiveKind::fivo : ObjectiveKind::iwae;
      s.n_particles = n;
      if (fivo) s.filter.policy = ResamplingPolicy::ess(0.5);
      const BoundEstimate est =
          estimate_bound(model, proposal, x, s, replicates,
                         RngStream(seed, 60 + n + (fivo ? 1 : 0)), jobs);
      const double gap = oracle - est.mean;
      if (!first) {
        rows.push_back(check_ge(
            std::string("prop1b.gap_shrinks.") + (fivo ? "fivo" : "iwae") +
                ".N" + std::to_string(n),
            prev_gap - gap,
            -2.0 * std::sqrt(prev_se * prev_se + est.std_error * est.std_error)));
      }
      prev_gap = gap;
      prev_se = est.std_error;
      first = false;
    }
  }

  // (c) bias tracks half the relative variance once N is large.
  EstimatorSpec iwae;
  iwae.kind = ObjectiveKind::iwae;
  const std::vector<std::size_t> n_grid = {16, 64};
  const auto reports = bias_vs_relative_variance(
      model, proposal, x, oracle, iwae, n_grid, replicates * 2,
      RngStream(seed, 71), jobs);
  if (artifacts != nullptr) {
    artifacts->emplace_back("bias_variance.csv", bias_variance_csv(reports));
  }
  const BiasVarianceReport& last = reports.back();
  const double ratio = last.bias / last.half_rel_var;
  rows.push_back(check_le("prop1c.bias_ratio.hi", ratio, 1.3));
  rows.push_back(check_ge("prop1c.bias_ratio.lo", ratio, 0.7));
  for (const auto& rep : reports) {
    rows.push_back(check_ge(
        "prop1a.bias_nonneg.N" + std::to_string(rep.n_particles), rep.bias,
        -3.0 * rep.bias_se));
  }
  return rows;
}

std::vector<VerifyRow> suite_csmc_identity(std::uint64_t seed, int jobs,
                                           std::size_t replicates) {
  std::vector<VerifyRow> rows;
  RngStream rng(seed, 0xC5);
  double max_residual = 0.0;
  for (int inst = 0; inst < 100; ++inst) {
    RngStream inst_rng = rng.substream(inst);
    LgssmParams lp;
    lp.a = -0.9 + 1.8 * inst_rng.uniform();
    lp.c = 0.5 + inst_rng.uniform();
    lp.var_z = 0.3 + inst_rng.uniform();
    lp.var_x = 0.3 + inst_rng.uniform();
    lp.var_0 = 0.3 + inst_rng.uniform();
    const Lgssm model(lp);
    const BootstrapProposal proposal(model);
    const LgssmPosteriorProposal posterior(lp);
    const std::size_t T = 1 + inst_rng.uniform_index(3);
    const std::size_t N = 1 + inst_rng.uniform_index(4);
    std::vector<std::size_t> schedule;
    for (std::size_t t = 1; t < T; ++t) {
      if (inst_rng.uniform() < 0.5) schedule.push_back(t);
    }
    schedule.push_back(T);
    const auto data = simulate_dataset(model, T, 1, inst_rng.substream(1));
    const std::vector<double>& x = data[0];
    RngStream y_rng = inst_rng.substream(2);
    const std::vector<double> y = posterior.sample_trajectory(x, y_rng);
    const CsmcRecord rec =
        run_csmc(model, proposal, x, N, schedule, y, inst_rng.substream(3));
    const double oracle = kalman_log_marginal(lp, x).log_marginal;
    max_residual = std::max(
        max_residual,
        verify_unbiasedness_identity(rec, proposal, posterior, x, oracle));
  }
  rows.push_back(check_lt("csmc.identity.max_residual", max_residual, 1e-10));

  // E_g[f/g] = 1 by importance sampling over plain filter runs.
  LgssmParams lp;
  lp.a = 0.7;
  lp.c = 1.0;
  lp.var_z = 0.8;
  lp.var_x = 1.0;
  lp.var_0 = 0.8;
  const Lgssm model(lp);
  const BootstrapProposal proposal(model);
  const LgssmPosteriorProposal posterior(lp);
  const auto data = simulate_dataset(model, 3, 1, RngStream(seed, 0xF6));
  const std::vector<double>& x = data[0];
  FilterOptions opts;
  opts.policy = ResamplingPolicy::fixed({2, 3});
  opts.record = RecordLevel::full;
  std::vector<double> ratios(replicates);
  RngStream runs(seed, 0xF7);
  parallel_for(
      replicates,
      [&](std::size_t r) {
        const FilterRecord rec =
            run_particle_filter(model, proposal, x, 3, opts, runs.substream(r));
        ratios[r] = std::exp(log_ratio_f_over_g(rec, proposal, posterior, x));
      },
      jobs);
  const MeanSe ms = mean_and_se(ratios.data(), ratios.size());
  rows.push_back(
      check_le("csmc.importance_mean.abs_z", std::abs(ms.mean - 1.0) / ms.se, 3.0));
  return rows;
}

std::vector<VerifyRow> suite_gradients(std::uint64_t seed, int jobs,
                                       std::size_t replicates,
                                       SuiteArtifacts* artifacts) {
  LgssmParams lp;
  lp.a = 0.7;
  lp.c = 1.1;
  lp.var_z = 0.9;
  lp.var_x = 1.1;
  lp.var_0 = 0.9;
  const Lgssm model(lp);
  LearnedGaussianProposal proposal(model);
  std::vector<double> phi = proposal.params();
  phi[LearnedGaussianProposal::kR0] = 0.1;
  phi[LearnedGaussianProposal::kR2] = 0.2;
  phi[LearnedGaussianProposal::kC0] = -0.1;
  proposal.set_params(phi);
  const auto data = simulate_dataset(model, 4, 1, RngStream(seed, 0x6A));
  const std::vector<double>& x = data[0];

  std::vector<VerifyRow> rows;
  FilterOptions ess_opts;
  ess_opts.policy = ResamplingPolicy::ess(0.9);
  double worst = 0.0;
  for (std::size_t s = 0; s < 20; ++s) {
    const PerSeedFdResult res = per_seed_fd_check(
        model, proposal, x, 3, ess_opts, 1e-5, RngStream(seed, 200 + s));
    worst = std::max(worst, res.max_rel_error);
  }
  rows.push_back(check_lt("gradients.per_seed_fd.rel_error", worst, 1e-5));

  FilterOptions fixed_opts;
  fixed_opts.policy = ResamplingPolicy::fixed({2, 4});
  fixed_opts.record = RecordLevel::full;
  double ident = 0.0;
  for (std::size_t s = 0; s < 20; ++s) {
    const FilterRecord rec = run_particle_filter(model, proposal, x, 3,
                                                 fixed_opts, RngStream(seed, 300 + s));
    const GradientEstimate full = grad_fivo_full(rec, model, proposal, x);
    const GradientEstimate biased =
        grad_log_phat_reparam(rec, model, proposal, x);
    const GradientBreakdown parts = gradient_breakdown(
        rec, model, proposal, x, GradientVariant::reparam_full);
    for (std::size_t k = 0; k < full.d_theta.size(); ++k) {
      ident = std::max(ident,
                       std::abs(full.d_theta[k] - biased.d_theta[k] -
                                parts.resampling.d_theta[k]));
    }
    for (std::size_t k = 0; k < full.d_phi.size(); ++k) {
      ident = std::max(ident, std::abs(full.d_phi[k] - biased.d_phi[k] -
                                       parts.resampling.d_phi[k]));
    }
  }
  rows.push_back(check_lt("gradients.full_minus_terms_identity", ident, 1e-12));

  FdExpectationConfig cfg;
  cfg.replicates = replicates;
  cfg.jobs = jobs;
  cfg.step = 1e-2;
  const FdReport report =
      finite_difference_check(model, proposal, x, 3, fixed_opts,
                              GradientVariant::reparam_full, cfg,
                              RngStream(seed, 0x6B));
  if (artifacts != nullptr) {
    artifacts->emplace_back("fd_report.csv", fd_report_csv(report));
  }
  rows.push_back(
      check_le("gradients.full_fd_expectation.max_abs_z", report.max_abs_z(), 3.5));
  return rows;
}

std::vector<VerifyRow> suite_inverse_moment(std::uint64_t seed, int jobs,
                                            std::size_t replicates,
                                            SuiteArtifacts* artifacts) {
  WeightDistribution dist;
  dist.kind = WeightDistribution::Kind::lognormal;
  dist.mu = 0.0;
  dist.sigma = 1.0;
  const std::vector<std::size_t> n_grid = {1, 2, 4, 8};
  const InverseMomentReport rep = inverse_moment_experiment(
      dist, n_grid, replicates, RngStream(seed, 0x1A), jobs);
  std::vector<VerifyRow> rows;
  if (artifacts != nullptr) {
    artifacts->emplace_back("inverse_moment.csv", inverse_moment_csv(rep));
  }
  for (std::size_t i = 1; i < n_grid.size(); ++i) {
    const double se = std::sqrt(rep.inv_moment_se[i] * rep.inv_moment_se[i] +
                                rep.inv_moment_se[i - 1] * rep.inv_moment_se[i - 1]);
    rows.push_back(check_le(
        "inverse_moment.nonincreasing.N" + std::to_string(n_grid[i]),
        rep.inv_moment[i] - rep.inv_moment[i - 1], 3.0 * se));
  }
  rows.push_back(check_le("inverse_moment.lemma_bound",
                          rep.inv_moment[0] - 3.0 * rep.inv_moment_se[0],
                          rep.lemma_bound));
  return rows;
}

std::vector<VerifyRow> suite_variance_scaling(std::uint64_t seed, int jobs,
                                              std::size_t replicates,
                                              SuiteArtifacts* artifacts) {
  LgssmParams lp;
  lp.a = 0.9;
  lp.c = 1.0;
  lp.var_z = 0.35;
  lp.var_x = 1.0;
  lp.var_0 = 0.35;
  const std::vector<std::size_t> t_grid = {5, 10, 20, 40};
  const auto rows_data = variance_scaling_in_T(lp, t_grid, 16, replicates,
                                               RngStream(seed, 0x55), jobs);
  std::vector<VerifyRow> rows;
  if (artifacts != nullptr) {
    artifacts->emplace_back("variance_scaling.csv",
                            variance_scaling_csv(rows_data));
  }
  double prev_ratio = 0.0;
  for (std::size_t i = 0; i < t_grid.size(); ++i) {
    const double iwae_rv = rows_data[2 * i].rel_var;
    const double fivo_rv = rows_data[2 * i + 1].rel_var;
    const double ratio = iwae_rv / fivo_rv;
    if (i > 0) {
      rows.push_back(check_ge(
          "variance_scaling.ratio_increasing.T" + std::to_string(t_grid[i]),
          ratio - prev_ratio, 0.0));
    }
    prev_ratio = ratio;
  }
  return rows;
}

std::vector<VerifyRow> run_suite(const std::string& suite, std::uint64_t seed,
                                 int jobs, double weight_skew,
                                 std::size_t replicates,
                                 SuiteArtifacts* artifacts) {
  if (suite == "prop2") return suite_prop2(seed, jobs, weight_skew);
  if (suite == "prop1") return suite_prop1(seed, jobs, replicates, artifacts);
  if (suite == "unbiasedness") {
    return suite_unbiasedness(seed, jobs, weight_skew, replicates);
  }
  if (suite == "csmc-identity") return suite_csmc_identity(seed, jobs, replicates);
  if (suite == "gradients") {
    return suite_gradients(seed, jobs, replicates, artifacts);
  }
  if (suite == "inverse-moment") {
    return suite_inverse_moment(seed, jobs, replicates * 10, artifacts);
  }
  if (suite == "variance-scaling") {
    return suite_variance_scaling(seed, jobs, replicates, artifacts);
  }
  throw config_error("unknown verify suite: " + suite);
}

}  // namespace

CliRunResult cmd_estimate(const nlohmann::json& config,
                          const fs::path& out_root, std::uint64_t seed,
                          int jobs, double weight_skew) {
  CliRunResult result;
  std::unique_ptr<SequentialModel> model;
  std::unique_ptr<Proposal> proposal;
  std::vector<std::vector<double>> data;
  std::vector<ObjectiveConfig> objectives;
  try {
    model = model_from_json(require_field(config, "model"));
    proposal = proposal_from_json(require_field(config, "proposal"), *model);
    data = dataset_from_json(require_field(config, "data"), *model);
    const nlohmann::json& objs = require_field(config, "objectives");
    if (!objs.is_array() || objs.empty()) {
      throw config_error("objectives: must be a non-empty array");
    }
    for (const auto& o : objs) {
      objectives.push_back(objective_config_from_json(o, *model));
    }
  } catch (const config_error& e) {
    std::fprintf(stderr, "config error: %s\n", e.what());
    result.exit_code = 2;
    return result;
  }

  result.run_dir = make_run_dir(out_root, config);
  RunManifest manifest;
  manifest.command = "estimate";
  manifest.config = config;
  manifest.config_digest = config_digest(config);
  manifest.seed = seed;
  manifest.jobs = jobs;
  manifest.library_version = kVersion;
  manifest.started_at = timestamp_utc_now();

  CsvWriter csv({"format", "objective", "n_particles", "policy", "mean", "se",
                 "replicates", "seed"});
  try {
    RngStream master(seed, 0);
    for (std::size_t oi = 0; oi < objectives.size(); ++oi) {
      EstimatorSpec spec = objectives[oi].spec;
      spec.filter.weight_skew = weight_skew;
      double mean = 0.0, var = 0.0;
      for (std::size_t s = 0; s < data.size(); ++s) {
        const BoundEstimate est =
            estimate_bound(*model, *proposal, data[s], spec,
                           objectives[oi].replicates,
                           master.substream(oi * 0x10000 + s), jobs);
        mean += est.mean;
        var += est.std_error * est.std_error;
      }
      mean /= static_cast<double>(data.size());
      const double se = std::sqrt(var) / static_cast<double>(data.size());
      csv.add_row({"1", to_string(spec.kind),
                   CsvWriter::fmt(spec.kind == ObjectiveKind::elbo
                                      ? std::size_t(1)
                                      : spec.n_particles),
                   policy_label(spec.filter.policy), CsvWriter::fmt(mean),
                   CsvWriter::fmt(se), CsvWriter::fmt(objectives[oi].replicates),
                   CsvWriter::fmt(static_cast<long long>(seed))});
    }
  } catch (const particle_collapse_error& e) {
    std::fprintf(stderr, "estimator collapse: %s\n", e.what());
    result.exit_code = 3;
    write_manifest(result.run_dir, manifest);
    return result;
  }

  csv.write_file(result.run_dir / "bounds.csv");
  manifest.outputs = {"bounds.csv"};
  write_manifest(result.run_dir, manifest);
  std::printf("%s\n", (result.run_dir / "bounds.csv").c_str());
  return result;
}

CliRunResult cmd_verify(const nlohmann::json& config, const fs::path& out_root,
                        std::uint64_t seed, int jobs, double weight_skew) {
  CliRunResult result;
  std::string suite;
  std::size_t replicates;
  std::vector<VerifyRow> rows;
  SuiteArtifacts artifacts;
  try {
    suite = require_field(config, "suite").get<std::string>();
    replicates = static_cast<std::size_t>(config.value("replicates", 20000));
    rows = run_suite(suite, seed, jobs, weight_skew, replicates, &artifacts);
  } catch (const config_error& e) {
    std::fprintf(stderr, "config error: %s\n", e.what());
    result.exit_code = 2;
    return result;
  }

  result.run_dir = make_run_dir(out_root, config);
  CsvWriter csv({"format", "check", "measured", "threshold", "comparator",
                 "pass"});
  bool all_pass = true;
  for (const auto& row : rows) {
    all_pass = all_pass && row.pass;
    std::printf("[%s] %s: measured=%.6g threshold %s %.6g\n",
                row.pass ? "PASS" : "FAIL", row.check.c_str(), row.measured,
                row.comparator.c_str(), row.threshold);
    csv.add_row({"1", row.check, CsvWriter::fmt(row.measured),
                 CsvWriter::fmt(row.threshold), row.comparator,
                 row.pass ? "1" : "0"});
  }
  if (suite == "prop2" && all_pass) {
    std::printf("note: estimator variance across seeds is zero to double "
                "precision (sharp objective)\n");
  }
  csv.write_file(result.run_dir / "report.csv");
  for (const auto& [name, bytes] : artifacts) {
    std::ofstream f(result.run_dir / name, std::ios::binary);
    f << bytes;
  }

  RunManifest manifest;
  manifest.command = "verify";
  manifest.config = config;
  manifest.config_digest = config_digest(config);
  manifest.seed = seed;
  manifest.jobs = jobs;
  manifest.library_version = kVersion;
  manifest.started_at = timestamp_utc_now();
  manifest.outputs = {"report.csv"};
  for (const auto& [name, bytes] : artifacts) manifest.outputs.push_back(name);
  write_manifest(result.run_dir, manifest);

  result.exit_code = all_pass ? 0 : 1;
  return result;
}

namespace {

TrainConfig train_config_from_json(const nlohmann::json& j,
                                   std::uint64_t seed, int jobs) {
  TrainConfig cfg;
  const std::string objective =
      require_field(j, "objective").get<std::string>();
  try {
    cfg.objective = objective_from_string(objective);
  } catch (const std::invalid_argument& e) {
    throw config_error(e.what());
  }
  cfg.n_particles = static_cast<std::size_t>(j.value("n_particles", 4));
  if (j.contains("policy")) cfg.policy = policy_from_json(j.at("policy"));
  if (j.contains("gradient_variant")) {
    try {
      cfg.variant = gradient_variant_from_string(
          j.at("gradient_variant").get<std::string>());
    } catch (const std::invalid_argument& e) {
      throw config_error(e.what());
    }
  }
  cfg.adam.lr = j.value("learning_rate", 1e-3);
  cfg.batch_size = static_cast<std::size_t>(j.value("batch_size", 4));
  cfg.max_steps = static_cast<std::size_t>(j.value("max_steps", 500));
  cfg.validation_every =
      static_cast<std::size_t>(j.value("validation_every", 50));
  cfg.patience = static_cast<std::size_t>(j.value("patience", 5));
  cfg.validation_replicates =
      static_cast<std::size_t>(j.value("validation_replicates", 4));
  cfg.kl_every = static_cast<std::size_t>(j.value("kl_every", 25));
  cfg.train_model = j.value("train_model", true);
  cfg.train_proposal = j.value("train_proposal", true);
  cfg.use_score_baseline = j.value("use_score_baseline", false);
  cfg.seed = seed;
  cfg.jobs = jobs;
  try {
    cfg.validate();
  } catch (const std::invalid_argument& e) {
    throw config_error(e.what());
  }
  return cfg;
}

void split_dataset(const nlohmann::json& config,
                   const SequentialModel& model,
                   std::vector<std::vector<double>>& train_data,
                   std::vector<std::vector<double>>& valid_data) {
  auto data = dataset_from_json(require_field(config, "data"), model);
  if (config.contains("data_valid")) {
    valid_data = dataset_from_json(config.at("data_valid"), model);
    train_data = std::move(data);
    return;
  }
  const double frac = config.value("valid_fraction", 0.2);
  if (!(frac >= 0.0) || frac >= 1.0) {
    throw config_error("valid_fraction: must be in [0, 1)");
  }
  std::size_t n_valid =
      static_cast<std::size_t>(std::llround(frac * static_cast<double>(data.size())));
  if (frac > 0.0 && n_valid == 0 && data.size() > 1) n_valid = 1;
  train_data.assign(data.begin(), data.end() - n_valid);
  valid_data.assign(data.end() - n_valid, data.end());
}

// Shared by train and each sweep cell; writes history/params into `dir`.
int train_into_dir(const nlohmann::json& config, const fs::path& dir,
                   std::uint64_t seed, int jobs, double* best_validation) {
  const auto model = model_from_json(require_field(config, "model"));
  const auto proposal =
      proposal_from_json(require_field(config, "proposal"), *model);
  std::vector<std::vector<double>> train_data, valid_data;
  split_dataset(config, *model, train_data, valid_data);
  const TrainConfig cfg =
      train_config_from_json(require_field(config, "train"), seed, jobs);

  auto write_history = [&dir](const TrainHistory& hist) {
    CsvWriter steps({"format", "step", "objective", "grad_norm_theta",
                     "grad_norm_phi", "kl_q_prior", "resample_count"});
    for (const auto& s : hist.steps) {
      steps.add_row({"1", CsvWriter::fmt(s.step), CsvWriter::fmt(s.objective),
                     CsvWriter::fmt(s.grad_norm_theta),
                     CsvWriter::fmt(s.grad_norm_phi),
                     CsvWriter::fmt(s.kl_q_prior),
                     CsvWriter::fmt(s.resample_count)});
    }
    steps.write_file(dir / "history.csv");
    CsvWriter vals({"format", "step", "bound"});
    for (const auto& v : hist.validations) {
      vals.add_row({"1", CsvWriter::fmt(v.step), CsvWriter::fmt(v.bound)});
    }
    vals.write_file(dir / "validation.csv");
  };

  try {
    TrainResult result =
        train(*model, *proposal, train_data, valid_data, cfg);
    write_history(result.history);
    nlohmann::json params{{"model", model_to_json(*result.model)},
                          {"proposal", proposal_to_json(*result.proposal)},
                          {"best_step", result.history.best_step},
                          {"best_validation", result.history.best_validation}};
    std::ofstream f(dir / "params.json");
    f << params.dump(2) << "\n";
    if (best_validation != nullptr) {
      *best_validation = result.history.best_validation;
    }
    return 0;
  } catch (const train_diverged_error& e) {
    write_history(e.history);
    std::fprintf(stderr, "training aborted: %s\n", e.what());
    return 4;
  }
}

}  // namespace

CliRunResult cmd_train(const nlohmann::json& config, const fs::path& out_root,
                       std::uint64_t seed, int jobs) {
  CliRunResult result;
  try {
    result.run_dir = make_run_dir(out_root, config);
    RunManifest manifest;
    manifest.command = "train";
    manifest.config = config;
    manifest.config_digest = config_digest(config);
    manifest.seed = seed;
    manifest.jobs = jobs;
    manifest.library_version = kVersion;
    manifest.started_at = timestamp_utc_now();
    manifest.extra = {{"adam_beta1", 0.9}, {"adam_beta2", 0.999},
                      {"adam_eps", 1e-8}};
    result.exit_code = train_into_dir(config, result.run_dir, seed, jobs, nullptr);
    manifest.outputs = {"history.csv", "validation.csv"};
    if (result.exit_code == 0) manifest.outputs.push_back("params.json");
    write_manifest(result.run_dir, manifest);
  } catch (const config_error& e) {
    std::fprintf(stderr, "config error: %s\n", e.what());
    result.exit_code = 2;
  }
  return result;
}

CliRunResult cmd_sweep(const nlohmann::json& config, const fs::path& out_root,
                       std::uint64_t seed, int jobs) {
  CliRunResult result;
  try {
    std::vector<double> rates = {3e-4, 1e-4, 3e-5, 1e-5};
    if (config.contains("learning_rates")) {
      rates = config.at("learning_rates").get<std::vector<double>>();
      if (rates.empty()) throw config_error("learning_rates: empty");
    }
    result.run_dir = make_run_dir(out_root, config);

    std::size_t selected = 0;
    double best = -std::numeric_limits<double>::infinity();
    nlohmann::json cells = nlohmann::json::array();
    for (std::size_t i = 0; i < rates.size(); ++i) {
      nlohmann::json cell_config = config;
      cell_config.erase("learning_rates");
      cell_config["train"]["learning_rate"] = rates[i];
      const fs::path cell_dir = result.run_dir / ("run_" + std::to_string(i));
      fs::create_directories(cell_dir);
      double best_validation = -std::numeric_limits<double>::infinity();
      const int code =
          train_into_dir(cell_config, cell_dir, seed, jobs, &best_validation);
      if (code != 0) {
        result.exit_code = code;
      }

      RunManifest cell_manifest;
      cell_manifest.command = "train";
      cell_manifest.config = cell_config;
      cell_manifest.config_digest = config_digest(cell_config);
      cell_manifest.seed = seed;
      cell_manifest.jobs = jobs;
      cell_manifest.library_version = kVersion;
      cell_manifest.started_at = timestamp_utc_now();
      cell_manifest.outputs = {"history.csv", "validation.csv"};
      if (code == 0) cell_manifest.outputs.push_back("params.json");
      write_manifest(cell_dir, cell_manifest);

      cells.push_back({{"learning_rate", rates[i]},
                       {"run_dir", "run_" + std::to_string(i)},
                       {"best_validation", best_validation},
                       {"exit_code", code}});
      if (code == 0 && best_validation > best) {
        best = best_validation;
        selected = i;
      }
    }

    nlohmann::json summary{{"cells", cells},
                           {"selected", selected},
                           {"selected_learning_rate", rates[selected]}};
    std::ofstream f(result.run_dir / "summary.json");
    f << summary.dump(2) << "\n";

    RunManifest manifest;
    manifest.command = "sweep";
    manifest.config = config;
    manifest.config_digest = config_digest(config);
    manifest.seed = seed;
    manifest.jobs = jobs;
    manifest.library_version = kVersion;
    manifest.started_at = timestamp_utc_now();
    manifest.outputs = {"summary.json"};
    write_manifest(result.run_dir, manifest);
  } catch (const config_error& e) {
    std::fprintf(stderr, "config error: %s\n", e.what());
    result.exit_code = 2;
  }
  return result;
}

CliRunResult cmd_replay(const fs::path& manifest_path,
                        const fs::path& out_root, int jobs) {
  CliRunResult result;
  std::ifstream f(manifest_path);
  if (!f) {
    std::fprintf(stderr, "config error: cannot open manifest %s\n",
                 manifest_path.c_str());
    result.exit_code = 2;
    return result;
  }
  nlohmann::json j;
  try {
    f >> j;
    const RunManifest manifest = RunManifest::from_json(j);
    const int use_jobs = jobs > 0 ? jobs : manifest.jobs;
    if (manifest.command == "estimate") {
      return cmd_estimate(manifest.config, out_root, manifest.seed, use_jobs);
    }
    if (manifest.command == "verify") {
      return cmd_verify(manifest.config, out_root, manifest.seed, use_jobs);
    }
    if (manifest.command == "train") {
      return cmd_train(manifest.config, out_root, manifest.seed, use_jobs);
    }
    if (manifest.command == "sweep") {
      return cmd_sweep(manifest.config, out_root, manifest.seed, use_jobs);
    }
    throw config_error("manifest: unknown command " + manifest.command);
  } catch (const nlohmann::json::exception& e) {
    std::fprintf(stderr, "config error: bad manifest: %s\n", e.what());
    result.exit_code = 2;
  } catch (const config_error& e) {
    std::fprintf(stderr, "config error: %s\n", e.what());
    result.exit_code = 2;
  }
  return result;
}

namespace {

nlohmann::json load_config(const std::string& path) {
  std::ifstream f(path);
  if (!f) throw config_error("cannot open config: " + path);
  nlohmann::json j;
  try {
    f >> j;
  } catch (const nlohmann::json::exception& e) {
    throw config_error(std::string("config is not valid JSON: ") + e.what());
  }
  return j;
}

}  // namespace

int run_cli(int argc, char** argv) {
  CLI::App app{"Monte Carlo objectives for sequential latent-variable models"};
  app.require_subcommand(1);

  std::string config_path, out_dir = "runs", suite, manifest_path;
  if (const char* env_out = std::getenv("SEQMCO_OUT")) out_dir = env_out;
  std::uint64_t seed = 0;
  int jobs = 0;
  if (const char* env_jobs = std::getenv("SEQMCO_JOBS")) {
    jobs = std::atoi(env_jobs);
  }
  double weight_skew = 0.0;

  auto add_common = [&](CLI::App* cmd, bool with_config) {
    if (with_config) {
      cmd->add_option("--config", config_path, "JSON config file")
          ->required();
    }
    cmd->add_option("--out", out_dir, "output root directory");
    cmd->add_option("--seed", seed, "master seed");
    cmd->add_option("--jobs", jobs, "worker threads (0 = hardware)");
  };

  CLI::App* estimate = app.add_subcommand("estimate", "estimate bounds");
  add_common(estimate, true);
  CLI::App* verify = app.add_subcommand("verify", "run a verification suite");
  verify->add_option("--config", config_path, "JSON config file");
  verify->add_option("--suite", suite,
                     "suite name (prop1, prop2, unbiasedness, csmc-identity, "
                     "gradients, inverse-moment, variance-scaling)");
  verify->add_option("--out", out_dir, "output root directory");
  verify->add_option("--seed", seed, "master seed");
  verify->add_option("--jobs", jobs, "worker threads (0 = hardware)");
  verify
      ->add_option("--weight-skew", weight_skew,
                   "fault-injection hook: skews particle weights (negative "
                   "control for the suites)")
      ->group("");
  CLI::App* train_cmd = app.add_subcommand("train", "train on a bound");
  add_common(train_cmd, true);
  CLI::App* sweep = app.add_subcommand("sweep", "learning-rate grid search");
  add_common(sweep, true);
  CLI::App* replay = app.add_subcommand("replay", "re-run from a manifest");
  replay->add_option("--manifest", manifest_path, "manifest.json path")
      ->required();
  replay->add_option("--out", out_dir, "output root directory");
  replay->add_option("--jobs", jobs, "worker threads (0 = hardware)");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    return app.exit(e) == 0 ? 0 : 2;
  }

  if (jobs > 0) set_max_jobs(jobs);

  try {
    if (estimate->parsed()) {
      return cmd_estimate(load_config(config_path), out_dir, seed, jobs)
          .exit_code;
    }
    if (verify->parsed()) {
      nlohmann::json config;
      if (!config_path.empty()) {
        config = load_config(config_path);
      }
      if (!suite.empty()) config["suite"] = suite;
      return cmd_verify(config, out_dir, seed, jobs, weight_skew).exit_code;
    }
    if (train_cmd->parsed()) {
      return cmd_train(load_config(config_path), out_dir, seed, jobs)
          .exit_code;
    }
    if (sweep->parsed()) {
      return cmd_sweep(load_config(config_path), out_dir, seed, jobs)
          .exit_code;
    }
    if (replay->parsed()) {
      return cmd_replay(manifest_path, out_dir, jobs).exit_code;
    }
  } catch (const config_error& e) {
    std::fprintf(stderr, "config error: %s\n", e.what());
    return 2;
  } catch (const particle_collapse_error& e) {
    std::fprintf(stderr, "estimator collapse: %s\n", e.what());
    return 3;
  }
  return 2;
}

}  // namespace seqmco
