#include "seqmco/quadrature.hpp"

#include <algorithm>
#include <cmath>

#include "seqmco/logspace.hpp"

namespace seqmco {
namespace {

double run_grid(const SequentialModel& model, std::span<const double> x,
                double lo, double hi, std::size_t points) {
  const std::size_t T = x.size();
  const double dz = (hi - lo) / static_cast<double>(points - 1);
  std::vector<double> grid(points);
  for (std::size_t j = 0; j < points; ++j) {
    grid[j] = lo + dz * static_cast<double>(j);
  }
  auto log_weight = [&](std::size_t j) {
    return (j == 0 || j + 1 == points) ? std::log(dz / 2.0) : std::log(dz);
  };

  // hist carries only the two latents a Markov conditional can read.
  std::vector<double> hist;
  std::vector<double> log_f(points), log_f_next(points), terms(points);

  for (std::size_t j = 0; j < points; ++j) {
    hist.assign(1, grid[j]);
    log_f[j] = model.log_joint_step(1, x, hist) + log_weight(j);
  }
  for (std::size_t t = 2; t <= T; ++t) {
    hist.assign(t, 0.0);
    for (std::size_t j = 0; j < points; ++j) {
      hist[t - 1] = grid[j];
      for (std::size_t i = 0; i < points; ++i) {
        hist[t - 2] = grid[i];
        terms[i] = log_f[i] + model.log_joint_step(t, x, hist);
      }
      log_f_next[j] = log_sum_exp(terms) + log_weight(j);
    }
    std::swap(log_f, log_f_next);
  }
  return log_sum_exp(log_f);
}

}  // namespace

OracleResult quadrature_log_marginal(const SequentialModel& model,
                                     std::span<const double> x,
                                     const GridSpec& grid) {
  if (x.empty()) {
    throw std::invalid_argument("quadrature_log_marginal: empty sequence");
  }
  if (x.size() > 4) {
    throw std::invalid_argument(
        "quadrature_log_marginal: T > 4 refused (grid blowup)");
  }
  if (grid.points < 9 || !(grid.hi > grid.lo)) {
    throw std::invalid_argument("quadrature_log_marginal: bad grid spec");
  }
  const double fine = run_grid(model, x, grid.lo, grid.hi, grid.points);
  const double coarse =
      run_grid(model, x, grid.lo, grid.hi, grid.points / 2 + 1);
  return {fine, OracleMethod::quadrature, std::abs(fine - coarse)};
}

GridSpec default_grid_for(const SequentialModel& model,
                          std::span<const double> x) {
  // Crude forward envelope of the prior moments (zero history), widened by
  // the observation span; the +/- 8 sigma margin keeps Gaussian tail mass
  // outside the grid below 1e-14.
  double lo = 0.0, hi = 0.0, var_sum = 0.0;
  std::vector<double> zero_hist(x.size(), 0.0);
  for (std::size_t t = 1; t <= x.size(); ++t) {
    const Gaussian prior =
        model.latent_prior(t, x, std::span(zero_hist).subspan(0, t - 1));
    var_sum += prior.var;
    lo = std::min({lo, prior.mean, x[t - 1]});
    hi = std::max({hi, prior.mean, x[t - 1]});
  }
  const double spread = std::sqrt(var_sum) + 1.0;
  return {lo - 8.0 * spread, hi + 8.0 * spread, 801};
}

}  // namespace seqmco
