#pragma once

#include <cmath>
#include <stdexcept>

namespace seqmco {

inline constexpr double kLog2Pi = 1.8378770664093454835606594728112;

struct Gaussian {
  double mean = 0.0;
  double var = 1.0;

  double std_dev() const { return std::sqrt(var); }
};

inline double gaussian_logpdf(double x, double mean, double var) {
  const double r = x - mean;
  return -0.5 * (kLog2Pi + std::log(var) + r * r / var);
}

inline double gaussian_logpdf(double x, const Gaussian& g) {
  return gaussian_logpdf(x, g.mean, g.var);
}

// z = mean + std * noise; differentiable with d/dmean = 1, d/dstd = noise.
inline double gaussian_reparameterize(double mean, double std_dev,
                                      double noise) {
  if (!(std_dev > 0.0)) {
    throw std::domain_error("gaussian_reparameterize: std must be positive");
  }
  return mean + std_dev * noise;
}

// KL(N(m_q, v_q) || N(m_p, v_p)).
inline double gaussian_kl(const Gaussian& q, const Gaussian& p) {
  const double r = q.mean - p.mean;
  return 0.5 * (std::log(p.var / q.var) + (q.var + r * r) / p.var - 1.0);
}

// Partials of log N(x; m, s^2) used by the analytic gradient paths.
// d/dm = (x-m)/s^2, d/dlog s = ((x-m)/s)^2 - 1, d/dx = -(x-m)/s^2.
inline double dlogpdf_dmean(double x, double mean, double var) {
  return (x - mean) / var;
}
inline double dlogpdf_dlogstd(double x, double mean, double var) {
  const double r = x - mean;
  return r * r / var - 1.0;
}

}  // namespace seqmco
