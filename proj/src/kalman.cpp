#include "seqmco/kalman.hpp"

#include <cmath>

namespace seqmco {

OracleResult kalman_log_marginal(const LgssmParams& p,
                                 std::span<const double> x) {
  p.validate();
  if (x.empty()) {
    throw std::invalid_argument("kalman_log_marginal: empty sequence");
  }
  double log_p = 0.0;
  double m = 0.0, v = 0.0;
  for (std::size_t t = 1; t <= x.size(); ++t) {
    const double m_pred = t == 1 ? 0.0 : p.a * m;
    const double v_pred = t == 1 ? p.var_0 : p.a * p.a * v + p.var_z;
    const double innov_var = p.c * p.c * v_pred + p.var_x;
    log_p += gaussian_logpdf(x[t - 1], p.c * m_pred, innov_var);
    const double gain = v_pred * p.c / innov_var;
    m = m_pred + gain * (x[t - 1] - p.c * m_pred);
    v = (1.0 - gain * p.c) * v_pred;
  }
  return {log_p, OracleMethod::kalman, 0.0};
}

OracleResult conjugate_log_marginal(const ConjugateModel& model,
                                    std::span<const double> x) {
  if (x.empty()) {
    throw std::invalid_argument("conjugate_log_marginal: empty sequence");
  }
  double log_p = 0.0;
  for (std::size_t t = 1; t <= x.size(); ++t) {
    log_p += gaussian_logpdf(x[t - 1], model.step_marginal(t, x));
  }
  return {log_p, OracleMethod::conjugate, 0.0};
}

KalmanMoments kalman_filter_smoother(const LgssmParams& p,
                                     std::span<const double> x) {
  p.validate();
  const std::size_t T = x.size();
  KalmanMoments out;
  out.predicted.resize(T);
  out.filtered.resize(T);
  out.smoothed.resize(T);

  double m = 0.0, v = 0.0;
  for (std::size_t t = 1; t <= T; ++t) {
    const double m_pred = t == 1 ? 0.0 : p.a * m;
    const double v_pred = t == 1 ? p.var_0 : p.a * p.a * v + p.var_z;
    out.predicted[t - 1] = {m_pred, v_pred};
    const double innov_var = p.c * p.c * v_pred + p.var_x;
    out.log_marginal += gaussian_logpdf(x[t - 1], p.c * m_pred, innov_var);
    const double gain = v_pred * p.c / innov_var;
    m = m_pred + gain * (x[t - 1] - p.c * m_pred);
    v = (1.0 - gain * p.c) * v_pred;
    out.filtered[t - 1] = {m, v};
  }

  out.smoothed[T - 1] = out.filtered[T - 1];
  for (std::size_t t = T - 1; t >= 1; --t) {
    const Gaussian& f = out.filtered[t - 1];
    const Gaussian& pred_next = out.predicted[t];
    const Gaussian& sm_next = out.smoothed[t];
    const double gain = f.var * p.a / pred_next.var;
    out.smoothed[t - 1] = {
        f.mean + gain * (sm_next.mean - pred_next.mean),
        f.var + gain * gain * (sm_next.var - pred_next.var)};
  }
  return out;
}

}  // namespace seqmco
