#include "seqmco/replicate.hpp"

#include <atomic>
#include <cmath>

namespace seqmco {
namespace {
std::atomic<int> g_max_jobs{0};
}

int max_jobs() {
  const int jobs = g_max_jobs.load();
  return jobs > 0 ? jobs : omp_get_max_threads();
}

void set_max_jobs(int jobs) { g_max_jobs.store(jobs); }

MeanSe mean_and_se(const double* values, std::size_t n) {
  MeanSe out;
  out.count = n;
  if (n == 0) return out;
  double sum = 0.0;
  for (std::size_t i = 0; i < n; ++i) sum += values[i];
  out.mean = sum / static_cast<double>(n);
  if (n >= 2) {
    double ss = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
      const double d = values[i] - out.mean;
      ss += d * d;
    }
    out.se =
        std::sqrt(ss / static_cast<double>(n - 1) / static_cast<double>(n));
  }
  return out;
}

}  // namespace seqmco
