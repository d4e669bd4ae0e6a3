#pragma once

#include <cstddef>
#include <exception>
#include <utility>

#include <omp.h>

namespace seqmco {

// Worker-count default used when a caller passes jobs = 0. Set once by the
// CLI from --jobs / SEQMCO_JOBS.
int max_jobs();
void set_max_jobs(int jobs);

// Serial reference for the parallel kernels below. Kept (and tested against
// the OpenMP path) so layout-independence of results is a checked property,
// not an assumption.
template <typename F>
void serial_for(std::size_t n, F&& fn) {
  for (std::size_t i = 0; i < n; ++i) fn(i);
}

// Data-parallel loop over independent replicates. fn(i) must touch only
// state owned by index i (typically out[i] plus a stream derived as
// base.substream(i)); under that contract results are bit-identical for any
// worker count, including the serial path.
template <typename F>
void parallel_for(std::size_t n, F&& fn, int jobs = 0) {
  const int threads = jobs > 0 ? jobs : max_jobs();
  if (threads <= 1) {
    serial_for(n, std::forward<F>(fn));
    return;
  }
  // Exceptions may not unwind out of an OpenMP region; capture the first
  // one and rethrow after the join.
  std::exception_ptr error;
#pragma omp parallel for schedule(static) num_threads(threads)
  for (long long i = 0; i < static_cast<long long>(n); ++i) {
    try {
      fn(static_cast<std::size_t>(i));
    } catch (...) {
#pragma omp critical(seqmco_parallel_for_error)
      if (!error) error = std::current_exception();
    }
  }
  if (error) std::rethrow_exception(error);
}

struct MeanSe {
  double mean = 0.0;
  double se = 0.0;
  std::size_t count = 0;
};

// Mean and standard error in index order (deterministic reduction).
MeanSe mean_and_se(const double* values, std::size_t n);

}  // namespace seqmco
