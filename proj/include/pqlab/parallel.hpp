#pragma once

#include <cstddef>

#ifdef _OPENMP
#include <omp.h>
#endif

namespace pqlab {

// threads <= 0 means "library default" (all available).
inline int resolve_threads(int threads) {
#ifdef _OPENMP
  return threads > 0 ? threads : omp_get_max_threads();
#else
  (void)threads;
  return 1;
#endif
}

// Static-schedule parallel loop. Every iteration is independent, so results
// do not depend on the thread count.
template <typename F>
void parallel_for(std::size_t n, int threads, F&& fn) {
  const int nt = resolve_threads(threads);
  (void)nt;
#ifdef _OPENMP
#pragma omp parallel for schedule(static) num_threads(nt)
#endif
  for (long long i = 0; i < static_cast<long long>(n); ++i) {
    fn(static_cast<std::size_t>(i));
  }
}

}  // namespace pqlab
