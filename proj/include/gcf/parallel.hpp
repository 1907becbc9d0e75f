#pragma once

#include <cstddef>

#ifdef GCF_HAVE_OPENMP
#include <omp.h>
#endif

namespace gcf {

// Every data-parallel kernel has a serial reference path. Both paths are
// required to produce bit-identical results: parallel loops only ever write
// to per-item slots, and reductions are folded serially in item order.
enum class Execution { Serial, Parallel };

inline int max_threads() {
#ifdef GCF_HAVE_OPENMP
  return omp_get_max_threads();
#else
  return 1;
#endif
}

// Runs body(i) for i in [0, n). The Parallel policy distributes iterations
// across OpenMP threads with a dynamic schedule.
template <class Body>
void for_each_index(Execution exec, std::ptrdiff_t n, Body&& body) {
#ifdef GCF_HAVE_OPENMP
  if (exec == Execution::Parallel && n > 1) {
#pragma omp parallel for schedule(dynamic, 4)
    for (std::ptrdiff_t i = 0; i < n; ++i) body(i);
    return;
  }
#endif
  (void)exec;
  for (std::ptrdiff_t i = 0; i < n; ++i) body(i);
}

}  // namespace gcf
