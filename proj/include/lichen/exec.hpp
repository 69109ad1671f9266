#pragma once

#ifdef _OPENMP
#include <omp.h>
#endif

namespace lichen {

// Selects between the OpenMP kernel and its serial reference. The serial
// paths are kept for testing and benchmarking; both must produce identical
// output.
enum class Exec { Serial, Parallel };

inline int maxThreads() {
#ifdef _OPENMP
    return omp_get_max_threads();
#else
    return 1;
#endif
}

inline void setThreads(int n) {
#ifdef _OPENMP
    if (n > 0) omp_set_num_threads(n);
#else
    (void)n;
#endif
}

} // namespace lichen
