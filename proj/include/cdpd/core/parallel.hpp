#pragma once

#include <cstdint>

#ifdef _OPENMP
#include <omp.h>
#endif

#include "cdpd/core/common.hpp"

namespace cdpd {

inline int max_threads() {
#ifdef _OPENMP
    return omp_get_max_threads();
#else
    return 1;
#endif
}

inline void set_threads(int n) {
#ifdef _OPENMP
    if (n > 0) omp_set_num_threads(n);
#else
    (void)n;
#endif
}

// Parallel loop over [0, n). Each index is processed by exactly one thread and
// the body must not race with other indices; results are then independent of
// the thread count.
template <class F>
void parallel_for(i64 n, const F& body, i64 grain = 1) {
#ifdef _OPENMP
    if (n >= 2 * grain && max_threads() > 1) {
#pragma omp parallel for schedule(static)
        for (i64 i = 0; i < n; ++i) body(i);
        return;
    }
#endif
    (void)grain;
    for (i64 i = 0; i < n; ++i) body(i);
}

} // namespace cdpd
