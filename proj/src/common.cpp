#include "pq/common.hpp"

#include <cstdio>
#include <cstdlib>

#ifdef _OPENMP
#include <omp.h>
#endif

namespace pq {

std::string hex64(std::uint64_t v) {
  char buf[17];
  std::snprintf(buf, sizeof(buf), "%016llx", static_cast<unsigned long long>(v));
  return std::string(buf);
}

int env_threads() {
  if (const char* e = std::getenv("PQ_THREADS")) {
    int n = std::atoi(e);
    if (n > 0) return n;
  }
#ifdef _OPENMP
  return omp_get_max_threads();
#else
  return 1;
#endif
}

void setup_threads() {
#ifdef _OPENMP
  omp_set_num_threads(env_threads());
  // Kernel loops are the only parallel level; nesting would oversubscribe.
  omp_set_max_active_levels(1);
#endif
}

}  // namespace pq
