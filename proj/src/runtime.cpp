#include "udr/runtime.hpp"

#include <atomic>

#ifdef _OPENMP
#include <omp.h>
#endif

namespace udr::runtime {

namespace {
std::atomic<bool> g_parallel{true};
}

bool parallel_enabled() { return g_parallel.load(std::memory_order_relaxed); }
void set_parallel(bool on) { g_parallel.store(on, std::memory_order_relaxed); }

int max_threads() {
#ifdef _OPENMP
  return omp_get_max_threads();
#else
  return 1;
#endif
}

}  // namespace udr::runtime
