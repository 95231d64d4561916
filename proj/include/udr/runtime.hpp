#pragma once

#include <cstdint>

namespace udr::runtime {

// When false, every kernel runs single-threaded. Parallel kernels are written
// so each output element is produced by exactly one thread with a fixed inner
// reduction order, so results are bit-identical either way; the flag exists to
// force the strictly serial path.
bool parallel_enabled();
void set_parallel(bool on);

int max_threads();

struct SerialGuard {
  SerialGuard() : prev_(parallel_enabled()) { set_parallel(false); }
  ~SerialGuard() { set_parallel(prev_); }

 private:
  bool prev_;
};

}  // namespace udr::runtime

namespace udr {

// Runs fn(i) for i in [0, n). Uses OpenMP when parallelism is enabled.
// fn must write only to locations owned by index i.
template <typename F>
void parallel_for(std::int64_t n, F&& fn) {
  if (runtime::parallel_enabled() && n > 1) {
#pragma omp parallel for schedule(static)
    for (std::int64_t i = 0; i < n; ++i) fn(i);
  } else {
    for (std::int64_t i = 0; i < n; ++i) fn(i);
  }
}

}  // namespace udr
