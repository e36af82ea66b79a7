#pragma once

#include <exception>

namespace gridcomp::detail {

// OpenMP loop over [0, n) that forwards the first exception to the caller.
template <class Fn>
void parallel_for(int n, Fn&& fn) {
  std::exception_ptr error;
#pragma omp parallel for schedule(dynamic)
  for (int i = 0; i < n; ++i) {
    try {
      fn(i);
    } catch (...) {
#pragma omp critical(gridcomp_parallel_for_error)
      if (!error) error = std::current_exception();
    }
  }
  if (error) std::rethrow_exception(error);
}

}  // namespace gridcomp::detail
