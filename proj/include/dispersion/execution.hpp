#pragma once

#include <cstddef>
#include <cstdint>

namespace dispersion {

/// Selects between the OpenMP kernels and their serial reference versions.
/// Both paths must produce bit-identical results; the serial path exists for
/// testing and benchmarking.
enum class Execution { Serial, Parallel };

/// Runs fn(i) for i in [0, n). Iterations must be independent: each writes
/// only to its own output slots.
template <class Fn>
void for_each_index(Execution exec, std::size_t n, Fn&& fn) {
  if (exec == Execution::Parallel) {
    const auto count = static_cast<std::int64_t>(n);
#pragma omp parallel for schedule(dynamic, 1)
    for (std::int64_t i = 0; i < count; ++i) fn(static_cast<std::size_t>(i));
  } else {
    for (std::size_t i = 0; i < n; ++i) fn(i);
  }
}

int hardware_threads();

}  // namespace dispersion
