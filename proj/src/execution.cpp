#include "dispersion/execution.hpp"

#ifdef _OPENMP
#include <omp.h>
#endif

namespace dispersion {

int hardware_threads() {
#ifdef _OPENMP
  return omp_get_max_threads();
#else
  return 1;
#endif
}

}  // namespace dispersion
