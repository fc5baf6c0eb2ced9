#include "clvlab/parallel.hpp"

#include <omp.h>

namespace clvlab {

void set_thread_limit(int k) {
  if (k > 0) omp_set_num_threads(k);
}

int thread_limit() { return omp_get_max_threads(); }

}  // namespace clvlab
