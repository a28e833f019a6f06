#include "chartdet/nn/blas.hpp"

#ifdef CHARTDET_HAVE_OPENBLAS_SET_NUM_THREADS
extern "C" void openblas_set_num_threads(int);
#endif

namespace chartdet::nn {

void set_blas_threads(int n) {
#ifdef CHARTDET_HAVE_OPENBLAS_SET_NUM_THREADS
  openblas_set_num_threads(n);
#else
  (void)n;
#endif
}

}  // namespace chartdet::nn
