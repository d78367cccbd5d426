#include "lnmdet/gemm.hpp"

extern "C" void openblas_set_num_threads(int);

namespace lnmdet {

void disable_blas_threading() { openblas_set_num_threads(1); }

}  // namespace lnmdet
