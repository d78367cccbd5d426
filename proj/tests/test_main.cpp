#define DOCTEST_CONFIG_IMPLEMENT
#include <doctest.h>

#include "lnmdet/gemm.hpp"
#include "lnmdet/threadpool.hpp"

int main(int argc, char** argv) {
    lnmdet::disable_blas_threading();
    lnmdet::ThreadPool::set_global_threads(2);
    doctest::Context context;
    context.applyCommandLine(argc, argv);
    return context.run();
}
