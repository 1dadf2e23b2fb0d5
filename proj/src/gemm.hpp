// Row-major matrix kernels shared by the dense and convolution ops.
// Each output row is produced by exactly one worker with a fixed serial
// accumulation order, so results are identical for any thread count.
#pragma once

#include <cstddef>

namespace svlab {

// c[m,n] += a[m,k] * b[k,n]
void gemm_nn(size_t m, size_t k, size_t n, const double* a, const double* b, double* c);

// c[m,n] += a[k,m]^T * b[k,n]
void gemm_tn(size_t m, size_t k, size_t n, const double* a, const double* b, double* c);

// c[m,n] += a[m,k] * b[n,k]^T
void gemm_nt(size_t m, size_t k, size_t n, const double* a, const double* b, double* c);

}  // namespace svlab
