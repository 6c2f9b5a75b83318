#pragma once

#include <cstdint>

namespace mcf::ad {

// Dense row-major kernels. Reduction order is fixed (ascending index) in all
// variants, so results are bit-identical from run to run.

// C[m,n] (+)= A[m,k] * B[k,n]
void gemm_nn(int64_t m, int64_t k, int64_t n, const double* a, const double* b, double* c, bool accumulate);

// C[m,k] (+)= A[m,n] * B[k,n]^T   (dot products over the shared n axis)
void gemm_nt(int64_t m, int64_t n, int64_t k, const double* a, const double* b, double* c, bool accumulate);

// C[k,n] (+)= A[m,k]^T * B[m,n]
void gemm_tn(int64_t m, int64_t k, int64_t n, const double* a, const double* b, double* c, bool accumulate);

double dot(int64_t n, const double* x, const double* y);
void axpy(int64_t n, double alpha, const double* x, double* y);

}  // namespace mcf::ad
