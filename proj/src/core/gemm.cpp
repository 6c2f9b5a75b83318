#include "core/gemm.hpp"

#include <algorithm>
#include <cstring>

namespace mcf::ad {

double dot(int64_t n, const double* x, const double* y) {
  // Eight independent accumulators so the loop vectorizes without FP
  // reassociation; the summation order is fixed and reproducible.
  double s0 = 0, s1 = 0, s2 = 0, s3 = 0, s4 = 0, s5 = 0, s6 = 0, s7 = 0;
  int64_t i = 0;
  for (; i + 8 <= n; i += 8) {
    s0 += x[i] * y[i];
    s1 += x[i + 1] * y[i + 1];
    s2 += x[i + 2] * y[i + 2];
    s3 += x[i + 3] * y[i + 3];
    s4 += x[i + 4] * y[i + 4];
    s5 += x[i + 5] * y[i + 5];
    s6 += x[i + 6] * y[i + 6];
    s7 += x[i + 7] * y[i + 7];
  }
  double tail = 0.0;
  for (; i < n; ++i) tail += x[i] * y[i];
  return (((s0 + s1) + (s2 + s3)) + ((s4 + s5) + (s6 + s7))) + tail;
}

void axpy(int64_t n, double alpha, const double* x, double* y) {
  for (int64_t i = 0; i < n; ++i) y[i] += alpha * x[i];
}

void gemm_nn(int64_t m, int64_t k, int64_t n, const double* a, const double* b, double* c, bool accumulate) {
  if (!accumulate) std::memset(c, 0, static_cast<size_t>(m * n) * sizeof(double));
  if (n == 1) {
    // Matrix-vector: contiguous dot per output row.
    for (int64_t i = 0; i < m; ++i) c[i] += dot(k, a + i * k, b);
    return;
  }
  // Blocked saxpy form: the B panel stays in cache across the i loop while
  // each C row slice stays in L1 across the kk loop. Per-element summation
  // order over kk is ascending regardless of block sizes.
  constexpr int64_t kb_max = 128;
  constexpr int64_t nb_max = 512;
  for (int64_t j0 = 0; j0 < n; j0 += nb_max) {
    const int64_t nb = std::min(nb_max, n - j0);
    for (int64_t k0 = 0; k0 < k; k0 += kb_max) {
      const int64_t kb = std::min(kb_max, k - k0);
      for (int64_t i = 0; i < m; ++i) {
        double* crow = c + i * n + j0;
        const double* arow = a + i * k + k0;
        for (int64_t kk = 0; kk < kb; ++kk) {
          const double av = arow[kk];
          const double* brow = b + (k0 + kk) * n + j0;
          for (int64_t j = 0; j < nb; ++j) crow[j] += av * brow[j];
        }
      }
    }
  }
}

void gemm_nt(int64_t m, int64_t n, int64_t k, const double* a, const double* b, double* c, bool accumulate) {
  for (int64_t i = 0; i < m; ++i) {
    const double* arow = a + i * n;
    double* crow = c + i * k;
    for (int64_t kk = 0; kk < k; ++kk) {
      const double v = dot(n, arow, b + kk * n);
      crow[kk] = accumulate ? crow[kk] + v : v;
    }
  }
}

void gemm_tn(int64_t m, int64_t k, int64_t n, const double* a, const double* b, double* c, bool accumulate) {
  if (!accumulate) std::memset(c, 0, static_cast<size_t>(k * n) * sizeof(double));
  for (int64_t kk = 0; kk < k; ++kk) {
    double* crow = c + kk * n;
    for (int64_t i = 0; i < m; ++i) {
      const double av = a[i * k + kk];
      const double* brow = b + i * n;
      for (int64_t j = 0; j < n; ++j) crow[j] += av * brow[j];
    }
  }
}

}  // namespace mcf::ad
