#include "gemm.hpp"

#include "svlab/parallel.hpp"

namespace svlab {

void gemm_nn(size_t m, size_t k, size_t n, const double* a, const double* b, double* c) {
  parallel_for(0, m, [&](size_t row_begin, size_t row_end) {
    for (size_t i = row_begin; i < row_end; ++i) {
      const double* arow = a + i * k;
      double* crow = c + i * n;
      for (size_t p = 0; p < k; ++p) {
        double av = arow[p];
        if (av == 0.0) continue;
        const double* brow = b + p * n;
        for (size_t j = 0; j < n; ++j) crow[j] += av * brow[j];
      }
    }
  });
}

void gemm_tn(size_t m, size_t k, size_t n, const double* a, const double* b, double* c) {
  parallel_for(0, m, [&](size_t row_begin, size_t row_end) {
    for (size_t p = 0; p < k; ++p) {
      const double* arow = a + p * m;
      const double* brow = b + p * n;
      for (size_t i = row_begin; i < row_end; ++i) {
        double av = arow[i];
        if (av == 0.0) continue;
        double* crow = c + i * n;
        for (size_t j = 0; j < n; ++j) crow[j] += av * brow[j];
      }
    }
  });
}

void gemm_nt(size_t m, size_t k, size_t n, const double* a, const double* b, double* c) {
  parallel_for(0, m, [&](size_t row_begin, size_t row_end) {
    for (size_t i = row_begin; i < row_end; ++i) {
      const double* arow = a + i * k;
      double* crow = c + i * n;
      for (size_t j = 0; j < n; ++j) {
        const double* brow = b + j * k;
        double acc = 0.0;
        for (size_t p = 0; p < k; ++p) acc += arow[p] * brow[p];
        crow[j] += acc;
      }
    }
  });
}

}  // namespace svlab
