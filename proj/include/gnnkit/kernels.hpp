#pragma once

#include <algorithm>
#include <cstddef>
#include <cstdint>
#include <vector>

#ifdef _OPENMP
#include <omp.h>
#endif

// Dense and sparse inner loops shared by the tensor ops.  All kernels
// accumulate into pre-initialized output buffers and keep a fixed per-row
// reduction order, so results are identical for any thread count.

namespace gnnkit::kernels {

// C(m x n) += A(m x k) * B(k x n).
// Zero entries of A are skipped; sparse feature matrices stored densely make
// this the dominant case in citation workloads.
template <class T>
void gemm_nn_acc(const T* a, const T* b, T* c, std::int64_t m, std::int64_t k,
                 std::int64_t n) {
#pragma omp parallel for schedule(static) if (m > 1 && m * k * n > 32768)
  for (std::int64_t i = 0; i < m; ++i) {
    const T* arow = a + i * k;
    T* crow = c + i * n;
    for (std::int64_t p = 0; p < k; ++p) {
      const T av = arow[p];
      if (av == T(0)) continue;
      const T* brow = b + p * n;
      for (std::int64_t j = 0; j < n; ++j) crow[j] += av * brow[j];
    }
  }
}

// C(m x k) += A(m x n) * B(k x n)^T, i.e. C[i][l] = dot(A[i], B[l]).
template <class T>
void gemm_nt_acc(const T* a, const T* b, T* c, std::int64_t m, std::int64_t n,
                 std::int64_t k) {
#pragma omp parallel for schedule(static) if (m > 1 && m * k * n > 32768)
  for (std::int64_t i = 0; i < m; ++i) {
    const T* arow = a + i * n;
    T* crow = c + i * k;
    for (std::int64_t l = 0; l < k; ++l) {
      const T* brow = b + l * n;
      T acc = T(0);
      for (std::int64_t j = 0; j < n; ++j) acc += arow[j] * brow[j];
      crow[l] += acc;
    }
  }
}

// C(k x n) += A(m x k)^T * B(m x n).  Zero-skip on A.  Every row of A
// scatters into all of C, so threads accumulate into private buffers that are
// reduced in thread order; results are reproducible for a fixed thread count.
template <class T>
void gemm_tn_serial(const T* a, const T* b, T* c, std::int64_t m,
                    std::int64_t k, std::int64_t n) {
  for (std::int64_t i = 0; i < m; ++i) {
    const T* arow = a + i * k;
    const T* brow = b + i * n;
    for (std::int64_t p = 0; p < k; ++p) {
      const T av = arow[p];
      if (av == T(0)) continue;
      T* crow = c + p * n;
      for (std::int64_t j = 0; j < n; ++j) crow[j] += av * brow[j];
    }
  }
}

template <class T>
void gemm_tn_acc(const T* a, const T* b, T* c, std::int64_t m, std::int64_t k,
                 std::int64_t n) {
#ifdef _OPENMP
  if (m > 512 && m * k * n > 262144) {
    const int threads = omp_get_max_threads();
    std::vector<std::vector<T>> scratch(threads);
#pragma omp parallel num_threads(threads)
    {
      const int t = omp_get_thread_num();
      const std::int64_t chunk = (m + threads - 1) / threads;
      const std::int64_t lo = t * chunk;
      const std::int64_t hi = std::min<std::int64_t>(m, lo + chunk);
      if (lo < hi) {
        scratch[t].assign(static_cast<std::size_t>(k * n), T(0));
        gemm_tn_serial(a + lo * k, b + lo * n, scratch[t].data(), hi - lo, k, n);
      }
    }
    for (int t = 0; t < threads; ++t) {
      if (scratch[t].empty()) continue;
      for (std::int64_t i = 0; i < k * n; ++i) c[i] += scratch[t][i];
    }
    return;
  }
#endif
  gemm_tn_serial(a, b, c, m, k, n);
}

// out(rows x c) += S * H for a square CSR operator S with double weights.
template <class T>
void spmm_acc(const std::size_t* row_ptr, const std::uint32_t* col,
              const double* val, std::int64_t rows, const T* h, std::int64_t c,
              T* out) {
#pragma omp parallel for schedule(static) if (rows > 256)
  for (std::int64_t i = 0; i < rows; ++i) {
    T* orow = out + i * c;
    for (std::size_t e = row_ptr[i]; e < row_ptr[i + 1]; ++e) {
      const T w = static_cast<T>(val[e]);
      const T* hrow = h + static_cast<std::int64_t>(col[e]) * c;
      for (std::int64_t j = 0; j < c; ++j) orow[j] += w * hrow[j];
    }
  }
}

}  // namespace gnnkit::kernels
