#pragma once

#include <cstdint>
#include <vector>

#include "mcsd/common.hpp"

namespace mcsd {
namespace detail {

// Row-major accumulating GEMM, C += op(A) * op(B). The kernel walks four
// rows of C per pass so each streamed row of B feeds four saxpy updates,
// with K and N blocked to keep the active B panel in cache. Plain scalar
// code on purpose: the compiler vectorizes the inner loop, and results stay
// bit-identical across builds of the same binary.
inline constexpr int64_t kGemmKB = 240;
inline constexpr int64_t kGemmNB = 992;

template <typename T>
void gemm_nn(int64_t M, int64_t N, int64_t K, const T* A, int64_t lda, const T* B, int64_t ldb, T* C, int64_t ldc) {
  for (int64_t j0 = 0; j0 < N; j0 += kGemmNB) {
    const int64_t nb = (j0 + kGemmNB < N) ? kGemmNB : N - j0;
    for (int64_t k0 = 0; k0 < K; k0 += kGemmKB) {
      const int64_t kend = (k0 + kGemmKB < K) ? k0 + kGemmKB : K;
      int64_t i = 0;
      for (; i + 4 <= M; i += 4) {
        T* __restrict c0 = C + (i + 0) * ldc + j0;
        T* __restrict c1 = C + (i + 1) * ldc + j0;
        T* __restrict c2 = C + (i + 2) * ldc + j0;
        T* __restrict c3 = C + (i + 3) * ldc + j0;
        for (int64_t k = k0; k < kend; ++k) {
          const T a0 = A[(i + 0) * lda + k];
          const T a1 = A[(i + 1) * lda + k];
          const T a2 = A[(i + 2) * lda + k];
          const T a3 = A[(i + 3) * lda + k];
          const T* __restrict b = B + k * ldb + j0;
          for (int64_t j = 0; j < nb; ++j) {
            c0[j] += a0 * b[j];
            c1[j] += a1 * b[j];
            c2[j] += a2 * b[j];
            c3[j] += a3 * b[j];
          }
        }
      }
      for (; i < M; ++i) {
        T* __restrict c0 = C + i * ldc + j0;
        for (int64_t k = k0; k < kend; ++k) {
          const T a0 = A[i * lda + k];
          const T* __restrict b = B + k * ldb + j0;
          for (int64_t j = 0; j < nb; ++j) c0[j] += a0 * b[j];
        }
      }
    }
  }
}

// C += A^T * B with A stored K x M. Identical traversal to gemm_nn, the A
// loads just come down a column.
template <typename T>
void gemm_tn(int64_t M, int64_t N, int64_t K, const T* A, int64_t lda, const T* B, int64_t ldb, T* C, int64_t ldc) {
  for (int64_t j0 = 0; j0 < N; j0 += kGemmNB) {
    const int64_t nb = (j0 + kGemmNB < N) ? kGemmNB : N - j0;
    for (int64_t k0 = 0; k0 < K; k0 += kGemmKB) {
      const int64_t kend = (k0 + kGemmKB < K) ? k0 + kGemmKB : K;
      int64_t i = 0;
      for (; i + 4 <= M; i += 4) {
        T* __restrict c0 = C + (i + 0) * ldc + j0;
        T* __restrict c1 = C + (i + 1) * ldc + j0;
        T* __restrict c2 = C + (i + 2) * ldc + j0;
        T* __restrict c3 = C + (i + 3) * ldc + j0;
        for (int64_t k = k0; k < kend; ++k) {
          const T a0 = A[k * lda + (i + 0)];
          const T a1 = A[k * lda + (i + 1)];
          const T a2 = A[k * lda + (i + 2)];
          const T a3 = A[k * lda + (i + 3)];
          const T* __restrict b = B + k * ldb + j0;
          for (int64_t j = 0; j < nb; ++j) {
            c0[j] += a0 * b[j];
            c1[j] += a1 * b[j];
            c2[j] += a2 * b[j];
            c3[j] += a3 * b[j];
          }
        }
      }
      for (; i < M; ++i) {
        T* __restrict c0 = C + i * ldc + j0;
        for (int64_t k = k0; k < kend; ++k) {
          const T a0 = A[k * lda + i];
          const T* __restrict b = B + k * ldb + j0;
          for (int64_t j = 0; j < nb; ++j) c0[j] += a0 * b[j];
        }
      }
    }
  }
}

// C += A * B^T with B stored N x K. A dot-product kernel here runs several
// times slower than the streaming one, so transpose B once and reuse gemm_nn.
template <typename T>
void gemm_nt(int64_t M, int64_t N, int64_t K, const T* A, int64_t lda, const T* B, int64_t ldb, T* C, int64_t ldc) {
  thread_local std::vector<T> scratch;
  scratch.resize(static_cast<size_t>(K) * static_cast<size_t>(N));
  constexpr int64_t TB = 32;
  for (int64_t n0 = 0; n0 < N; n0 += TB) {
    const int64_t nend = (n0 + TB < N) ? n0 + TB : N;
    for (int64_t k0 = 0; k0 < K; k0 += TB) {
      const int64_t kend = (k0 + TB < K) ? k0 + TB : K;
      for (int64_t n = n0; n < nend; ++n) {
        for (int64_t k = k0; k < kend; ++k) scratch[static_cast<size_t>(k) * N + n] = B[n * ldb + k];
      }
    }
  }
  gemm_nn(M, N, K, A, lda, scratch.data(), N, C, ldc);
}

}  // namespace detail
}  // namespace mcsd
