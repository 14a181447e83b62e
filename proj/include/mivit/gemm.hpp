#pragma once

#include <cstdint>

namespace mivit {

// C[M,N] = A[M,K] * B[K,N] (+ C if accumulate), all row-major contiguous.
// Register-blocked so the compiler can keep the accumulator tile in vector
// registers; no reassociation of any single dot product, so results are
// bit-reproducible run to run.
template <typename T>
void gemm(const T* __restrict__ a, const T* __restrict__ b, T* __restrict__ c,
          int m, int k, int n, bool accumulate) {
  constexpr int MR = 8;
  constexpr int NR = 128 / sizeof(T);  // two 512-bit vectors per accumulator row

  int i = 0;
  for (; i + MR <= m; i += MR) {
    int j = 0;
    for (; j + NR <= n; j += NR) {
      T acc[MR][NR];
      for (int mi = 0; mi < MR; ++mi)
        for (int ni = 0; ni < NR; ++ni)
          acc[mi][ni] = accumulate ? c[(i + mi) * static_cast<int64_t>(n) + j + ni] : T(0);
      for (int kk = 0; kk < k; ++kk) {
        const T* brow = b + kk * static_cast<int64_t>(n) + j;
        for (int mi = 0; mi < MR; ++mi) {
          const T av = a[(i + mi) * static_cast<int64_t>(k) + kk];
          for (int ni = 0; ni < NR; ++ni) acc[mi][ni] += av * brow[ni];
        }
      }
      for (int mi = 0; mi < MR; ++mi)
        for (int ni = 0; ni < NR; ++ni)
          c[(i + mi) * static_cast<int64_t>(n) + j + ni] = acc[mi][ni];
    }
    // right edge
    for (; j < n; ++j) {
      for (int mi = 0; mi < MR; ++mi) {
        T acc = accumulate ? c[(i + mi) * static_cast<int64_t>(n) + j] : T(0);
        for (int kk = 0; kk < k; ++kk)
          acc += a[(i + mi) * static_cast<int64_t>(k) + kk] * b[kk * static_cast<int64_t>(n) + j];
        c[(i + mi) * static_cast<int64_t>(n) + j] = acc;
      }
    }
  }
  // bottom edge
  for (; i < m; ++i) {
    for (int j = 0; j < n; ++j) {
      T acc = accumulate ? c[i * static_cast<int64_t>(n) + j] : T(0);
      for (int kk = 0; kk < k; ++kk)
        acc += a[i * static_cast<int64_t>(k) + kk] * b[kk * static_cast<int64_t>(n) + j];
      c[i * static_cast<int64_t>(n) + j] = acc;
    }
  }
}

template <typename T>
void transpose(const T* __restrict__ src, T* __restrict__ dst, int rows, int cols) {
  for (int r = 0; r < rows; ++r)
    for (int c = 0; c < cols; ++c)
      dst[static_cast<int64_t>(c) * rows + r] = src[static_cast<int64_t>(r) * cols + c];
}

}  // namespace mivit
