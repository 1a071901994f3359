#pragma once

#include <algorithm>
#include <cstddef>
#include <cstring>

namespace ssmg::detail {

template <typename T>
struct Vec64;
template <>
struct Vec64<float> {
    typedef float type __attribute__((vector_size(64)));
};
template <>
struct Vec64<double> {
    typedef double type __attribute__((vector_size(64)));
};

// R rows by JB columns, accumulators as a plain array the compiler keeps in registers.
template <std::size_t R, std::size_t JB, typename T>
inline void gemm_tile(const T* a, std::size_t lda, const T* b, std::size_t ldb, T* c, std::size_t ldc, std::size_t k) {
    T acc[R][JB] = {};
    for (std::size_t kk = 0; kk < k; ++kk) {
        const T* __restrict bk = b + kk * ldb;
        for (std::size_t r = 0; r < R; ++r) {
            const T ar = a[r * lda + kk];
            for (std::size_t jj = 0; jj < JB; ++jj) acc[r][jj] += ar * bk[jj];
        }
    }
    for (std::size_t r = 0; r < R; ++r) std::copy(acc[r], acc[r] + JB, c + r * ldc);
}

// R rows by one 64-byte vector of columns.
template <std::size_t R, typename T>
inline void gemm_vector_tile(const T* __restrict a, std::size_t lda, const T* __restrict b, std::size_t ldb,
                             T* __restrict c, std::size_t ldc, std::size_t k) {
    using V = typename Vec64<T>::type;
    V acc[R] = {};
    for (std::size_t kk = 0; kk < k; ++kk) {
        V bv;
        std::memcpy(&bv, b + kk * ldb, sizeof(V));
        for (std::size_t r = 0; r < R; ++r) acc[r] += a[r * lda + kk] * bv;
    }
    for (std::size_t r = 0; r < R; ++r) std::memcpy(c + r * ldc, &acc[r], sizeof(V));
}

// c[i,:] = sum_k a[i,k] * b[k,:], every element accumulated from zero in increasing k.
// A row computed alone is therefore bitwise equal to the same row computed inside a
// larger batch, which stepwise decoding relies on. All tile shapes and the scalar
// tail use the same per-element order.
template <typename T>
void rowwise_gemm(const T* a, std::size_t lda, const T* b, std::size_t ldb, T* c, std::size_t ldc, std::size_t m,
                  std::size_t k, std::size_t n) {
    constexpr std::size_t JB = 64, W = 64 / sizeof(T);
    const std::size_t wide = n / JB * JB, vec = wide + (n - wide) / W * W;
    std::size_t i = 0;
    for (; i + 4 <= m; i += 4) {
        for (std::size_t j = 0; j < wide; j += JB) gemm_tile<4, JB>(a + i * lda, lda, b + j, ldb, c + i * ldc + j, ldc, k);
    }
    for (; i < m; ++i) {
        for (std::size_t j = 0; j < wide; j += JB) gemm_tile<1, JB>(a + i * lda, lda, b + j, ldb, c + i * ldc + j, ldc, k);
    }
    for (std::size_t j = wide; j < vec; j += W) {
        i = 0;
        for (; i + 8 <= m; i += 8) gemm_vector_tile<8>(a + i * lda, lda, b + j, ldb, c + i * ldc + j, ldc, k);
        for (; i < m; ++i) gemm_vector_tile<1>(a + i * lda, lda, b + j, ldb, c + i * ldc + j, ldc, k);
    }
    if (vec == n) return;
    for (i = 0; i < m; ++i) {
        T* __restrict ci = c + i * ldc;
        std::fill(ci + vec, ci + n, T(0));
        const T* ai = a + i * lda;
        for (std::size_t kk = 0; kk < k; ++kk) {
            const T aik = ai[kk];
            const T* __restrict bk = b + kk * ldb;
            for (std::size_t j = vec; j < n; ++j) ci[j] += aik * bk[j];
        }
    }
}

}  // namespace ssmg::detail
