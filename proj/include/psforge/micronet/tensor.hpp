#pragma once

#include <cstddef>
#include <vector>

namespace psforge {

// Batch of CHW feature maps, sample-major, contiguous.
template <typename T>
struct Batch {
    int n = 0, c = 0, h = 0, w = 0;
    std::vector<T> data;

    Batch() = default;
    Batch(int n_, int c_, int h_, int w_)
        : n(n_), c(c_), h(h_), w(w_), data(size_t(n_) * c_ * h_ * w_, T(0)) {}

    size_t sample_size() const { return size_t(c) * h * w; }
    T* sample(int i) { return data.data() + size_t(i) * sample_size(); }
    const T* sample(int i) const { return data.data() + size_t(i) * sample_size(); }
    bool same_shape(const Batch& o) const { return n == o.n && c == o.c && h == o.h && w == o.w; }
};

// Row-major GEMM kernels, accumulate form. Register-tiled micro-kernels with
// fixed lane assignment: every output element is reduced in one fixed index
// order, so results do not depend on threading or batch splits, and the
// compiler can vectorize without reassociating ad-hoc reductions.

namespace gemm_detail {

// C tile (MR x NR) += A rows * B panel, accumulators held across the K loop
template <typename T, int MR, int NR>
inline void tile_ab(int K, const T* __restrict a, size_t lda, const T* __restrict b, size_t ldb,
                    T* __restrict c, size_t ldc) {
    T acc[MR][NR] = {};
    for (int k = 0; k < K; ++k) {
        T bv[NR];
#pragma GCC unroll 16
        for (int j = 0; j < NR; ++j) bv[j] = b[size_t(k) * ldb + j];
#pragma GCC unroll 4
        for (int i = 0; i < MR; ++i) {
            const T av = a[size_t(i) * lda + k];
#pragma GCC unroll 16
            for (int j = 0; j < NR; ++j) acc[i][j] += av * bv[j];
        }
    }
    for (int i = 0; i < MR; ++i)
        for (int j = 0; j < NR; ++j) c[size_t(i) * ldc + j] += acc[i][j];
}

// one C row += one A row times B, for row tails
template <typename T>
inline void row_ab(int N, int K, const T* __restrict arow, const T* __restrict b, size_t ldb,
                   T* __restrict crow) {
    for (int k = 0; k < K; ++k) {
        const T av = arow[k];
        if (av == T(0)) continue;
        const T* __restrict brow = b + size_t(k) * ldb;
        for (int n = 0; n < N; ++n) crow[n] += av * brow[n];
    }
}

// fixed-lane dot product
template <typename T>
inline T dot(int K, const T* __restrict a, const T* __restrict b) {
    constexpr int L = 16;
    T acc[L] = {};
    int k = 0;
    for (; k + L <= K; k += L)
#pragma GCC unroll 16
        for (int j = 0; j < L; ++j) acc[j] += a[k + j] * b[k + j];
    T tail = 0;
    for (; k < K; ++k) tail += a[k] * b[k];
    T s = 0;
    for (int j = 0; j < L; ++j) s += acc[j];
    return s + tail;
}

// four dot products over a 2x2 row tile, lanes fixed
template <typename T>
inline void dot2x2(int K, const T* __restrict a0, const T* __restrict a1, const T* __restrict b0,
                   const T* __restrict b1, T out[2][2]) {
    constexpr int L = 8;
    T acc[2][2][L] = {};
    int k = 0;
    for (; k + L <= K; k += L) {
#pragma GCC unroll 8
        for (int j = 0; j < L; ++j) {
            const T av0 = a0[k + j], av1 = a1[k + j];
            const T bv0 = b0[k + j], bv1 = b1[k + j];
            acc[0][0][j] += av0 * bv0;
            acc[0][1][j] += av0 * bv1;
            acc[1][0][j] += av1 * bv0;
            acc[1][1][j] += av1 * bv1;
        }
    }
    T tail[2][2] = {};
    for (; k < K; ++k) {
        tail[0][0] += a0[k] * b0[k];
        tail[0][1] += a0[k] * b1[k];
        tail[1][0] += a1[k] * b0[k];
        tail[1][1] += a1[k] * b1[k];
    }
    for (int i = 0; i < 2; ++i)
        for (int j = 0; j < 2; ++j) {
            T s = 0;
            for (int l = 0; l < L; ++l) s += acc[i][j][l];
            out[i][j] = s + tail[i][j];
        }
}

template <typename T>
inline void ab_rows(int m0, int m1, int N, int K, const T* __restrict a, const T* __restrict b,
                    T* __restrict c) {
    constexpr int MR = 4, NR = 16;
    int m = m0;
    for (; m + MR <= m1; m += MR) {
        int n = 0;
        for (; n + NR <= N; n += NR)
            tile_ab<T, MR, NR>(K, a + size_t(m) * K, size_t(K), b + n, size_t(N),
                               c + size_t(m) * N + n, size_t(N));
        for (int mm = m; mm < m + MR && n < N; ++mm)
            for (int k = 0; k < K; ++k) {
                const T av = a[size_t(mm) * K + k];
                if (av == T(0)) continue;
                const T* __restrict brow = b + size_t(k) * N;
                T* __restrict crow = c + size_t(mm) * N;
                for (int nn = n; nn < N; ++nn) crow[nn] += av * brow[nn];
            }
    }
    for (; m < m1; ++m) row_ab(N, K, a + size_t(m) * K, b, size_t(N), c + size_t(m) * N);
}

template <typename T>
inline void abt_rows(int m0, int m1, int N, int K, const T* __restrict a, const T* __restrict b,
                     T* __restrict c) {
    int m = m0;
    for (; m + 2 <= m1; m += 2) {
        const T* a0 = a + size_t(m) * K;
        const T* a1 = a0 + K;
        T* c0 = c + size_t(m) * N;
        T* c1 = c0 + N;
        int n = 0;
        for (; n + 2 <= N; n += 2) {
            T out[2][2];
            dot2x2(K, a0, a1, b + size_t(n) * K, b + size_t(n + 1) * K, out);
            c0[n] += out[0][0];
            c0[n + 1] += out[0][1];
            c1[n] += out[1][0];
            c1[n + 1] += out[1][1];
        }
        for (; n < N; ++n) {
            c0[n] += dot(K, a0, b + size_t(n) * K);
            c1[n] += dot(K, a1, b + size_t(n) * K);
        }
    }
    for (; m < m1; ++m)
        for (int n = 0; n < N; ++n)
            c[size_t(m) * N + n] += dot(K, a + size_t(m) * K, b + size_t(n) * K);
}

}  // namespace gemm_detail

// --- serial kernels (callers parallelize over samples) -----------------------

// C(MxN) += A(MxK) * B(KxN)
template <typename T>
void gemm_ab_serial(int M, int N, int K, const T* a, const T* b, T* c) {
    gemm_detail::ab_rows(0, M, N, K, a, b, c);
}

// C(MxN) += A(MxK) * B(NxK)^T
template <typename T>
void gemm_abt_serial(int M, int N, int K, const T* a, const T* b, T* c) {
    gemm_detail::abt_rows(0, M, N, K, a, b, c);
}

// --- parallel kernels: independent output rows per thread --------------------

template <typename T>
void gemm_ab(int M, int N, int K, const T* a, const T* b, T* c) {
    const int strip = 8;
    const int nstrips = (M + strip - 1) / strip;
#pragma omp parallel for schedule(static) if (nstrips >= 2)
    for (int s = 0; s < nstrips; ++s)
        gemm_detail::ab_rows(s * strip, std::min(M, (s + 1) * strip), N, K, a, b, c);
}

template <typename T>
void gemm_abt(int M, int N, int K, const T* a, const T* b, T* c) {
    const int strip = 8;
    const int nstrips = (M + strip - 1) / strip;
#pragma omp parallel for schedule(static) if (nstrips >= 2)
    for (int s = 0; s < nstrips; ++s)
        gemm_detail::abt_rows(s * strip, std::min(M, (s + 1) * strip), N, K, a, b, c);
}

// C(MxN) += A(KxM)^T * B(KxN); column blocks keep each element's reduction
// serial in k order
template <typename T>
void gemm_atb(int M, int N, int K, const T* a, const T* b, T* c) {
    const int block = 1024;
    const int nblocks = (N + block - 1) / block;
#pragma omp parallel for schedule(static) if (nblocks >= 2)
    for (int nb = 0; nb < nblocks; ++nb) {
        const int n0 = nb * block;
        const int n1 = n0 + block < N ? n0 + block : N;
        for (int k = 0; k < K; ++k) {
            const T* __restrict arow = a + size_t(k) * M;
            const T* __restrict brow = b + size_t(k) * N;
            for (int m = 0; m < M; ++m) {
                const T av = arow[m];
                if (av == T(0)) continue;
                T* __restrict crow = c + size_t(m) * N;
                for (int n = n0; n < n1; ++n) crow[n] += av * brow[n];
            }
        }
    }
}

}  // namespace psforge
