#pragma once

#include "cdpd/core/common.hpp"
#include "cdpd/core/parallel.hpp"

namespace cdpd::kernels {

// Row-major GEMM in three layouts:
//   nn: C[M,N] (+)= A[M,K]  * B[K,N]
//   nt: C[M,N] (+)= A[M,K]  * B[N,K]^T
//   tn: C[K,N] (+)= A[M,K]^T * B[M,N]
// Every output element is produced by a single thread, so results do not
// depend on the thread count.

namespace serial {

template <class T>
void gemm_nn(i64 M, i64 N, i64 K, const T* A, const T* B, T* C, bool accumulate) {
    for (i64 i = 0; i < M; ++i) {
        for (i64 j = 0; j < N; ++j) {
            double acc = accumulate ? double(C[i * N + j]) : 0.0;
            for (i64 k = 0; k < K; ++k) acc += double(A[i * K + k]) * double(B[k * N + j]);
            C[i * N + j] = T(acc);
        }
    }
}

template <class T>
void gemm_nt(i64 M, i64 N, i64 K, const T* A, const T* B, T* C, bool accumulate) {
    for (i64 i = 0; i < M; ++i) {
        for (i64 j = 0; j < N; ++j) {
            double acc = accumulate ? double(C[i * N + j]) : 0.0;
            for (i64 k = 0; k < K; ++k) acc += double(A[i * K + k]) * double(B[j * K + k]);
            C[i * N + j] = T(acc);
        }
    }
}

template <class T>
void gemm_tn(i64 M, i64 N, i64 K, const T* A, const T* B, T* C, bool accumulate) {
    for (i64 k = 0; k < K; ++k) {
        for (i64 j = 0; j < N; ++j) {
            double acc = accumulate ? double(C[k * N + j]) : 0.0;
            for (i64 m = 0; m < M; ++m) acc += double(A[m * K + k]) * double(B[m * N + j]);
            C[k * N + j] = T(acc);
        }
    }
}

} // namespace serial

namespace par {

namespace detail {

// Register-tiled microkernel: an MR x NR C tile is accumulated in registers
// across the whole K loop, so C memory is touched exactly once per tile.
template <class T, int MR, int NR>
void gemm_nn_tile(i64 i0, i64 j0, i64 K, i64 N, const T* A, const T* B, T* C,
                  bool accumulate) {
    T acc[MR][NR] = {};
    const T* a[MR];
    for (int r = 0; r < MR; ++r) a[r] = A + (i0 + r) * K;
    const T* __restrict bp = B + j0;
    for (i64 k = 0; k < K; ++k, bp += N) {
        for (int r = 0; r < MR; ++r) {
            const T av = a[r][k];
#pragma omp simd
            for (int j = 0; j < NR; ++j) acc[r][j] += av * bp[j];
        }
    }
    for (int r = 0; r < MR; ++r) {
        T* __restrict c = C + (i0 + r) * N + j0;
        if (accumulate) {
#pragma omp simd
            for (int j = 0; j < NR; ++j) c[j] += acc[r][j];
        } else {
#pragma omp simd
            for (int j = 0; j < NR; ++j) c[j] = acc[r][j];
        }
    }
}

// Microkernel over a packed B panel: rows of the panel are NR-contiguous, so
// the k loop walks memory linearly.
template <class T, int MR, int NR>
void gemm_tile_packed(const T* A, i64 lda, const T* Bp, i64 kc, T* C, i64 ldc, i64 cols,
                      bool overwrite) {
    T acc[MR][NR] = {};
    const T* a[MR];
    for (int r = 0; r < MR; ++r) a[r] = A + r * lda;
    const T* __restrict bp = Bp;
    for (i64 k = 0; k < kc; ++k, bp += NR) {
        for (int r = 0; r < MR; ++r) {
            const T av = a[r][k];
#pragma omp simd
            for (int j = 0; j < NR; ++j) acc[r][j] += av * bp[j];
        }
    }
    if (cols == NR) {
        for (int r = 0; r < MR; ++r) {
            T* __restrict c = C + r * ldc;
            if (overwrite) {
#pragma omp simd
                for (int j = 0; j < NR; ++j) c[j] = acc[r][j];
            } else {
#pragma omp simd
                for (int j = 0; j < NR; ++j) c[j] += acc[r][j];
            }
        }
    } else {
        for (int r = 0; r < MR; ++r) {
            T* c = C + r * ldc;
            if (overwrite)
                for (i64 j = 0; j < cols; ++j) c[j] = acc[r][j];
            else
                for (i64 j = 0; j < cols; ++j) c[j] += acc[r][j];
        }
    }
}

template <class T>
constexpr int gemm_nr() { return sizeof(T) == 4 ? 32 : 16; }

// B packed into ceil(N/NR) panels; panel p holds columns [p*NR, p*NR+NR) with
// layout [k][j], zero-padded past N.
template <class T>
void pack_b_panels(i64 K, i64 N, const T* B, std::vector<T>& packed) {
    constexpr int NR = gemm_nr<T>();
    const i64 npanels = ceil_div(N, i64(NR));
    packed.assign(size_t(npanels * K * NR), T(0));
    parallel_for(npanels, [&](i64 p) {
        const i64 j0 = p * NR;
        const i64 cols = std::min<i64>(NR, N - j0);
        T* dst = packed.data() + p * K * NR;
        for (i64 k = 0; k < K; ++k, dst += NR) {
            const T* src = B + k * N + j0;
            for (i64 j = 0; j < cols; ++j) dst[j] = src[j];
        }
    });
}

template <class T, int MR>
void gemm_rows_packed(i64 i0, i64 rows, i64 N, i64 K, const T* A, const T* packedB, T* C,
                      bool accumulate) {
    constexpr int NR = gemm_nr<T>();
    const i64 npanels = ceil_div(N, i64(NR));
    const i64 Kc = 512;
    for (i64 k0 = 0; k0 < K; k0 += Kc) {
        const i64 kc = std::min(Kc, K - k0);
        const bool overwrite = (k0 == 0) && !accumulate;
        i64 i = i0;
        for (; i + MR <= i0 + rows; i += MR) {
            for (i64 p = 0; p < npanels; ++p) {
                const i64 j0 = p * NR;
                gemm_tile_packed<T, MR, NR>(A + i * K + k0, K, packedB + (p * K + k0) * NR, kc,
                                            C + i * N + j0, N, std::min<i64>(NR, N - j0),
                                            overwrite);
            }
        }
        for (; i < i0 + rows; ++i) {
            for (i64 p = 0; p < npanels; ++p) {
                const i64 j0 = p * NR;
                gemm_tile_packed<T, 1, NR>(A + i * K + k0, K, packedB + (p * K + k0) * NR, kc,
                                           C + i * N + j0, N, std::min<i64>(NR, N - j0),
                                           overwrite);
            }
        }
    }
}

} // namespace detail

template <class T>
void gemm_nn_packed(i64 M, i64 N, i64 K, const T* A, const std::vector<T>& packedB, T* C,
                    bool accumulate) {
    constexpr int MR = 8;
    const i64 block = 64;
    parallel_for(ceil_div(M, block), [&](i64 bi) {
        const i64 i0 = bi * block;
        const i64 rows = std::min(block, M - i0);
        detail::gemm_rows_packed<T, MR>(i0, rows, N, K, A, packedB.data(), C, accumulate);
    });
}

template <class T>
void gemm_nn(i64 M, i64 N, i64 K, const T* A, const T* B, T* C, bool accumulate) {
    std::vector<T> packed;
    detail::pack_b_panels(K, N, B, packed);
    gemm_nn_packed(M, N, K, A, packed, C, accumulate);
}

// Blocked transpose: dst[N, M] = src[M, N].
template <class T>
void transpose(i64 M, i64 N, const T* src, T* dst) {
    const i64 B = 32;
    const i64 nblocks = ceil_div(M, B);
    parallel_for(nblocks, [&](i64 bi) {
        const i64 i0 = bi * B, i1 = std::min(i0 + B, M);
        for (i64 j0 = 0; j0 < N; j0 += B) {
            const i64 j1 = std::min(j0 + B, N);
            for (i64 i = i0; i < i1; ++i)
                for (i64 j = j0; j < j1; ++j) dst[j * M + i] = src[i * N + j];
        }
    });
}

template <class T>
void gemm_nt(i64 M, i64 N, i64 K, const T* A, const T* B, T* C, bool accumulate) {
    constexpr int VL = sizeof(T) == 4 ? 16 : 8;
    const i64 jmain = (N / 4) * 4;
    parallel_for(ceil_div(M, 4), [&](i64 bi) {
        const i64 i0 = bi * 4, i1 = std::min(i0 + 4, M);
        for (i64 i = i0; i < i1; ++i) {
            const T* __restrict a = A + i * K;
            T* __restrict c = C + i * N;
            for (i64 j = 0; j < jmain; j += 4) {
                const T* __restrict b0 = B + (j + 0) * K;
                const T* __restrict b1 = B + (j + 1) * K;
                const T* __restrict b2 = B + (j + 2) * K;
                const T* __restrict b3 = B + (j + 3) * K;
                T v0[VL] = {}, v1[VL] = {}, v2[VL] = {}, v3[VL] = {};
                i64 k = 0;
                for (; k + VL <= K; k += VL) {
#pragma omp simd
                    for (int v = 0; v < VL; ++v) {
                        v0[v] += a[k + v] * b0[k + v];
                        v1[v] += a[k + v] * b1[k + v];
                        v2[v] += a[k + v] * b2[k + v];
                        v3[v] += a[k + v] * b3[k + v];
                    }
                }
                T s0 = 0, s1 = 0, s2 = 0, s3 = 0;
                for (int v = 0; v < VL; ++v) {
                    s0 += v0[v]; s1 += v1[v]; s2 += v2[v]; s3 += v3[v];
                }
                for (; k < K; ++k) {
                    s0 += a[k] * b0[k];
                    s1 += a[k] * b1[k];
                    s2 += a[k] * b2[k];
                    s3 += a[k] * b3[k];
                }
                if (accumulate) {
                    c[j + 0] += s0; c[j + 1] += s1; c[j + 2] += s2; c[j + 3] += s3;
                } else {
                    c[j + 0] = s0; c[j + 1] = s1; c[j + 2] = s2; c[j + 3] = s3;
                }
            }
            for (i64 j = jmain; j < N; ++j) {
                const T* __restrict b = B + j * K;
                T s = 0;
#pragma omp simd reduction(+ : s)
                for (i64 k = 0; k < K; ++k) s += a[k] * b[k];
                if (accumulate) c[j] += s;
                else c[j] = s;
            }
        }
    });
}

// A-columns become rows via slab transposes, then the fast nn path runs.
template <class T>
void gemm_tn(i64 M, i64 N, i64 K, const T* A, const T* B, T* C, bool accumulate) {
    const i64 slab = std::max<i64>(64, std::min<i64>(M, (i64(4) << 20) / (K * i64(sizeof(T)) + 1)));
    std::vector<T> at(size_t(K * std::min(slab, M)));
    std::vector<T> packed;
    for (i64 m0 = 0; m0 < M; m0 += slab) {
        const i64 rows = std::min(slab, M - m0);
        transpose(rows, K, A + m0 * K, at.data());
        detail::pack_b_panels(rows, N, B + m0 * N, packed);
        gemm_nn_packed(K, N, rows, at.data(), packed, C, accumulate || m0 > 0);
    }
}

} // namespace par

} // namespace cdpd::kernels
