#pragma once

#include <array>
#include <cstring>

#include "cdpd/core/tensor.hpp"
#include "cdpd/kernels/gemm.hpp"

namespace cdpd::kernels {

using Dims3 = std::array<i64, 3>;

struct Conv3dSpec {
    Dims3 kernel{3, 3, 3};
    Dims3 stride{1, 1, 1};
    Dims3 pad{1, 1, 1};
};

inline Dims3 same_padding(Dims3 kernel) {
    return {(kernel[0] - 1) / 2, (kernel[1] - 1) / 2, (kernel[2] - 1) / 2};
}

inline Dims3 conv_out_dims(Dims3 in, const Conv3dSpec& s) {
    Dims3 out;
    for (int a = 0; a < 3; ++a) {
        i64 span = in[size_t(a)] + 2 * s.pad[size_t(a)] - s.kernel[size_t(a)];
        CDPD_CHECK(span >= 0, "conv3d: input ", in[size_t(a)], " too small for kernel axis ", a);
        out[size_t(a)] = span / s.stride[size_t(a)] + 1;
    }
    return out;
}

// Weights are stored as {kd, kh, kw, Cin, Cout}: flattening the first four
// axes gives the im2col K dimension, so the kernel is a plain GEMM operand.

namespace detail {

template <class T>
void im2col_rows(const Tensor<T>& x, const Conv3dSpec& s, Dims3 out, i64 row0, i64 rows,
                 T* col) {
    const i64 H = x.dim(1), W = x.dim(2), C = x.dim(3);
    const i64 D = x.dim(0);
    const i64 OH = out[1], OW = out[2];
    const i64 K = s.kernel[0] * s.kernel[1] * s.kernel[2] * C;
    parallel_for(rows, [&](i64 r) {
        const i64 v = row0 + r;
        const i64 ow = v % OW;
        const i64 oh = (v / OW) % OH;
        const i64 od = v / (OW * OH);
        T* dst = col + r * K;
        for (i64 kd = 0; kd < s.kernel[0]; ++kd) {
            const i64 id = od * s.stride[0] - s.pad[0] + kd;
            for (i64 kh = 0; kh < s.kernel[1]; ++kh) {
                const i64 ih = oh * s.stride[1] - s.pad[1] + kh;
                for (i64 kw = 0; kw < s.kernel[2]; ++kw) {
                    const i64 iw = ow * s.stride[2] - s.pad[2] + kw;
                    if (id >= 0 && id < D && ih >= 0 && ih < H && iw >= 0 && iw < W) {
                        std::memcpy(dst, &x.at4(id, ih, iw, 0), size_t(C) * sizeof(T));
                    } else {
                        std::memset(dst, 0, size_t(C) * sizeof(T));
                    }
                    dst += C;
                }
            }
        }
    }, 8);
}

inline i64 conv_chunk_rows(i64 K, i64 total) {
    const i64 budget = i64(8) << 20; // 8 MB column buffer
    i64 rows = budget / (K * i64(sizeof(float)));
    if (rows < 64) rows = 64;
    if (rows > total) rows = total;
    return rows;
}

} // namespace detail

namespace par {

template <class T>
Tensor<T> conv3d(const Tensor<T>& x, const Tensor<T>& w, const Tensor<T>* bias,
                 const Conv3dSpec& s) {
    CDPD_CHECK(x.rank() == 4, "conv3d expects DHWC input, got ", shape_str(x.shape()));
    CDPD_CHECK(w.rank() == 5 && w.dim(0) == s.kernel[0] && w.dim(1) == s.kernel[1] &&
                   w.dim(2) == s.kernel[2] && w.dim(3) == x.dim(3),
               "conv3d: weight shape ", shape_str(w.shape()), " incompatible with input ",
               shape_str(x.shape()));
    const i64 Cin = x.dim(3), Cout = w.dim(4);
    const Dims3 out = conv_out_dims({x.dim(0), x.dim(1), x.dim(2)}, s);
    Tensor<T> y({out[0], out[1], out[2], Cout});
    const i64 K = s.kernel[0] * s.kernel[1] * s.kernel[2] * Cin;
    const i64 total = out[0] * out[1] * out[2];
    if (total == 0) return y;

    std::vector<T> w_packed;
    par::detail::pack_b_panels(K, Cout, w.data(), w_packed);
    const bool pointwise = (K == Cin && s.stride == Dims3{1, 1, 1} && s.pad == Dims3{0, 0, 0});
    if (pointwise) {
        gemm_nn_packed(total, Cout, K, x.data(), w_packed, y.data(), false);
    } else {
        const i64 chunk = kernels::detail::conv_chunk_rows(K, total);
        Tensor<T> col({chunk, K});
        for (i64 row0 = 0; row0 < total; row0 += chunk) {
            const i64 rows = std::min(chunk, total - row0);
            kernels::detail::im2col_rows(x, s, out, row0, rows, col.data());
            gemm_nn_packed(rows, Cout, K, col.data(), w_packed, y.data() + row0 * Cout, false);
        }
    }
    if (bias) {
        const T* b = bias->data();
        parallel_for(total, [&](i64 v) {
            T* row = y.data() + v * Cout;
#pragma omp simd
            for (i64 c = 0; c < Cout; ++c) row[c] += b[c];
        }, 64);
    }
    return y;
}

// Gradients w.r.t. input, weights and bias. dW/db are accumulated into.
template <class T>
void conv3d_backward(const Tensor<T>& x, const Tensor<T>& w, const Conv3dSpec& s,
                     const Tensor<T>& dy, Tensor<T>* dx, Tensor<T>* dw, Tensor<T>* db) {
    const i64 Cin = x.dim(3), Cout = w.dim(4);
    const Dims3 out = conv_out_dims({x.dim(0), x.dim(1), x.dim(2)}, s);
    const i64 total = out[0] * out[1] * out[2];
    const i64 K = s.kernel[0] * s.kernel[1] * s.kernel[2] * Cin;
    CDPD_CHECK(dy.numel() == total * Cout, "conv3d_backward: dy shape mismatch");

    if (db) {
        for (i64 v = 0; v < total; ++v) {
            const T* row = dy.data() + v * Cout;
            T* g = db->data();
            for (i64 c = 0; c < Cout; ++c) g[c] += row[c];
        }
    }

    // dX contributions run through W^T so the wide GEMM keeps the fast layout.
    std::vector<T> wt_packed;
    if (dx) {
        std::vector<T> wt(size_t(K * Cout));
        transpose(K, Cout, w.data(), wt.data());
        par::detail::pack_b_panels(Cout, K, wt.data(), wt_packed);
    }

    const bool pointwise = (K == Cin && s.stride == Dims3{1, 1, 1} && s.pad == Dims3{0, 0, 0});
    if (pointwise) {
        if (dw) gemm_tn(total, Cout, K, x.data(), dy.data(), dw->data(), true);
        if (dx) gemm_nn_packed(total, K, Cout, dy.data(), wt_packed, dx->data(), true);
        return;
    }

    const i64 chunk = kernels::detail::conv_chunk_rows(K, total);
    Tensor<T> col({chunk, K});
    Tensor<T> dcol;
    if (dx) dcol = Tensor<T>({chunk, K});
    const i64 D = x.dim(0), H = x.dim(1), W = x.dim(2);

    for (i64 row0 = 0; row0 < total; row0 += chunk) {
        const i64 rows = std::min(chunk, total - row0);
        if (dw) {
            kernels::detail::im2col_rows(x, s, out, row0, rows, col.data());
            gemm_tn(rows, Cout, K, col.data(), dy.data() + row0 * Cout, dw->data(), true);
        }
        if (dx) {
            gemm_nn_packed(rows, K, Cout, dy.data() + row0 * Cout, wt_packed, dcol.data(),
                           false);
            // col2im scatter; rows overlap in the input grid, so this part stays ordered.
            for (i64 r = 0; r < rows; ++r) {
                const i64 v = row0 + r;
                const i64 ow = v % out[2];
                const i64 oh = (v / out[2]) % out[1];
                const i64 od = v / (out[2] * out[1]);
                const T* src = dcol.data() + r * K;
                for (i64 kd = 0; kd < s.kernel[0]; ++kd) {
                    const i64 id = od * s.stride[0] - s.pad[0] + kd;
                    for (i64 kh = 0; kh < s.kernel[1]; ++kh) {
                        const i64 ih = oh * s.stride[1] - s.pad[1] + kh;
                        for (i64 kw = 0; kw < s.kernel[2]; ++kw, src += Cin) {
                            const i64 iw = ow * s.stride[2] - s.pad[2] + kw;
                            if (id < 0 || id >= D || ih < 0 || ih >= H || iw < 0 || iw >= W)
                                continue;
                            T* dst = &dx->at4(id, ih, iw, 0);
#pragma omp simd
                            for (i64 c = 0; c < Cin; ++c) dst[c] += src[c];
                        }
                    }
                }
            }
        }
    }
}

} // namespace par

namespace serial {

// Direct seven-loop reference used by the kernel equivalence tests.
template <class T>
Tensor<T> conv3d(const Tensor<T>& x, const Tensor<T>& w, const Tensor<T>* bias,
                 const Conv3dSpec& s) {
    const i64 D = x.dim(0), H = x.dim(1), W = x.dim(2), Cin = x.dim(3);
    const i64 Cout = w.dim(4);
    const Dims3 out = conv_out_dims({D, H, W}, s);
    Tensor<T> y({out[0], out[1], out[2], Cout});
    for (i64 od = 0; od < out[0]; ++od)
        for (i64 oh = 0; oh < out[1]; ++oh)
            for (i64 ow = 0; ow < out[2]; ++ow)
                for (i64 co = 0; co < Cout; ++co) {
                    double acc = bias ? double((*bias)[co]) : 0.0;
                    for (i64 kd = 0; kd < s.kernel[0]; ++kd)
                        for (i64 kh = 0; kh < s.kernel[1]; ++kh)
                            for (i64 kw = 0; kw < s.kernel[2]; ++kw) {
                                const i64 id = od * s.stride[0] - s.pad[0] + kd;
                                const i64 ih = oh * s.stride[1] - s.pad[1] + kh;
                                const i64 iw = ow * s.stride[2] - s.pad[2] + kw;
                                if (id < 0 || id >= D || ih < 0 || ih >= H || iw < 0 || iw >= W)
                                    continue;
                                for (i64 ci = 0; ci < Cin; ++ci)
                                    acc += double(x.at4(id, ih, iw, ci)) *
                                           double(w[(((kd * s.kernel[1] + kh) * s.kernel[2] + kw) *
                                                         Cin +
                                                     ci) *
                                                       Cout +
                                                   co]);
                            }
                    y.at4(od, oh, ow, co) = T(acc);
                }
    return y;
}

} // namespace serial

} // namespace cdpd::kernels
