#pragma once

#include "cdpd/kernels/conv3d.hpp"

namespace cdpd::kernels {

// Depthwise 3D convolution, stride 1, same padding. Weights are {kd,kh,kw,C}.

namespace par {

template <class T>
Tensor<T> depthwise3d(const Tensor<T>& x, const Tensor<T>& w, const Tensor<T>* bias) {
    CDPD_CHECK(x.rank() == 4 && w.rank() == 4 && w.dim(3) == x.dim(3),
               "depthwise3d: weight ", shape_str(w.shape()), " vs input ", shape_str(x.shape()));
    const i64 D = x.dim(0), H = x.dim(1), W = x.dim(2), C = x.dim(3);
    const Dims3 k{w.dim(0), w.dim(1), w.dim(2)};
    const Dims3 pad = same_padding(k);
    Tensor<T> y({D, H, W, C});
    parallel_for(D * H * W, [&](i64 v) {
        const i64 iw = v % W;
        const i64 ih = (v / W) % H;
        const i64 id = v / (W * H);
        T* out = y.data() + v * C;
        if (bias) {
            const T* b = bias->data();
#pragma omp simd
            for (i64 c = 0; c < C; ++c) out[c] = b[c];
        }
        for (i64 kd = 0; kd < k[0]; ++kd) {
            const i64 sd = id - pad[0] + kd;
            if (sd < 0 || sd >= D) continue;
            for (i64 kh = 0; kh < k[1]; ++kh) {
                const i64 sh = ih - pad[1] + kh;
                if (sh < 0 || sh >= H) continue;
                for (i64 kw = 0; kw < k[2]; ++kw) {
                    const i64 sw = iw - pad[2] + kw;
                    if (sw < 0 || sw >= W) continue;
                    const T* src = &x.at4(sd, sh, sw, 0);
                    const T* wt = w.data() + ((kd * k[1] + kh) * k[2] + kw) * C;
#pragma omp simd
                    for (i64 c = 0; c < C; ++c) out[c] += src[c] * wt[c];
                }
            }
        }
    }, 16);
    return y;
}

template <class T>
void depthwise3d_backward(const Tensor<T>& x, const Tensor<T>& w, const Tensor<T>& dy,
                          Tensor<T>* dx, Tensor<T>* dw, Tensor<T>* db) {
    const i64 D = x.dim(0), H = x.dim(1), W = x.dim(2), C = x.dim(3);
    const Dims3 k{w.dim(0), w.dim(1), w.dim(2)};
    const Dims3 pad = same_padding(k);
    const i64 total = D * H * W;
    for (i64 v = 0; v < total; ++v) {
        const i64 iw = v % W;
        const i64 ih = (v / W) % H;
        const i64 id = v / (W * H);
        const T* g = dy.data() + v * C;
        if (db) {
            T* b = db->data();
            for (i64 c = 0; c < C; ++c) b[c] += g[c];
        }
        for (i64 kd = 0; kd < k[0]; ++kd) {
            const i64 sd = id - pad[0] + kd;
            if (sd < 0 || sd >= D) continue;
            for (i64 kh = 0; kh < k[1]; ++kh) {
                const i64 sh = ih - pad[1] + kh;
                if (sh < 0 || sh >= H) continue;
                for (i64 kw = 0; kw < k[2]; ++kw) {
                    const i64 sw = iw - pad[2] + kw;
                    if (sw < 0 || sw >= W) continue;
                    const i64 woff = ((kd * k[1] + kh) * k[2] + kw) * C;
                    if (dx) {
                        T* dst = &dx->at4(sd, sh, sw, 0);
                        const T* wt = w.data() + woff;
#pragma omp simd
                        for (i64 c = 0; c < C; ++c) dst[c] += g[c] * wt[c];
                    }
                    if (dw) {
                        const T* src = &x.at4(sd, sh, sw, 0);
                        T* wg = dw->data() + woff;
#pragma omp simd
                        for (i64 c = 0; c < C; ++c) wg[c] += g[c] * src[c];
                    }
                }
            }
        }
    }
}

} // namespace par

namespace serial {

template <class T>
Tensor<T> depthwise3d(const Tensor<T>& x, const Tensor<T>& w, const Tensor<T>* bias) {
    const i64 D = x.dim(0), H = x.dim(1), W = x.dim(2), C = x.dim(3);
    const Dims3 k{w.dim(0), w.dim(1), w.dim(2)};
    const Dims3 pad = same_padding(k);
    Tensor<T> y({D, H, W, C});
    for (i64 id = 0; id < D; ++id)
        for (i64 ih = 0; ih < H; ++ih)
            for (i64 iw = 0; iw < W; ++iw)
                for (i64 c = 0; c < C; ++c) {
                    double acc = bias ? double((*bias)[c]) : 0.0;
                    for (i64 kd = 0; kd < k[0]; ++kd)
                        for (i64 kh = 0; kh < k[1]; ++kh)
                            for (i64 kw = 0; kw < k[2]; ++kw) {
                                const i64 sd = id - pad[0] + kd;
                                const i64 sh = ih - pad[1] + kh;
                                const i64 sw = iw - pad[2] + kw;
                                if (sd < 0 || sd >= D || sh < 0 || sh >= H || sw < 0 || sw >= W)
                                    continue;
                                acc += double(x.at4(sd, sh, sw, c)) *
                                       double(w[((kd * k[1] + kh) * k[2] + kw) * C + c]);
                            }
                    y.at4(id, ih, iw, c) = T(acc);
                }
    return y;
}

} // namespace serial

} // namespace cdpd::kernels
