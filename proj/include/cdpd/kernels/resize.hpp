#pragma once

#include "cdpd/core/tensor.hpp"
#include "cdpd/core/parallel.hpp"
#include "cdpd/kernels/conv3d.hpp"

namespace cdpd::kernels {

// Trilinear resize with half-pixel centers, clamped at the borders. Input and
// output are DHWC; channels ride along untouched.

struct LinTap {
    i64 lo, hi;
    double w_hi; // weight of hi; lo gets 1 - w_hi
};

inline LinTap lin_tap(i64 i, i64 out_n, i64 in_n) {
    if (in_n == 1) return {0, 0, 0.0};
    double src = (double(i) + 0.5) * double(in_n) / double(out_n) - 0.5;
    if (src < 0) src = 0;
    if (src > double(in_n - 1)) src = double(in_n - 1);
    i64 lo = i64(src);
    i64 hi = std::min(lo + 1, in_n - 1);
    return {lo, hi, src - double(lo)};
}

namespace par {

template <class T>
Tensor<T> resize_trilinear(const Tensor<T>& x, Dims3 out) {
    const i64 D = x.dim(0), H = x.dim(1), W = x.dim(2), C = x.dim(3);
    Tensor<T> y({out[0], out[1], out[2], C});
    if (Dims3{D, H, W} == out) {
        y = x;
        return y;
    }
    std::vector<LinTap> td(size_t(out[0])), th(size_t(out[1])), tw(size_t(out[2]));
    for (i64 i = 0; i < out[0]; ++i) td[size_t(i)] = lin_tap(i, out[0], D);
    for (i64 i = 0; i < out[1]; ++i) th[size_t(i)] = lin_tap(i, out[1], H);
    for (i64 i = 0; i < out[2]; ++i) tw[size_t(i)] = lin_tap(i, out[2], W);
    parallel_for(out[0] * out[1] * out[2], [&](i64 v) {
        const i64 ow = v % out[2];
        const i64 oh = (v / out[2]) % out[1];
        const i64 od = v / (out[2] * out[1]);
        const LinTap& d = td[size_t(od)];
        const LinTap& h = th[size_t(oh)];
        const LinTap& w = tw[size_t(ow)];
        T* dst = y.data() + v * C;
#pragma omp simd
        for (i64 c = 0; c < C; ++c) dst[c] = T(0);
        for (int bd = 0; bd < 2; ++bd)
            for (int bh = 0; bh < 2; ++bh)
                for (int bw = 0; bw < 2; ++bw) {
                    const double wt = (bd ? d.w_hi : 1 - d.w_hi) * (bh ? h.w_hi : 1 - h.w_hi) *
                                      (bw ? w.w_hi : 1 - w.w_hi);
                    if (wt == 0.0) continue;
                    const T* src = &x.at4(bd ? d.hi : d.lo, bh ? h.hi : h.lo, bw ? w.hi : w.lo, 0);
                    const T f = T(wt);
#pragma omp simd
                    for (i64 c = 0; c < C; ++c) dst[c] += f * src[c];
                }
    }, 16);
    return y;
}

template <class T>
void resize_trilinear_backward(Dims3 in, const Tensor<T>& dy, Tensor<T>* dx) {
    const i64 C = dy.dim(3);
    const Dims3 out{dy.dim(0), dy.dim(1), dy.dim(2)};
    if (in == out) {
        T* dst = dx->data();
        const T* src = dy.data();
        for (i64 i = 0; i < dy.numel(); ++i) dst[i] += src[i];
        return;
    }
    std::vector<LinTap> td(size_t(out[0])), th(size_t(out[1])), tw(size_t(out[2]));
    for (i64 i = 0; i < out[0]; ++i) td[size_t(i)] = lin_tap(i, out[0], in[0]);
    for (i64 i = 0; i < out[1]; ++i) th[size_t(i)] = lin_tap(i, out[1], in[1]);
    for (i64 i = 0; i < out[2]; ++i) tw[size_t(i)] = lin_tap(i, out[2], in[2]);
    // scatter form of the forward taps; kept ordered for determinism
    for (i64 v = 0; v < out[0] * out[1] * out[2]; ++v) {
        const i64 ow = v % out[2];
        const i64 oh = (v / out[2]) % out[1];
        const i64 od = v / (out[2] * out[1]);
        const LinTap& d = td[size_t(od)];
        const LinTap& h = th[size_t(oh)];
        const LinTap& w = tw[size_t(ow)];
        const T* g = dy.data() + v * C;
        for (int bd = 0; bd < 2; ++bd)
            for (int bh = 0; bh < 2; ++bh)
                for (int bw = 0; bw < 2; ++bw) {
                    const double wt = (bd ? d.w_hi : 1 - d.w_hi) * (bh ? h.w_hi : 1 - h.w_hi) *
                                      (bw ? w.w_hi : 1 - w.w_hi);
                    if (wt == 0.0) continue;
                    T* dst = &dx->at4(bd ? d.hi : d.lo, bh ? h.hi : h.lo, bw ? w.hi : w.lo, 0);
                    const T f = T(wt);
#pragma omp simd
                    for (i64 c = 0; c < C; ++c) dst[c] += f * g[c];
                }
    }
}

// Average pooling by integer factors; edge windows are averaged over the
// voxels that exist.
template <class T>
Tensor<T> avgpool3d(const Tensor<T>& x, Dims3 factor) {
    const i64 D = x.dim(0), H = x.dim(1), W = x.dim(2), C = x.dim(3);
    const Dims3 out{ceil_div(D, factor[0]), ceil_div(H, factor[1]), ceil_div(W, factor[2])};
    Tensor<T> y({out[0], out[1], out[2], C});
    parallel_for(out[0] * out[1] * out[2], [&](i64 v) {
        const i64 ow = v % out[2];
        const i64 oh = (v / out[2]) % out[1];
        const i64 od = v / (out[2] * out[1]);
        const i64 d0 = od * factor[0], d1 = std::min(d0 + factor[0], D);
        const i64 h0 = oh * factor[1], h1 = std::min(h0 + factor[1], H);
        const i64 w0 = ow * factor[2], w1 = std::min(w0 + factor[2], W);
        T* dst = y.data() + v * C;
        std::vector<double> acc(size_t(C), 0.0);
        for (i64 d = d0; d < d1; ++d)
            for (i64 h = h0; h < h1; ++h)
                for (i64 w = w0; w < w1; ++w) {
                    const T* src = &x.at4(d, h, w, 0);
                    for (i64 c = 0; c < C; ++c) acc[size_t(c)] += double(src[c]);
                }
        const double inv = 1.0 / double((d1 - d0) * (h1 - h0) * (w1 - w0));
        for (i64 c = 0; c < C; ++c) dst[c] = T(acc[size_t(c)] * inv);
    }, 16);
    return y;
}

template <class T>
void avgpool3d_backward(Dims3 in, Dims3 factor, const Tensor<T>& dy, Tensor<T>* dx) {
    const i64 C = dy.dim(3);
    const Dims3 out{dy.dim(0), dy.dim(1), dy.dim(2)};
    for (i64 v = 0; v < out[0] * out[1] * out[2]; ++v) {
        const i64 ow = v % out[2];
        const i64 oh = (v / out[2]) % out[1];
        const i64 od = v / (out[2] * out[1]);
        const i64 d0 = od * factor[0], d1 = std::min(d0 + factor[0], in[0]);
        const i64 h0 = oh * factor[1], h1 = std::min(h0 + factor[1], in[1]);
        const i64 w0 = ow * factor[2], w1 = std::min(w0 + factor[2], in[2]);
        const T inv = T(1.0 / double((d1 - d0) * (h1 - h0) * (w1 - w0)));
        const T* g = dy.data() + v * C;
        for (i64 d = d0; d < d1; ++d)
            for (i64 h = h0; h < h1; ++h)
                for (i64 w = w0; w < w1; ++w) {
                    T* dst = &dx->at4(d, h, w, 0);
#pragma omp simd
                    for (i64 c = 0; c < C; ++c) dst[c] += g[c] * inv;
                }
    }
}

} // namespace par

namespace serial {

template <class T>
Tensor<T> resize_trilinear(const Tensor<T>& x, Dims3 out) {
    const i64 C = x.dim(3);
    Tensor<T> y({out[0], out[1], out[2], C});
    for (i64 od = 0; od < out[0]; ++od)
        for (i64 oh = 0; oh < out[1]; ++oh)
            for (i64 ow = 0; ow < out[2]; ++ow)
                for (i64 c = 0; c < C; ++c) {
                    const LinTap d = lin_tap(od, out[0], x.dim(0));
                    const LinTap h = lin_tap(oh, out[1], x.dim(1));
                    const LinTap w = lin_tap(ow, out[2], x.dim(2));
                    double acc = 0.0;
                    for (int bd = 0; bd < 2; ++bd)
                        for (int bh = 0; bh < 2; ++bh)
                            for (int bw = 0; bw < 2; ++bw)
                                acc += (bd ? d.w_hi : 1 - d.w_hi) * (bh ? h.w_hi : 1 - h.w_hi) *
                                       (bw ? w.w_hi : 1 - w.w_hi) *
                                       double(x.at4(bd ? d.hi : d.lo, bh ? h.hi : h.lo,
                                                    bw ? w.hi : w.lo, c));
                    y.at4(od, oh, ow, c) = T(acc);
                }
    return y;
}

} // namespace serial

} // namespace cdpd::kernels
