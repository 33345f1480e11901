#pragma once

#include "cdpd/kernels/conv3d.hpp"

namespace cdpd::kernels {

// Transposed convolution restricted to kernel == stride (the only form the
// decoder uses). Without tap overlap each output voxel depends on exactly one
// input voxel, so the whole op is one GEMM per kernel parity.

inline Dims3 tconv_out_dims(Dims3 in, Dims3 stride) {
    return {in[0] * stride[0], in[1] * stride[1], in[2] * stride[2]};
}

namespace par {

template <class T>
Tensor<T> tconv3d(const Tensor<T>& x, const Tensor<T>& w, const Tensor<T>* bias, Dims3 stride) {
    CDPD_CHECK(x.rank() == 4, "tconv3d expects DHWC input");
    CDPD_CHECK(w.rank() == 5 && w.dim(0) == stride[0] && w.dim(1) == stride[1] &&
                   w.dim(2) == stride[2] && w.dim(3) == x.dim(3),
               "tconv3d: weight shape ", shape_str(w.shape()), " must be stride x Cin x Cout");
    const i64 Cin = x.dim(3), Cout = w.dim(4);
    const i64 ID = x.dim(0), IH = x.dim(1), IW = x.dim(2);
    const Dims3 out = tconv_out_dims({ID, IH, IW}, stride);
    Tensor<T> y({out[0], out[1], out[2], Cout});
    const i64 M = ID * IH * IW;
    Tensor<T> tmp({M, Cout});
    std::vector<T> packed;
    for (i64 pd = 0; pd < stride[0]; ++pd)
        for (i64 ph = 0; ph < stride[1]; ++ph)
            for (i64 pw = 0; pw < stride[2]; ++pw) {
                const T* wp = w.data() + (((pd * stride[1] + ph) * stride[2] + pw) * Cin) * Cout;
                par::detail::pack_b_panels(Cin, Cout, wp, packed);
                gemm_nn_packed(M, Cout, Cin, x.data(), packed, tmp.data(), false);
                parallel_for(M, [&](i64 v) {
                    const i64 iw = v % IW;
                    const i64 ih = (v / IW) % IH;
                    const i64 id = v / (IW * IH);
                    T* dst = &y.at4(id * stride[0] + pd, ih * stride[1] + ph,
                                    iw * stride[2] + pw, 0);
                    const T* src = tmp.data() + v * Cout;
                    const T* b = bias ? bias->data() : nullptr;
#pragma omp simd
                    for (i64 c = 0; c < Cout; ++c) dst[c] = src[c] + (b ? b[c] : T(0));
                }, 64);
            }
    return y;
}

template <class T>
void tconv3d_backward(const Tensor<T>& x, const Tensor<T>& w, Dims3 stride, const Tensor<T>& dy,
                      Tensor<T>* dx, Tensor<T>* dw, Tensor<T>* db) {
    const i64 Cin = x.dim(3), Cout = w.dim(4);
    const i64 ID = x.dim(0), IH = x.dim(1), IW = x.dim(2);
    const i64 M = ID * IH * IW;
    Tensor<T> dyp({M, Cout});
    std::vector<T> packed;
    std::vector<T> wt(size_t(Cin * Cout));
    for (i64 pd = 0; pd < stride[0]; ++pd)
        for (i64 ph = 0; ph < stride[1]; ++ph)
            for (i64 pw = 0; pw < stride[2]; ++pw) {
                // gather this parity's dy rows
                parallel_for(M, [&](i64 v) {
                    const i64 iw = v % IW;
                    const i64 ih = (v / IW) % IH;
                    const i64 id = v / (IW * IH);
                    const T* src = &dy.at4(id * stride[0] + pd, ih * stride[1] + ph,
                                           iw * stride[2] + pw, 0);
                    T* dst = dyp.data() + v * Cout;
#pragma omp simd
                    for (i64 c = 0; c < Cout; ++c) dst[c] = src[c];
                }, 64);
                const i64 woff = (((pd * stride[1] + ph) * stride[2] + pw) * Cin) * Cout;
                if (dw) gemm_tn(M, Cout, Cin, x.data(), dyp.data(), dw->data() + woff, true);
                if (dx) {
                    transpose(Cin, Cout, w.data() + woff, wt.data());
                    par::detail::pack_b_panels(Cout, Cin, wt.data(), packed);
                    gemm_nn_packed(M, Cin, Cout, dyp.data(), packed, dx->data(), true);
                }
                if (db) {
                    T* g = db->data();
                    for (i64 v = 0; v < M; ++v) {
                        const T* row = dyp.data() + v * Cout;
                        for (i64 c = 0; c < Cout; ++c) g[c] += row[c];
                    }
                }
            }
}

} // namespace par

namespace serial {

template <class T>
Tensor<T> tconv3d(const Tensor<T>& x, const Tensor<T>& w, const Tensor<T>* bias, Dims3 stride) {
    const i64 Cin = x.dim(3), Cout = w.dim(4);
    const Dims3 out = tconv_out_dims({x.dim(0), x.dim(1), x.dim(2)}, stride);
    Tensor<T> y({out[0], out[1], out[2], Cout});
    for (i64 od = 0; od < out[0]; ++od)
        for (i64 oh = 0; oh < out[1]; ++oh)
            for (i64 ow = 0; ow < out[2]; ++ow) {
                const i64 id = od / stride[0], pd = od % stride[0];
                const i64 ih = oh / stride[1], ph = oh % stride[1];
                const i64 iw = ow / stride[2], pw = ow % stride[2];
                for (i64 co = 0; co < Cout; ++co) {
                    double acc = bias ? double((*bias)[co]) : 0.0;
                    for (i64 ci = 0; ci < Cin; ++ci)
                        acc += double(x.at4(id, ih, iw, ci)) *
                               double(w[(((pd * stride[1] + ph) * stride[2] + pw) * Cin + ci) *
                                            Cout +
                                        co]);
                    y.at4(od, oh, ow, co) = T(acc);
                }
            }
    return y;
}

} // namespace serial

} // namespace cdpd::kernels
