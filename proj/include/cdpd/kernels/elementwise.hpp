#pragma once

#include <cmath>

#include "cdpd/core/tensor.hpp"
#include "cdpd/core/parallel.hpp"

namespace cdpd::kernels {

template <class T>
void leaky_relu_forward(const T* x, T* y, i64 n, T slope) {
    parallel_for(ceil_div(n, i64(4096)), [&](i64 b) {
        const i64 i0 = b * 4096, i1 = std::min(i0 + 4096, n);
#pragma omp simd
        for (i64 i = i0; i < i1; ++i) y[i] = x[i] > T(0) ? x[i] : slope * x[i];
    });
}

template <class T>
void leaky_relu_backward(const T* x, const T* dy, T* dx, i64 n, T slope) {
    for (i64 i = 0; i < n; ++i) dx[i] += x[i] > T(0) ? dy[i] : slope * dy[i];
}

template <class T>
void sigmoid_forward(const T* x, T* y, i64 n) {
    parallel_for(ceil_div(n, i64(4096)), [&](i64 b) {
        const i64 i0 = b * 4096, i1 = std::min(i0 + 4096, n);
        for (i64 i = i0; i < i1; ++i) y[i] = T(1) / (T(1) + std::exp(-x[i]));
    });
}

// Row-wise softmax over an M x N matrix; sums are double-accumulated.
template <class T>
void softmax_rows_forward(const T* x, T* y, i64 M, i64 N) {
    parallel_for(M, [&](i64 i) {
        const T* xi = x + i * N;
        T* yi = y + i * N;
        T mx = xi[0];
        for (i64 j = 1; j < N; ++j) mx = std::max(mx, xi[j]);
        double sum = 0.0;
        for (i64 j = 0; j < N; ++j) {
            yi[j] = std::exp(xi[j] - mx);
            sum += double(yi[j]);
        }
        const T inv = T(1.0 / sum);
#pragma omp simd
        for (i64 j = 0; j < N; ++j) yi[j] *= inv;
    }, 8);
}

template <class T>
void softmax_rows_backward(const T* y, const T* dy, T* dx, i64 M, i64 N) {
    parallel_for(M, [&](i64 i) {
        const T* yi = y + i * N;
        const T* gi = dy + i * N;
        T* di = dx + i * N;
        double dot = 0.0;
        for (i64 j = 0; j < N; ++j) dot += double(gi[j]) * double(yi[j]);
        const T d = T(dot);
#pragma omp simd
        for (i64 j = 0; j < N; ++j) di[j] += yi[j] * (gi[j] - d);
    }, 8);
}

// Channel-wise affine modulation of a DHWC volume: y[v,c] = x[v,c]*s[c] + t[c].
template <class T>
void film_forward(const T* x, const T* s, const T* t, T* y, i64 voxels, i64 C) {
    parallel_for(voxels, [&](i64 v) {
        const T* xi = x + v * C;
        T* yi = y + v * C;
#pragma omp simd
        for (i64 c = 0; c < C; ++c) yi[c] = xi[c] * s[c] + t[c];
    }, 64);
}

template <class T>
void film_backward(const T* x, const T* s, const T* dy, T* dx, T* ds, T* dt, i64 voxels, i64 C) {
    if (dx) {
        parallel_for(voxels, [&](i64 v) {
            const T* g = dy + v * C;
            T* d = dx + v * C;
#pragma omp simd
            for (i64 c = 0; c < C; ++c) d[c] += g[c] * s[c];
        }, 64);
    }
    if (ds || dt) {
        for (i64 v = 0; v < voxels; ++v) {
            const T* g = dy + v * C;
            const T* xi = x + v * C;
            if (ds)
                for (i64 c = 0; c < C; ++c) ds[c] += g[c] * xi[c];
            if (dt)
                for (i64 c = 0; c < C; ++c) dt[c] += g[c];
        }
    }
}

// Batch norm over the spatial axes of a single DHWC volume.
template <class T>
struct BnSaved {
    Tensor<T> xhat;
    std::vector<double> invstd;
};

template <class T>
void batchnorm_forward_train(const Tensor<T>& x, const T* gamma, const T* beta, T* y,
                             T* running_mean, T* running_var, double momentum, double eps,
                             BnSaved<T>& saved) {
    const i64 C = x.dim(3);
    const i64 V = x.numel() / C;
    saved.xhat = Tensor<T>(x.shape());
    saved.invstd.assign(size_t(C), 0.0);
    std::vector<double> mean(size_t(C), 0.0), var(size_t(C), 0.0);
    const T* xd = x.data();
    for (i64 v = 0; v < V; ++v) {
        const T* xi = xd + v * C;
        for (i64 c = 0; c < C; ++c) mean[size_t(c)] += double(xi[c]);
    }
    for (i64 c = 0; c < C; ++c) mean[size_t(c)] /= double(V);
    for (i64 v = 0; v < V; ++v) {
        const T* xi = xd + v * C;
        for (i64 c = 0; c < C; ++c) {
            const double d = double(xi[c]) - mean[size_t(c)];
            var[size_t(c)] += d * d;
        }
    }
    for (i64 c = 0; c < C; ++c) {
        var[size_t(c)] /= double(V);
        saved.invstd[size_t(c)] = 1.0 / std::sqrt(var[size_t(c)] + eps);
        running_mean[c] = T((1.0 - momentum) * double(running_mean[c]) + momentum * mean[size_t(c)]);
        running_var[c] = T((1.0 - momentum) * double(running_var[c]) + momentum * var[size_t(c)]);
    }
    T* xh = saved.xhat.data();
    parallel_for(V, [&](i64 v) {
        const T* xi = xd + v * C;
        T* hi = xh + v * C;
        T* yi = y + v * C;
        for (i64 c = 0; c < C; ++c) {
            hi[c] = T((double(xi[c]) - mean[size_t(c)]) * saved.invstd[size_t(c)]);
            yi[c] = gamma[c] * hi[c] + beta[c];
        }
    }, 64);
}

template <class T>
void batchnorm_forward_eval(const Tensor<T>& x, const T* gamma, const T* beta,
                            const T* running_mean, const T* running_var, double eps, T* y) {
    const i64 C = x.dim(3);
    const i64 V = x.numel() / C;
    std::vector<T> scale(size_t(C)), shift(size_t(C));
    for (i64 c = 0; c < C; ++c) {
        const double inv = 1.0 / std::sqrt(double(running_var[c]) + eps);
        scale[size_t(c)] = T(double(gamma[c]) * inv);
        shift[size_t(c)] = T(double(beta[c]) - double(gamma[c]) * double(running_mean[c]) * inv);
    }
    const T* xd = x.data();
    parallel_for(V, [&](i64 v) {
        const T* xi = xd + v * C;
        T* yi = y + v * C;
#pragma omp simd
        for (i64 c = 0; c < C; ++c) yi[c] = xi[c] * scale[size_t(c)] + shift[size_t(c)];
    }, 64);
}

template <class T>
void batchnorm_backward(const BnSaved<T>& saved, const T* gamma, const Tensor<T>& dy, T* dx,
                        T* dgamma, T* dbeta) {
    const i64 C = saved.xhat.dim(3);
    const i64 V = saved.xhat.numel() / C;
    const T* xh = saved.xhat.data();
    const T* g = dy.data();
    std::vector<double> sum_g(size_t(C), 0.0), sum_gx(size_t(C), 0.0);
    for (i64 v = 0; v < V; ++v) {
        const T* gi = g + v * C;
        const T* hi = xh + v * C;
        for (i64 c = 0; c < C; ++c) {
            sum_g[size_t(c)] += double(gi[c]);
            sum_gx[size_t(c)] += double(gi[c]) * double(hi[c]);
        }
    }
    for (i64 c = 0; c < C; ++c) {
        if (dgamma) dgamma[c] += T(sum_gx[size_t(c)]);
        if (dbeta) dbeta[c] += T(sum_g[size_t(c)]);
    }
    if (!dx) return;
    std::vector<T> k1(size_t(C)), k2(size_t(C)), k3(size_t(C));
    for (i64 c = 0; c < C; ++c) {
        const double gs = double(gamma[c]) * saved.invstd[size_t(c)];
        k1[size_t(c)] = T(gs);
        k2[size_t(c)] = T(gs * sum_g[size_t(c)] / double(V));
        k3[size_t(c)] = T(gs * sum_gx[size_t(c)] / double(V));
    }
    parallel_for(V, [&](i64 v) {
        const T* gi = g + v * C;
        const T* hi = xh + v * C;
        T* di = dx + v * C;
#pragma omp simd
        for (i64 c = 0; c < C; ++c)
            di[c] += k1[size_t(c)] * gi[c] - k2[size_t(c)] - k3[size_t(c)] * hi[c];
    }, 64);
}

} // namespace cdpd::kernels
