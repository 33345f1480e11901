#pragma once

#include <functional>
#include <memory>
#include <string>
#include <vector>

#include "cdpd/core/tensor.hpp"
#include "cdpd/kernels/conv3d.hpp"
#include "cdpd/kernels/depthwise3d.hpp"
#include "cdpd/kernels/elementwise.hpp"
#include "cdpd/kernels/gemm.hpp"
#include "cdpd/kernels/resize.hpp"
#include "cdpd/kernels/tconv3d.hpp"

namespace cdpd::ag {

using kernels::Conv3dSpec;
using kernels::Dims3;

// Reverse-mode tape. Ops append nodes in execution order; backward() walks
// them in reverse. Leaves (inputs, parameters) persist across steps, interior
// nodes are dropped by clear().

template <class T>
struct Node {
    Tensor<T> value;
    Tensor<T> grad;
    bool requires_grad = false;
    std::string name;
    std::function<void()> backward;

    Tensor<T>& grad_buf() {
        if (grad.numel() != value.numel()) grad = Tensor<T>(value.shape());
        return grad;
    }
    bool has_grad() const { return grad.numel() == value.numel(); }
    void zero_grad() { grad = Tensor<T>(); }
};

template <class T>
using Value = std::shared_ptr<Node<T>>;

template <class T>
Value<T> make_leaf(Tensor<T> v, bool requires_grad = false, std::string name = {}) {
    auto n = std::make_shared<Node<T>>();
    n->value = std::move(v);
    n->requires_grad = requires_grad;
    n->name = std::move(name);
    return n;
}

template <class T>
class Graph {
public:
    bool grad_enabled = true;

    Value<T> track(Tensor<T> v, bool requires_grad) {
        auto n = make_leaf(std::move(v), requires_grad && grad_enabled);
        if (n->requires_grad) order_.push_back(n);
        return n;
    }

    void record(const Value<T>& n) { order_.push_back(n); }

    void backward(const Value<T>& loss) {
        CDPD_CHECK(loss->value.numel() == 1, "backward expects a scalar loss");
        loss->grad_buf().fill(T(1));
        for (auto it = order_.rbegin(); it != order_.rend(); ++it) {
            Node<T>& n = **it;
            if (n.backward && n.has_grad()) n.backward();
        }
    }

    void clear() { order_.clear(); }
    size_t size() const { return order_.size(); }

private:
    std::vector<Value<T>> order_;
};

namespace detail {

template <class T>
bool want_grad(const Graph<T>& g, std::initializer_list<const Value<T>*> ins) {
    if (!g.grad_enabled) return false;
    for (const Value<T>* v : ins)
        if (*v && (*v)->requires_grad) return true;
    return false;
}

template <class T>
void add_into(Tensor<T>& dst, const Tensor<T>& src) {
    T* d = dst.data();
    const T* s = src.data();
    const i64 n = src.numel();
    for (i64 i = 0; i < n; ++i) d[i] += s[i];
}

} // namespace detail

// ---- convolution ops -------------------------------------------------------

template <class T>
Value<T> conv3d(Graph<T>& g, const Value<T>& x, const Value<T>& w, const Value<T>& b,
                const Conv3dSpec& spec) {
    auto out = std::make_shared<Node<T>>();
    out->value = kernels::par::conv3d(x->value, w->value, b ? &b->value : nullptr, spec);
    if (detail::want_grad(g, {&x, &w, &b})) {
        out->requires_grad = true;
        Node<T>* self = out.get();
        out->backward = [self, x, w, b, spec]() {
            kernels::par::conv3d_backward(
                x->value, w->value, spec, self->grad,
                x->requires_grad ? &x->grad_buf() : nullptr,
                w->requires_grad ? &w->grad_buf() : nullptr,
                (b && b->requires_grad) ? &b->grad_buf() : nullptr);
        };
        g.record(out);
    }
    return out;
}

template <class T>
Value<T> tconv3d(Graph<T>& g, const Value<T>& x, const Value<T>& w, const Value<T>& b,
                 Dims3 stride) {
    auto out = std::make_shared<Node<T>>();
    out->value = kernels::par::tconv3d(x->value, w->value, b ? &b->value : nullptr, stride);
    if (detail::want_grad(g, {&x, &w, &b})) {
        out->requires_grad = true;
        Node<T>* self = out.get();
        out->backward = [self, x, w, b, stride]() {
            kernels::par::tconv3d_backward(
                x->value, w->value, stride, self->grad,
                x->requires_grad ? &x->grad_buf() : nullptr,
                w->requires_grad ? &w->grad_buf() : nullptr,
                (b && b->requires_grad) ? &b->grad_buf() : nullptr);
        };
        g.record(out);
    }
    return out;
}

template <class T>
Value<T> depthwise3d(Graph<T>& g, const Value<T>& x, const Value<T>& w, const Value<T>& b) {
    auto out = std::make_shared<Node<T>>();
    out->value = kernels::par::depthwise3d(x->value, w->value, b ? &b->value : nullptr);
    if (detail::want_grad(g, {&x, &w, &b})) {
        out->requires_grad = true;
        Node<T>* self = out.get();
        out->backward = [self, x, w, b]() {
            kernels::par::depthwise3d_backward(
                x->value, w->value, self->grad,
                x->requires_grad ? &x->grad_buf() : nullptr,
                w->requires_grad ? &w->grad_buf() : nullptr,
                (b && b->requires_grad) ? &b->grad_buf() : nullptr);
        };
        g.record(out);
    }
    return out;
}

// ---- pointwise / activation ------------------------------------------------

template <class T>
Value<T> leaky_relu(Graph<T>& g, const Value<T>& x, T slope) {
    auto out = std::make_shared<Node<T>>();
    out->value = Tensor<T>(x->value.shape());
    kernels::leaky_relu_forward(x->value.data(), out->value.data(), x->value.numel(), slope);
    if (detail::want_grad(g, {&x})) {
        out->requires_grad = true;
        Node<T>* self = out.get();
        out->backward = [self, x, slope]() {
            kernels::leaky_relu_backward(x->value.data(), self->grad.data(),
                                         x->grad_buf().data(), x->value.numel(), slope);
        };
        g.record(out);
    }
    return out;
}

template <class T>
Value<T> relu(Graph<T>& g, const Value<T>& x) {
    return leaky_relu(g, x, T(0));
}

template <class T>
Value<T> add(Graph<T>& g, const Value<T>& a, const Value<T>& b) {
    CDPD_CHECK(a->value.same_shape(b->value), "add: shape mismatch");
    auto out = std::make_shared<Node<T>>();
    out->value = a->value;
    detail::add_into(out->value, b->value);
    if (detail::want_grad(g, {&a, &b})) {
        out->requires_grad = true;
        Node<T>* self = out.get();
        out->backward = [self, a, b]() {
            if (a->requires_grad) detail::add_into(a->grad_buf(), self->grad);
            if (b->requires_grad) detail::add_into(b->grad_buf(), self->grad);
        };
        g.record(out);
    }
    return out;
}

template <class T>
Value<T> scale(Graph<T>& g, const Value<T>& x, T factor) {
    auto out = std::make_shared<Node<T>>();
    out->value = x->value;
    for (i64 i = 0; i < out->value.numel(); ++i) out->value[i] *= factor;
    if (detail::want_grad(g, {&x})) {
        out->requires_grad = true;
        Node<T>* self = out.get();
        out->backward = [self, x, factor]() {
            T* d = x->grad_buf().data();
            const T* s = self->grad.data();
            for (i64 i = 0; i < self->grad.numel(); ++i) d[i] += factor * s[i];
        };
        g.record(out);
    }
    return out;
}

template <class T>
Value<T> reshape(Graph<T>& g, const Value<T>& x, Shape shape) {
    auto out = std::make_shared<Node<T>>();
    out->value = x->value.reshaped(std::move(shape));
    if (detail::want_grad(g, {&x})) {
        out->requires_grad = true;
        Node<T>* self = out.get();
        out->backward = [self, x]() {
            T* d = x->grad_buf().data();
            const T* s = self->grad.data();
            for (i64 i = 0; i < self->grad.numel(); ++i) d[i] += s[i];
        };
        g.record(out);
    }
    return out;
}

// ---- linear algebra ---------------------------------------------------------

// x: {M,K}, w: {K,N}, b: {N} or null -> {M,N}
template <class T>
Value<T> linear(Graph<T>& g, const Value<T>& x, const Value<T>& w, const Value<T>& b) {
    const i64 M = x->value.dim(0), K = x->value.dim(1), N = w->value.dim(1);
    CDPD_CHECK(w->value.dim(0) == K, "linear: inner dim mismatch ", K, " vs ", w->value.dim(0));
    auto out = std::make_shared<Node<T>>();
    out->value = Tensor<T>({M, N});
    kernels::par::gemm_nn(M, N, K, x->value.data(), w->value.data(), out->value.data(), false);
    if (b) {
        CDPD_CHECK(b->value.numel() == N, "linear: bias size mismatch");
        for (i64 i = 0; i < M; ++i) {
            T* row = out->value.data() + i * N;
            for (i64 j = 0; j < N; ++j) row[j] += b->value[j];
        }
    }
    if (detail::want_grad(g, {&x, &w, &b})) {
        out->requires_grad = true;
        Node<T>* self = out.get();
        out->backward = [self, x, w, b, M, N, K]() {
            if (x->requires_grad) {
                std::vector<T> wt(size_t(K * N));
                kernels::par::transpose(K, N, w->value.data(), wt.data());
                kernels::par::gemm_nn(M, K, N, self->grad.data(), wt.data(),
                                      x->grad_buf().data(), true);
            }
            if (w->requires_grad)
                kernels::par::gemm_tn(M, N, K, x->value.data(), self->grad.data(),
                                      w->grad_buf().data(), true);
            if (b && b->requires_grad) {
                T* gb = b->grad_buf().data();
                for (i64 i = 0; i < M; ++i) {
                    const T* row = self->grad.data() + i * N;
                    for (i64 j = 0; j < N; ++j) gb[j] += row[j];
                }
            }
        };
        g.record(out);
    }
    return out;
}

// a: {M,K}, b: {N,K} -> {M,N} = a b^T
template <class T>
Value<T> matmul_nt(Graph<T>& g, const Value<T>& a, const Value<T>& b) {
    const i64 M = a->value.dim(0), K = a->value.dim(1), N = b->value.dim(0);
    CDPD_CHECK(b->value.dim(1) == K, "matmul_nt: inner dim mismatch");
    auto out = std::make_shared<Node<T>>();
    out->value = Tensor<T>({M, N});
    kernels::par::gemm_nt(M, N, K, a->value.data(), b->value.data(), out->value.data(), false);
    if (detail::want_grad(g, {&a, &b})) {
        out->requires_grad = true;
        Node<T>* self = out.get();
        out->backward = [self, a, b, M, N, K]() {
            if (a->requires_grad)
                kernels::par::gemm_nn(M, K, N, self->grad.data(), b->value.data(),
                                      a->grad_buf().data(), true);
            if (b->requires_grad)
                kernels::par::gemm_tn(M, K, N, self->grad.data(), a->value.data(),
                                      b->grad_buf().data(), true);
        };
        g.record(out);
    }
    return out;
}

// a: {M,K}, b: {K,N} -> {M,N}; like linear without bias but both sides may be
// activations.
template <class T>
Value<T> matmul_nn(Graph<T>& g, const Value<T>& a, const Value<T>& b) {
    return linear(g, a, b, Value<T>{});
}

template <class T>
Value<T> softmax_rows(Graph<T>& g, const Value<T>& x) {
    const i64 M = x->value.dim(0), N = x->value.dim(1);
    auto out = std::make_shared<Node<T>>();
    out->value = Tensor<T>({M, N});
    kernels::softmax_rows_forward(x->value.data(), out->value.data(), M, N);
    if (detail::want_grad(g, {&x})) {
        out->requires_grad = true;
        Node<T>* self = out.get();
        out->backward = [self, x, M, N]() {
            kernels::softmax_rows_backward(self->value.data(), self->grad.data(),
                                           x->grad_buf().data(), M, N);
        };
        g.record(out);
    }
    return out;
}

// ---- shape ops over DHWC volumes --------------------------------------------

template <class T>
Value<T> concat_ch(Graph<T>& g, const std::vector<Value<T>>& xs) {
    CDPD_CHECK(!xs.empty(), "concat_ch: empty input list");
    const int rank = xs[0]->value.rank();
    i64 ctotal = 0;
    i64 voxels = 1;
    Shape out_shape = xs[0]->value.shape();
    for (int i = 0; i < rank - 1; ++i) voxels *= out_shape[size_t(i)];
    for (const auto& x : xs) {
        CDPD_CHECK(x->value.rank() == rank, "concat_ch: rank mismatch");
        for (int i = 0; i < rank - 1; ++i)
            CDPD_CHECK(x->value.shape()[size_t(i)] == out_shape[size_t(i)],
                       "concat_ch: spatial mismatch at axis ", i);
        ctotal += x->value.shape().back();
    }
    out_shape.back() = ctotal;
    auto out = std::make_shared<Node<T>>();
    out->value = Tensor<T>(out_shape);
    i64 off = 0;
    for (const auto& x : xs) {
        const i64 c = x->value.shape().back();
        const T* src = x->value.data();
        T* dst = out->value.data();
        parallel_for(voxels, [&](i64 v) {
            std::memcpy(dst + v * ctotal + off, src + v * c, size_t(c) * sizeof(T));
        }, 128);
        off += c;
    }
    bool want = false;
    for (const auto& x : xs) want = want || x->requires_grad;
    if (g.grad_enabled && want) {
        out->requires_grad = true;
        Node<T>* self = out.get();
        auto inputs = xs;
        out->backward = [self, inputs, voxels, ctotal]() {
            i64 off2 = 0;
            for (const auto& x : inputs) {
                const i64 c = x->value.shape().back();
                if (x->requires_grad) {
                    T* dst = x->grad_buf().data();
                    const T* src = self->grad.data();
                    for (i64 v = 0; v < voxels; ++v) {
                        const T* s = src + v * ctotal + off2;
                        T* d = dst + v * c;
                        for (i64 i = 0; i < c; ++i) d[i] += s[i];
                    }
                }
                off2 += c;
            }
        };
        g.record(out);
    }
    return out;
}

template <class T>
Value<T> slice_ch(Graph<T>& g, const Value<T>& x, i64 from, i64 count) {
    const i64 C = x->value.shape().back();
    CDPD_CHECK(from >= 0 && from + count <= C, "slice_ch: [", from, ", ", from + count,
               ") out of range for ", C, " channels");
    Shape out_shape = x->value.shape();
    out_shape.back() = count;
    i64 voxels = x->value.numel() / C;
    auto out = std::make_shared<Node<T>>();
    out->value = Tensor<T>(out_shape);
    const T* src = x->value.data();
    T* dst = out->value.data();
    for (i64 v = 0; v < voxels; ++v)
        std::memcpy(dst + v * count, src + v * C + from, size_t(count) * sizeof(T));
    if (detail::want_grad(g, {&x})) {
        out->requires_grad = true;
        Node<T>* self = out.get();
        out->backward = [self, x, from, count, voxels, C]() {
            T* d = x->grad_buf().data();
            const T* s = self->grad.data();
            for (i64 v = 0; v < voxels; ++v) {
                T* drow = d + v * C + from;
                const T* srow = s + v * count;
                for (i64 i = 0; i < count; ++i) drow[i] += srow[i];
            }
        };
        g.record(out);
    }
    return out;
}

template <class T>
Value<T> avgpool3d(Graph<T>& g, const Value<T>& x, Dims3 factor) {
    auto out = std::make_shared<Node<T>>();
    out->value = kernels::par::avgpool3d(x->value, factor);
    if (detail::want_grad(g, {&x})) {
        out->requires_grad = true;
        Node<T>* self = out.get();
        Dims3 in{x->value.dim(0), x->value.dim(1), x->value.dim(2)};
        out->backward = [self, x, factor, in]() {
            kernels::par::avgpool3d_backward(in, factor, self->grad, &x->grad_buf());
        };
        g.record(out);
    }
    return out;
}

template <class T>
Value<T> resize_trilinear(Graph<T>& g, const Value<T>& x, Dims3 out_dims) {
    auto out = std::make_shared<Node<T>>();
    out->value = kernels::par::resize_trilinear(x->value, out_dims);
    if (detail::want_grad(g, {&x})) {
        out->requires_grad = true;
        Node<T>* self = out.get();
        Dims3 in{x->value.dim(0), x->value.dim(1), x->value.dim(2)};
        out->backward = [self, x, in]() {
            kernels::par::resize_trilinear_backward(in, self->grad, &x->grad_buf());
        };
        g.record(out);
    }
    return out;
}

// ---- text conditioning ------------------------------------------------------

// w: {C, K} parameter, u: {K} constant embedding, b: {C} -> {C} = w u + b.
template <class T>
Value<T> affine_vec(Graph<T>& g, const Value<T>& w, const Value<T>& b, const Tensor<T>& u) {
    const i64 C = w->value.dim(0), K = w->value.dim(1);
    CDPD_CHECK(u.numel() == K, "affine_vec: embedding dim mismatch ", u.numel(), " vs ", K);
    auto out = std::make_shared<Node<T>>();
    out->value = Tensor<T>({C});
    for (i64 c = 0; c < C; ++c) {
        double acc = double(b->value[c]);
        const T* row = w->value.data() + c * K;
        for (i64 k = 0; k < K; ++k) acc += double(row[k]) * double(u[k]);
        out->value[c] = T(acc);
    }
    if (detail::want_grad(g, {&w, &b})) {
        out->requires_grad = true;
        Node<T>* self = out.get();
        Tensor<T> uc = u;
        out->backward = [self, w, b, uc, C, K]() {
            if (w->requires_grad) {
                T* gw = w->grad_buf().data();
                for (i64 c = 0; c < C; ++c) {
                    const T gc = self->grad[c];
                    T* row = gw + c * K;
#pragma omp simd
                    for (i64 k = 0; k < K; ++k) row[k] += gc * uc[k];
                }
            }
            if (b->requires_grad) {
                T* gb = b->grad_buf().data();
                for (i64 c = 0; c < C; ++c) gb[c] += self->grad[c];
            }
        };
        g.record(out);
    }
    return out;
}

// y[v,c] = x[v,c] * s[c] + t[c] with gradients to all three.
template <class T>
Value<T> film(Graph<T>& g, const Value<T>& x, const Value<T>& s, const Value<T>& t) {
    const i64 C = x->value.shape().back();
    CDPD_CHECK(s->value.numel() == C && t->value.numel() == C,
               "film: scale/shift must have ", C, " channels");
    const i64 voxels = x->value.numel() / C;
    auto out = std::make_shared<Node<T>>();
    out->value = Tensor<T>(x->value.shape());
    kernels::film_forward(x->value.data(), s->value.data(), t->value.data(), out->value.data(),
                          voxels, C);
    if (detail::want_grad(g, {&x, &s, &t})) {
        out->requires_grad = true;
        Node<T>* self = out.get();
        out->backward = [self, x, s, t, voxels, C]() {
            kernels::film_backward(x->value.data(), s->value.data(), self->grad.data(),
                                   x->requires_grad ? x->grad_buf().data() : nullptr,
                                   s->requires_grad ? s->grad_buf().data() : nullptr,
                                   t->requires_grad ? t->grad_buf().data() : nullptr, voxels, C);
        };
        g.record(out);
    }
    return out;
}

// ---- batch norm --------------------------------------------------------------

template <class T>
Value<T> batchnorm3d(Graph<T>& g, const Value<T>& x, const Value<T>& gamma, const Value<T>& beta,
                     Tensor<T>& running_mean, Tensor<T>& running_var, double momentum, double eps,
                     bool training) {
    auto out = std::make_shared<Node<T>>();
    out->value = Tensor<T>(x->value.shape());
    if (training) {
        auto saved = std::make_shared<kernels::BnSaved<T>>();
        kernels::batchnorm_forward_train(x->value, gamma->value.data(), beta->value.data(),
                                         out->value.data(), running_mean.data(),
                                         running_var.data(), momentum, eps, *saved);
        if (detail::want_grad(g, {&x, &gamma, &beta})) {
            out->requires_grad = true;
            Node<T>* self = out.get();
            out->backward = [self, x, gamma, beta, saved]() {
                kernels::batchnorm_backward(
                    *saved, gamma->value.data(), self->grad,
                    x->requires_grad ? x->grad_buf().data() : nullptr,
                    gamma->requires_grad ? gamma->grad_buf().data() : nullptr,
                    beta->requires_grad ? beta->grad_buf().data() : nullptr);
            };
            g.record(out);
        }
    } else {
        kernels::batchnorm_forward_eval(x->value, gamma->value.data(), beta->value.data(),
                                        running_mean.data(), running_var.data(), eps,
                                        out->value.data());
        CDPD_CHECK(!g.grad_enabled || !x->requires_grad,
                   "batchnorm3d: eval mode has no backward path");
    }
    return out;
}

} // namespace cdpd::ag
