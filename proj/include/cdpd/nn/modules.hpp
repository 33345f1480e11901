#pragma once

#include <cmath>
#include <map>

#include "cdpd/autograd/autograd.hpp"

namespace cdpd::nn {

using ag::Graph;
using ag::Value;
using kernels::Conv3dSpec;
using kernels::Dims3;

// Every parameter and persistent buffer lives here under a unique name.
// Groups partition parameters by subsystem so the trainer can report
// per-group gradient norms and the frozen groups can be checksummed.
template <class T>
struct ParamStore {
    struct Entry {
        std::string name;
        std::string group;
        Value<T> v;
        bool trainable = true;
    };
    std::vector<Entry> entries;

    Value<T> add(const std::string& name, const std::string& group, Tensor<T> init,
                 bool trainable) {
        for (const auto& e : entries)
            CDPD_CHECK(e.name != name, "duplicate parameter name: ", name);
        auto v = ag::make_leaf(std::move(init), trainable, name);
        entries.push_back({name, group, v, trainable});
        return v;
    }

    Entry* find(const std::string& name) {
        for (auto& e : entries)
            if (e.name == name) return &e;
        return nullptr;
    }

    i64 count_trainable() const {
        i64 n = 0;
        for (const auto& e : entries)
            if (e.trainable) n += e.v->value.numel();
        return n;
    }

    void zero_grads() {
        for (auto& e : entries)
            if (e.trainable) e.v->zero_grad();
    }

    u64 group_checksum(const std::string& group) const {
        u64 h = 0xcbf29ce484222325ULL;
        for (const auto& e : entries)
            if (e.group == group) h ^= tensor_checksum(e.v->value) * 0x100000001b3ULL;
        return h;
    }

    std::map<std::string, double> group_grad_norms() const {
        std::map<std::string, double> sums;
        for (const auto& e : entries) {
            if (!e.trainable) continue;
            double s = sums.count(e.group) ? sums[e.group] : 0.0;
            if (e.v->has_grad()) {
                const Tensor<T>& grad = e.v->grad;
                for (i64 i = 0; i < grad.numel(); ++i) s += double(grad[i]) * double(grad[i]);
            }
            sums[e.group] = s;
        }
        for (auto& [k, v] : sums) v = std::sqrt(v);
        return sums;
    }
};

template <class T>
Tensor<T> he_normal(Shape shape, i64 fan_in, Rng& rng) {
    return Tensor<T>::randn(std::move(shape), rng, 0.0, std::sqrt(2.0 / double(fan_in)));
}

template <class T>
struct Conv3d {
    Value<T> w, b;
    Conv3dSpec spec;

    static Conv3d make(ParamStore<T>& ps, const std::string& name, const std::string& group,
                       i64 cin, i64 cout, Dims3 kernel, Dims3 stride, bool bias, Rng& rng,
                       bool trainable = true) {
        Conv3d m;
        m.spec = Conv3dSpec{kernel, stride, kernels::same_padding(kernel)};
        const i64 fan_in = cin * kernel[0] * kernel[1] * kernel[2];
        m.w = ps.add(name + ".w", group,
                     he_normal<T>({kernel[0], kernel[1], kernel[2], cin, cout}, fan_in, rng),
                     trainable);
        if (bias) m.b = ps.add(name + ".b", group, Tensor<T>({cout}), trainable);
        return m;
    }

    Value<T> forward(Graph<T>& g, const Value<T>& x) const { return ag::conv3d(g, x, w, b, spec); }
};

template <class T>
struct TConv3d {
    Value<T> w, b;
    Dims3 stride;

    static TConv3d make(ParamStore<T>& ps, const std::string& name, const std::string& group,
                        i64 cin, i64 cout, Dims3 stride, Rng& rng) {
        TConv3d m;
        m.stride = stride;
        const i64 fan_in = cin;
        m.w = ps.add(name + ".w", group,
                     he_normal<T>({stride[0], stride[1], stride[2], cin, cout}, fan_in, rng),
                     true);
        m.b = ps.add(name + ".b", group, Tensor<T>({cout}), true);
        return m;
    }

    Value<T> forward(Graph<T>& g, const Value<T>& x) const {
        return ag::tconv3d(g, x, w, b, stride);
    }
};

template <class T>
struct BatchNorm3d {
    Value<T> gamma, beta;
    Value<T> running_mean, running_var; // buffers, never trained
    double momentum = 0.1;
    double eps = 1e-5;

    static BatchNorm3d make(ParamStore<T>& ps, const std::string& name, const std::string& group,
                            i64 c, Rng&) {
        BatchNorm3d m;
        m.gamma = ps.add(name + ".gamma", group, Tensor<T>::full({c}, T(1)), true);
        m.beta = ps.add(name + ".beta", group, Tensor<T>({c}), true);
        m.running_mean = ps.add(name + ".running_mean", group, Tensor<T>({c}), false);
        m.running_var = ps.add(name + ".running_var", group, Tensor<T>::full({c}, T(1)), false);
        return m;
    }

    Value<T> forward(Graph<T>& g, const Value<T>& x, bool training) const {
        return ag::batchnorm3d(g, x, gamma, beta, running_mean->value, running_var->value,
                               momentum, eps, training);
    }
};

// Conv-BN-LeakyReLU, the encoder/decoder building block.
template <class T>
struct ConvBlock {
    Conv3d<T> conv;
    BatchNorm3d<T> bn;
    T slope = T(0.01);

    static ConvBlock make(ParamStore<T>& ps, const std::string& name, const std::string& group,
                          i64 cin, i64 cout, Dims3 kernel, Dims3 stride, Rng& rng) {
        ConvBlock m;
        m.conv = Conv3d<T>::make(ps, name + ".conv", group, cin, cout, kernel, stride, false, rng);
        m.bn = BatchNorm3d<T>::make(ps, name + ".bn", group, cout, rng);
        return m;
    }

    Value<T> forward(Graph<T>& g, const Value<T>& x, bool training) const {
        return ag::leaky_relu(g, bn.forward(g, conv.forward(g, x), training), slope);
    }
};

template <class T>
struct Linear {
    Value<T> w, b;

    static Linear make(ParamStore<T>& ps, const std::string& name, const std::string& group,
                       i64 in, i64 out, bool bias, Rng& rng, bool trainable = true) {
        Linear m;
        m.w = ps.add(name + ".w", group,
                     Tensor<T>::randn({in, out}, rng, 0.0, std::sqrt(1.0 / double(in))),
                     trainable);
        if (bias) m.b = ps.add(name + ".b", group, Tensor<T>({out}), trainable);
        return m;
    }

    Value<T> forward(Graph<T>& g, const Value<T>& x) const { return ag::linear(g, x, w, b); }
};

} // namespace cdpd::nn
