#pragma once

#include "cdpd/nn/modules.hpp"

namespace cdpd::nn {

// Multi-head cross-attention between the dense-backbone branch (queries) and
// the CNN branch (keys/values) at one resolution level, followed by a 1x1x1
// projection of [attended, cnn] back to the level width.
//
// Full-resolution grids at the two finest levels are average-pooled to at most
// max_tokens positions before attention and the result is resized back.
template <class T>
struct CrossAttention {
    i64 channels = 0;
    int heads = 4;
    i64 head_dim = 0;
    i64 max_tokens = 1728; // 12^3
    bool pooled = false;
    std::vector<Linear<T>> wq, wk, wv; // per head, C -> d
    Linear<T> wo;                      // C -> C
    Conv3d<T> fuse;                    // 2C -> C

    static CrossAttention make(ParamStore<T>& ps, const std::string& name,
                               const std::string& group, i64 channels, int heads, bool pooled,
                               Rng& rng) {
        CDPD_CHECK(channels % heads == 0, "attention: channels ", channels,
                   " not divisible by heads ", heads);
        CrossAttention m;
        m.channels = channels;
        m.heads = heads;
        m.head_dim = channels / heads;
        m.pooled = pooled;
        for (int h = 0; h < heads; ++h) {
            const std::string hn = name + ".h" + std::to_string(h);
            m.wq.push_back(Linear<T>::make(ps, hn + ".wq", group, channels, m.head_dim, false, rng));
            m.wk.push_back(Linear<T>::make(ps, hn + ".wk", group, channels, m.head_dim, false, rng));
            m.wv.push_back(Linear<T>::make(ps, hn + ".wv", group, channels, m.head_dim, false, rng));
        }
        m.wo = Linear<T>::make(ps, name + ".wo", group, channels, channels, true, rng);
        m.fuse = Conv3d<T>::make(ps, name + ".fuse", group, 2 * channels, channels, {1, 1, 1},
                                 {1, 1, 1}, true, rng);
        return m;
    }

    Dims3 pool_factor(Dims3 dims) const {
        const i64 cap = 12;
        return {ceil_div(dims[0], cap), ceil_div(dims[1], cap), ceil_div(dims[2], cap)};
    }

    // dense and cnn volumes must already share the level's spatial dims.
    Value<T> forward(Graph<T>& g, const Value<T>& dense, const Value<T>& cnn) const {
        CDPD_CHECK(dense->value.shape() == cnn->value.shape(),
                   "attention: branch shapes differ, ", shape_str(dense->value.shape()), " vs ",
                   shape_str(cnn->value.shape()));
        const Dims3 dims{cnn->value.dim(0), cnn->value.dim(1), cnn->value.dim(2)};
        Value<T> q_vol = dense, kv_vol = cnn;
        Dims3 adims = dims;
        if (pooled) {
            const Dims3 f = pool_factor(dims);
            if (f != Dims3{1, 1, 1}) {
                q_vol = ag::avgpool3d(g, dense, f);
                kv_vol = ag::avgpool3d(g, cnn, f);
                adims = {q_vol->value.dim(0), q_vol->value.dim(1), q_vol->value.dim(2)};
            }
        }
        const i64 M = adims[0] * adims[1] * adims[2];
        Value<T> qt = ag::reshape(g, q_vol, {M, channels});
        Value<T> kt = ag::reshape(g, kv_vol, {M, channels});
        Value<T> attended = attend_tokens(g, qt, kt);
        Value<T> avol = ag::reshape(g, attended, {adims[0], adims[1], adims[2], channels});
        if (adims != dims) avol = ag::resize_trilinear(g, avol, dims);
        return fuse.forward(g, ag::concat_ch(g, {avol, cnn}));
    }

    // Token-level attention: queries from one sequence, keys/values from the
    // other; exposed separately so the equation tests can drive it directly.
    Value<T> attend_tokens(Graph<T>& g, const Value<T>& q_tokens, const Value<T>& kv_tokens) const {
        std::vector<Value<T>> head_outs;
        const T inv_sqrt_d = T(1.0 / std::sqrt(double(head_dim)));
        for (int h = 0; h < heads; ++h) {
            Value<T> q = wq[size_t(h)].forward(g, q_tokens);
            Value<T> k = wk[size_t(h)].forward(g, kv_tokens);
            Value<T> v = wv[size_t(h)].forward(g, kv_tokens);
            Value<T> logits = ag::scale(g, ag::matmul_nt(g, q, k), inv_sqrt_d);
            Value<T> weights = ag::softmax_rows(g, logits);
            head_outs.push_back(ag::matmul_nn(g, weights, v));
        }
        return wo.forward(g, ag::concat_ch(g, head_outs));
    }
};

} // namespace cdpd::nn
